//! Independent oracles shared by the integration tests. Nothing here calls
//! the solvers under test.

#![allow(dead_code)]

use laserlab_core::tensor_core::{Support, Triple};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn entropy(w: &[f64]) -> f64 {
    w.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Orthonormal basis of the kernel of the map from weights to the three
/// marginals, from the eigenvectors of `A^T A` with zero eigenvalue.
pub fn kernel_basis(support: &Support) -> Vec<Vec<f64>> {
    let n = support.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for side in 0..3 {
        let labels = support.labels(side);
        for l in 0..labels {
            let row: Vec<f64> = support
                .triples()
                .iter()
                .map(|t| if t[side] as usize == l { 1.0 } else { 0.0 })
                .collect();
            if row.iter().any(|&x| x != 0.0) {
                rows.push(row);
            }
        }
    }
    let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let ata = a.transpose() * &a;
    let eig = SymmetricEigen::new(ata);
    (0..n)
        .filter(|&i| eig.eigenvalues[i].abs() < 1e-9)
        .map(|i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect()
}

/// Maximum of a concave `f` on `[lo, hi]`: coarse scan, then golden section
/// around the best grid point.
pub fn golden_max(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-15 {
        return (lo, f(lo));
    }
    let grid = 400;
    let mut best = (lo, f(lo));
    for k in 1..=grid {
        let x = lo + (hi - lo) * k as f64 / grid as f64;
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let step = (hi - lo) / grid as f64;
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let v = f(x);
    if v >= best.1 {
        (x, v)
    } else {
        best
    }
}

fn point(alpha: &[f64], basis: &[Vec<f64>], coords: &[f64]) -> Vec<f64> {
    let mut p = alpha.to_vec();
    for (k, c) in basis.iter().zip(coords) {
        for (x, v) in p.iter_mut().zip(k) {
            *x += c * v;
        }
    }
    p.iter().map(|&x| x.max(0.0)).collect()
}

/// Interval of `s` with `base + s dir >= 0`.
fn line_range(base: &[f64], dir: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (&b, &d) in base.iter().zip(dir) {
        if d > 1e-14 {
            lo = lo.max(-b / d);
        } else if d < -1e-14 {
            hi = hi.min(-b / d);
        }
    }
    (lo, hi)
}

/// Brute-force maximum of a concave `f` over `{α + K c >= 0}` for a kernel of
/// dimension at most two. Returns `None` for larger kernels.
pub fn max_over_kernel(alpha: &[f64], basis: &[Vec<f64>], f: &dyn Fn(&[f64]) -> f64) -> Option<f64> {
    match basis.len() {
        0 => Some(f(alpha)),
        1 => {
            let (lo, hi) = line_range(alpha, &basis[0]);
            let g = |s: f64| f(&point(alpha, basis, &[s]));
            Some(golden_max(&g, lo, hi).1)
        }
        2 => {
            // Range of the first coordinate: extreme vertices of the polygon.
            let n = alpha.len();
            let (k1, k2) = (&basis[0], &basis[1]);
            let (mut ulo, mut uhi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..n {
                for j in i + 1..n {
                    let det = k1[i] * k2[j] - k1[j] * k2[i];
                    if det.abs() < 1e-12 {
                        continue;
                    }
                    let u = (-alpha[i] * k2[j] + alpha[j] * k2[i]) / det;
                    let v = (-k1[i] * alpha[j] + k1[j] * alpha[i]) / det;
                    let ok = (0..n).all(|s| alpha[s] + u * k1[s] + v * k2[s] >= -1e-10);
                    if ok {
                        ulo = ulo.min(u);
                        uhi = uhi.max(u);
                    }
                }
            }
            let inner = |u: f64| {
                let base: Vec<f64> = (0..n).map(|s| alpha[s] + u * k1[s]).collect();
                let (lo, hi) = line_range(&base, k2);
                if lo > hi {
                    return f64::NEG_INFINITY;
                }
                let g = |v: f64| f(&point(alpha, basis, &[u, v]));
                golden_max(&g, lo, hi).1
            };
            Some(golden_max(&inner, ulo, uhi).1)
        }
        _ => None,
    }
}

/// Random support with `3..=max_len` distinct triples over small label sets,
/// together with a strictly positive distribution on it.
pub fn random_instance(rng: &mut ChaCha8Rng, max_len: usize) -> (Support, Vec<f64>) {
    loop {
        let labels = [
            rng.random_range(2..5u32),
            rng.random_range(2..5u32),
            rng.random_range(2..5u32),
        ];
        let cube = (labels[0] * labels[1] * labels[2]) as usize;
        let len = rng.random_range(3..=max_len.min(cube));
        let picks = sample(rng, cube, len);
        let triples: Vec<Triple> = picks
            .iter()
            .map(|p| {
                let p = p as u32;
                [p % labels[0], (p / labels[0]) % labels[1], p / (labels[0] * labels[1])]
            })
            .collect();
        let Ok(support) = Support::new(triples) else { continue };
        let raw: Vec<f64> = (0..support.len()).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        return (support, raw.iter().map(|x| x / total).collect());
    }
}

/// The six permutations of `(0, 1, 2)`, even ones first.
pub fn toy_support() -> Support {
    Support::new(vec![[0, 1, 2], [1, 2, 0], [2, 0, 1], [0, 2, 1], [2, 1, 0], [1, 0, 2]]).unwrap()
}

/// `ln V` lower bound at `t = 1` for the symmetric family: mass `a` on each
/// corner triple and `b = 1/3 - a` on each middle triple. The marginals pin
/// the distribution, so the bound is `3 b τ ln q + H(2a + b, 2b, a)`.
pub fn cw1_symmetric_bound(q: u32, tau: f64) -> f64 {
    let f = |a: f64| {
        let b = 1.0 / 3.0 - a;
        3.0 * b * tau * (q as f64).ln() + entropy(&[2.0 * a + b, 2.0 * b, a])
    };
    golden_max(&f, 0.0, 1.0 / 3.0).1
}

/// `3 τ*` where τ* is the smallest τ with the symmetric bound at least
/// `ln(q + 2)`.
pub fn cw1_grid_omega(q: u32) -> f64 {
    let target = ((q + 2) as f64).ln();
    let (mut lo, mut hi) = (2.0 / 3.0, 1.0);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if cw1_symmetric_bound(q, mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    3.0 * hi
}
