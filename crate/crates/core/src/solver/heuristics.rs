//! Choices of the distribution γ whose marginals seed the bound.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::distributions::SymmetryGroup;
use crate::numeric::{entropy, logsumexp};
use crate::tensor_core::Support;

use super::simplex::{SimplexOptions, SimplexProgram, SimplexResult};

/// Marginal-entropy weight in `ln γ_V + ln γ_B`.
const SIDE_WEIGHT: f64 = 1.0 / 3.0;

#[derive(Clone, Debug)]
pub struct AscentResult {
    pub weights: Vec<f64>,
    pub value: f64,
    /// First-order stationarity measure: largest `|γ_s (g_s - <γ,g>)|`.
    pub stationarity: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `max ln γ_V + ln γ_B` over the simplex.
pub fn heuristic2(support: &Support, log_values: &[f64]) -> SimplexResult {
    SimplexProgram::new(support, log_values, SIDE_WEIGHT, 0.0).solve(None, &SimplexOptions::default())
}

/// `max ln γ_V + ln γ_B + H(γ)/2` over the simplex.
pub fn heuristic4(support: &Support, log_values: &[f64]) -> SimplexResult {
    SimplexProgram::new(support, log_values, SIDE_WEIGHT, 0.5).solve(None, &SimplexOptions::default())
}

/// Deterministic start points: uniform, an optional anchor, then seeded
/// Dirichlet(1) draws, each symmetrised when a group is given.
pub fn start_points(
    n: usize,
    anchor: Option<&[f64]>,
    count: usize,
    seed: u64,
    group: Option<&SymmetryGroup>,
) -> Vec<Vec<f64>> {
    let mut out = vec![vec![1.0 / n as f64; n]];
    if let Some(a) = anchor {
        out.push(a.to_vec());
    }
    let mut k = 0u64;
    while out.len() < count.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k + 1)));
        k += 1;
        let draw: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
        let t: f64 = draw.iter().sum();
        let mut v: Vec<f64> = draw.into_iter().map(|x: f64| x / t).collect();
        if let Some(g) = group {
            v = g.average(&v);
        }
        out.push(v);
    }
    out.truncate(count.max(1));
    out
}

/// Objective of heuristic 3 in log form: `ln(γ_V γ_B + λ / γ_N)`.
pub struct Heuristic3<'a> {
    program: SimplexProgram<'a>,
    ln_lambda: f64,
}

impl<'a> Heuristic3<'a> {
    pub fn new(support: &'a Support, log_values: &'a [f64], lambda: f64) -> Self {
        Heuristic3 {
            program: SimplexProgram::new(support, log_values, SIDE_WEIGHT, 0.0),
            ln_lambda: lambda.ln(),
        }
    }

    pub fn value(&self, g: &[f64]) -> f64 {
        logsumexp(&[self.program.value(g), self.ln_lambda - entropy(g)])
    }

    fn gradient(&self, g: &[f64]) -> Vec<f64> {
        let a = self.program.value(g);
        let b = self.ln_lambda - entropy(g);
        let m = a.max(b);
        let (wa, wb) = ((a - m).exp(), (b - m).exp());
        let (wa, wb) = (wa / (wa + wb), wb / (wa + wb));
        let ga = self.program.gradient(g);
        ga.iter()
            .zip(g)
            .map(|(d, &x)| wa * d + wb * (x.max(1e-300).ln() + 1.0))
            .collect()
    }
}

/// Exponentiated-gradient ascent with backtracking on a smooth objective over
/// the simplex.
pub fn mirror_ascent(
    value: &dyn Fn(&[f64]) -> f64,
    gradient: &dyn Fn(&[f64]) -> Vec<f64>,
    start: &[f64],
    group: Option<&SymmetryGroup>,
    max_iter: usize,
) -> AscentResult {
    let mut g = start.to_vec();
    let mut f = value(&g);
    let mut eta = 1.0;
    let mut quiet = 0;
    let mut iterations = 0;
    let mut stationarity = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        let mut grad = gradient(&g);
        if let Some(gr) = group {
            grad = gr.average(&grad);
        }
        let mean: f64 = grad.iter().zip(&g).map(|(a, b)| a * b).sum();
        stationarity = grad
            .iter()
            .zip(&g)
            .map(|(d, x)| (x * (d - mean)).abs())
            .fold(0.0, f64::max);
        if stationarity < 1e-13 {
            break;
        }
        let mut improved = false;
        for _ in 0..50 {
            let logs: Vec<f64> = g
                .iter()
                .zip(&grad)
                .map(|(x, d)| x.max(1e-300).ln() + eta * (d - mean))
                .collect();
            let lz = logsumexp(&logs);
            let trial: Vec<f64> = logs.iter().map(|l| (l - lz).exp().max(1e-300)).collect();
            let t: f64 = trial.iter().sum();
            let trial: Vec<f64> = trial.into_iter().map(|x| x / t).collect();
            let ft = value(&trial);
            let lin: f64 = grad
                .iter()
                .zip(trial.iter().zip(&g))
                .map(|(d, (a, b))| d * (a - b))
                .sum();
            if ft.is_finite() && ft >= f + 1e-4 * lin.max(0.0) && ft >= f {
                let gain = ft - f;
                g = trial;
                f = ft;
                improved = true;
                eta = (eta * 1.5).min(1e6);
                if gain <= 1e-14 * (1.0 + f.abs()) {
                    quiet += 1;
                } else {
                    quiet = 0;
                }
                break;
            }
            eta *= 0.5;
        }
        if !improved || quiet >= 20 {
            break;
        }
    }
    AscentResult {
        weights: g,
        value: f,
        converged: stationarity < 1e-7,
        stationarity,
        iterations,
    }
}

/// Heuristic 3 for one λ > 0 from one start.
pub fn heuristic3_from(
    support: &Support,
    log_values: &[f64],
    lambda: f64,
    start: &[f64],
    group: Option<&SymmetryGroup>,
    max_iter: usize,
) -> AscentResult {
    let h = Heuristic3::new(support, log_values, lambda);
    mirror_ascent(&|g| h.value(g), &|g| h.gradient(g), start, group, max_iter)
}

/// Best local maximum of heuristic 3 over the given starts. `λ = 0` is the
/// concave heuristic 2.
pub fn heuristic3(
    support: &Support,
    log_values: &[f64],
    lambda: f64,
    starts: &[Vec<f64>],
    group: Option<&SymmetryGroup>,
    max_iter: usize,
) -> AscentResult {
    if lambda == 0.0 {
        let r = heuristic2(support, log_values);
        return AscentResult {
            weights: r.weights,
            value: r.value,
            stationarity: r.gap,
            iterations: r.iterations,
            converged: r.converged,
        };
    }
    starts
        .par_iter()
        .map(|s| heuristic3_from(support, log_values, lambda, s, group, max_iter))
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one start")
}

/// Heuristic 1: `γ_s ∝ exp(θ_X[i] + θ_Y[j] + θ_Z[k])`, ascending
/// `ln γ_V + ln γ_B` in θ.
pub fn heuristic1_from(support: &Support, log_values: &[f64], theta0: &[f64], max_iter: usize) -> AscentResult {
    let program = SimplexProgram::new(support, log_values, SIDE_WEIGHT, 0.0);
    let offs = [0, support.labels(0), support.labels(0) + support.labels(1)];
    let idx = |s: usize| -> [usize; 3] {
        let t = support.triple(s);
        [0, 1, 2].map(|side| offs[side] + t[side] as usize)
    };
    let gamma = |theta: &[f64]| -> Vec<f64> {
        let logs: Vec<f64> = (0..support.len())
            .map(|s| idx(s).iter().map(|&k| theta[k]).sum())
            .collect();
        let lz = logsumexp(&logs);
        logs.iter().map(|l| (l - lz).exp()).collect()
    };
    let mut theta = theta0.to_vec();
    let mut g = gamma(&theta);
    let mut f = program.value(&g);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut norm = f64::INFINITY;
    let mut quiet = 0;
    while iterations < max_iter {
        iterations += 1;
        let grad_g = program.gradient(&g);
        let mean: f64 = grad_g.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut grad = vec![0.0; theta.len()];
        for s in 0..support.len() {
            let w = g[s] * (grad_g[s] - mean);
            for k in idx(s) {
                grad[k] += w;
            }
        }
        norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            break;
        }
        let mut improved = false;
        for _ in 0..50 {
            let trial: Vec<f64> = theta.iter().zip(&grad).map(|(t, d)| t + step * d).collect();
            let gt = gamma(&trial);
            let ft = program.value(&gt);
            if ft.is_finite() && ft >= f + 1e-4 * step * norm * norm {
                let gain = ft - f;
                theta = trial;
                g = gt;
                f = ft;
                improved = true;
                step *= 2.0;
                quiet = if gain <= 1e-14 * (1.0 + f.abs()) { quiet + 1 } else { 0 };
                break;
            }
            step *= 0.5;
        }
        if !improved || quiet >= 20 {
            break;
        }
    }
    AscentResult {
        weights: g,
        value: f,
        stationarity: norm,
        iterations,
        converged: norm < 1e-7,
    }
}

/// Heuristic 1 from θ = 0 plus seeded Gaussian starts.
pub fn heuristic1(support: &Support, log_values: &[f64], starts: usize, seed: u64, max_iter: usize) -> AscentResult {
    let dim = support.total_labels();
    let thetas: Vec<Vec<f64>> = (0..starts.max(1))
        .map(|k| {
            if k == 0 {
                vec![0.0; dim]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xA5A5 * k as u64));
                (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
            }
        })
        .collect();
    thetas
        .par_iter()
        .map(|t| heuristic1_from(support, log_values, t, max_iter))
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one start")
}
