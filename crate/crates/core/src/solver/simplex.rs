//! Concave maximisation over the probability simplex on a support:
//!
//! `F(γ) = Σ c_s γ_s + b Σ_sides H(marginal) + μ H(γ)`
//!
//! solved by a log-barrier path-following Newton method. The Hessian of the
//! marginal-entropy part has the low-rank structure `Aᵀ W A` (one row of `A`
//! per block label), so each Newton system reduces to a labels-by-labels
//! solve via the Woodbury identity. Small supports solve the full bordered
//! system instead: near the end of the path the Woodbury form loses the
//! digits the last few Newton steps need.

use nalgebra::{DMatrix, DVector};

use crate::numeric::entropy;
use crate::tensor_core::Support;

/// Supports up to this size use the dense Newton system.
const DENSE_LIMIT: usize = 256;

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub barrier_start: f64,
    pub barrier_shrink: f64,
    /// Final barrier weight is `barrier_end / |S|`.
    pub barrier_end: f64,
    pub max_newton: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            barrier_start: 1e-2,
            barrier_shrink: 0.1,
            barrier_end: 1e-15,
            max_newton: 2_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub weights: Vec<f64>,
    pub value: f64,
    /// Frank-Wolfe gap `max_s g_s - <γ, g>` of the unbarriered objective.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub struct SimplexProgram<'a> {
    support: &'a Support,
    c: &'a [f64],
    b: f64,
    mu: f64,
    /// row of each (side, label) in the stacked label system
    row: [Vec<Option<usize>>; 3],
    rows: usize,
}

impl<'a> SimplexProgram<'a> {
    pub fn new(support: &'a Support, c: &'a [f64], b: f64, mu: f64) -> Self {
        let mut row: [Vec<Option<usize>>; 3] = Default::default();
        let mut rows = 0;
        for side in 0..3 {
            let mut used = vec![false; support.labels(side)];
            for t in support.triples() {
                used[t[side] as usize] = true;
            }
            row[side] = used
                .into_iter()
                .map(|u| {
                    u.then(|| {
                        rows += 1;
                        rows - 1
                    })
                })
                .collect();
        }
        SimplexProgram {
            support,
            c,
            b,
            mu,
            row,
            rows,
        }
    }

    fn rows_of(&self, s: usize) -> [usize; 3] {
        let t = self.support.triple(s);
        [0, 1, 2].map(|side| self.row[side][t[side] as usize].unwrap())
    }

    fn label_mass(&self, g: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.rows];
        for (s, &w) in g.iter().enumerate() {
            for r in self.rows_of(s) {
                p[r] += w;
            }
        }
        p
    }

    pub fn value(&self, g: &[f64]) -> f64 {
        let lin: f64 = g.iter().zip(self.c).map(|(w, c)| w * c).sum();
        let mut v = lin;
        if self.b != 0.0 {
            v += self.b * entropy(&self.label_mass(g));
        }
        if self.mu != 0.0 {
            v += self.mu * entropy(g);
        }
        v
    }

    /// Gradient of the unbarriered objective.
    pub fn gradient(&self, g: &[f64]) -> Vec<f64> {
        let p = self.label_mass(g);
        (0..g.len())
            .map(|s| {
                let mut d = self.c[s];
                if self.b != 0.0 {
                    for r in self.rows_of(s) {
                        d -= self.b * (p[r].ln() + 1.0);
                    }
                }
                if self.mu != 0.0 {
                    d -= self.mu * (g[s].ln() + 1.0);
                }
                d
            })
            .collect()
    }

    fn barrier_value(&self, g: &[f64], tau: f64) -> f64 {
        self.value(g) + tau * g.iter().map(|x| x.ln()).sum::<f64>()
    }

    /// Newton direction for the barrier problem restricted to `Σ d = 0`, and
    /// the squared Newton decrement.
    fn newton_direction(&self, g: &[f64], tau: f64) -> Option<(Vec<f64>, f64)> {
        let n = g.len();
        let p = self.label_mass(g);
        let mut grad = self.gradient(g);
        for s in 0..n {
            grad[s] += tau / g[s];
        }
        let dinv: Vec<f64> = g.iter().map(|&x| x * x / (self.mu * x + tau)).collect();
        if self.b != 0.0 && n <= DENSE_LIMIT {
            return self.dense_direction(g, &p, &grad, tau);
        }
        let solve: Box<dyn Fn(&[f64]) -> Vec<f64>> = if self.b == 0.0 {
            Box::new(|v: &[f64]| v.iter().zip(&dinv).map(|(a, d)| a * d).collect())
        } else {
            let mut k = DMatrix::<f64>::zeros(self.rows, self.rows);
            for r in 0..self.rows {
                k[(r, r)] = p[r] / self.b;
            }
            for s in 0..n {
                let rs = self.rows_of(s);
                for u in rs {
                    for v in rs {
                        k[(u, v)] += dinv[s];
                    }
                }
            }
            let chol = k.cholesky()?;
            let dinv = &dinv;
            Box::new(move |v: &[f64]| {
                let x: Vec<f64> = v.iter().zip(dinv).map(|(a, d)| a * d).collect();
                let mut ax = DVector::<f64>::zeros(self.rows);
                for s in 0..n {
                    for r in self.rows_of(s) {
                        ax[r] += x[s];
                    }
                }
                let y = chol.solve(&ax);
                (0..n)
                    .map(|s| {
                        let aty: f64 = self.rows_of(s).iter().map(|&r| y[r]).sum();
                        x[s] - dinv[s] * aty
                    })
                    .collect()
            })
        };
        let u = solve(&grad);
        let w = solve(&vec![1.0; n]);
        let nu = u.iter().sum::<f64>() / w.iter().sum::<f64>();
        let d: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a - nu * b).collect();
        let dec: f64 = d.iter().zip(&grad).map(|(a, b)| a * b).sum();
        if !dec.is_finite() {
            return None;
        }
        Some((d, dec.max(0.0)))
    }

    /// Same direction from the bordered system `[H 1; 1^T 0]` in weight
    /// space. The label-space form subtracts two terms of size `g^2 / τ`,
    /// which loses the last digits once the barrier is small.
    fn dense_direction(&self, g: &[f64], p: &[f64], grad: &[f64], tau: f64) -> Option<(Vec<f64>, f64)> {
        let n = g.len();
        let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
        let rows: Vec<[usize; 3]> = (0..n).map(|s| self.rows_of(s)).collect();
        for s in 0..n {
            for u in s..n {
                let shared: f64 = rows[s]
                    .iter()
                    .zip(&rows[u])
                    .filter(|(a, b)| a == b)
                    .map(|(a, _)| 1.0 / p[*a])
                    .sum();
                m[(s, u)] = self.b * shared;
                m[(u, s)] = self.b * shared;
            }
            m[(s, s)] += (self.mu * g[s] + tau) / (g[s] * g[s]);
            m[(s, n)] = 1.0;
            m[(n, s)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(n + 1);
        for s in 0..n {
            rhs[s] = grad[s];
        }
        let x = m.lu().solve(&rhs)?;
        let d: Vec<f64> = (0..n).map(|s| x[s]).collect();
        let dec: f64 = d.iter().zip(grad).map(|(a, b)| a * b).sum();
        if !dec.is_finite() || d.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((d, dec.max(0.0)))
    }

    pub fn frank_wolfe_gap(&self, g: &[f64]) -> f64 {
        let grad = self.gradient(g);
        let max = grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean: f64 = grad.iter().zip(g).map(|(a, b)| a * b).sum();
        (max - mean).max(0.0)
    }

    pub fn solve(&self, start: Option<&[f64]>, opts: &SimplexOptions) -> SimplexResult {
        let n = self.support.len();
        let mut g: Vec<f64> = match start {
            Some(s) => {
                let floor = 1e-6 / n as f64;
                let v: Vec<f64> = s.iter().map(|x| x.max(floor)).collect();
                let t: f64 = v.iter().sum();
                v.into_iter().map(|x| x / t).collect()
            }
            None => vec![1.0 / n as f64; n],
        };
        let tau_end = opts.barrier_end / n as f64;
        let mut tau = opts.barrier_start;
        let mut iterations = 0;
        loop {
            let last_stage = tau <= tau_end;
            let stage_tol = if last_stage { 1e-24 } else { 1e-6 * tau };
            let mut rounding_steps = 0;
            let (mut last_dec, mut stalls) = (f64::INFINITY, 0);
            while iterations < opts.max_newton {
                let Some((d, dec)) = self.newton_direction(&g, tau) else {
                    break;
                };
                iterations += 1;
                if dec / 2.0 <= stage_tol {
                    break;
                }
                // At rounding level the decrement stops shrinking.
                if dec >= 0.5 * last_dec {
                    stalls += 1;
                    if stalls >= 4 {
                        break;
                    }
                } else {
                    stalls = 0;
                }
                last_dec = dec;
                let mut step: f64 = 1.0;
                for (x, dx) in g.iter().zip(&d) {
                    if *dx < 0.0 {
                        step = step.min(-0.99 * x / dx);
                    }
                }
                let full = step;
                let f0 = self.barrier_value(&g, tau);
                let mut trial = g.clone();
                let mut accepted = false;
                for _ in 0..60 {
                    for s in 0..n {
                        trial[s] = g[s] + step * d[s];
                    }
                    let f1 = self.barrier_value(&trial, tau);
                    if f1.is_finite() && f1 >= f0 + 1e-4 * step * dec {
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                // Close to the optimum the gain drops below rounding and the
                // sufficient-increase test fails; Newton steps still converge.
                if !accepted && dec < 1e-10 && rounding_steps < 5 {
                    rounding_steps += 1;
                    for s in 0..n {
                        trial[s] = g[s] + full * d[s];
                    }
                    accepted = trial.iter().all(|x| *x > 0.0);
                }
                if !accepted {
                    break;
                }
                let t: f64 = trial.iter().sum();
                g = trial.into_iter().map(|x| x / t).collect();
            }
            if last_stage || iterations >= opts.max_newton {
                break;
            }
            tau = (tau * opts.barrier_shrink).max(tau_end);
        }
        let gap = self.frank_wolfe_gap(&g);
        SimplexResult {
            value: self.value(&g),
            weights: g,
            gap,
            iterations,
            converged: gap <= 1e-9,
        }
    }
}

/// `-Σ x ln x` gradient helper for callers outside this module.
pub fn entropy_gradient(g: &[f64]) -> Vec<f64> {
    g.iter().map(|&x| -(x.max(1e-300).ln() + 1.0)).collect()
}
