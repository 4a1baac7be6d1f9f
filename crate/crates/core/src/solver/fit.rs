//! Maximum-entropy projection onto a marginal polytope.
//!
//! Finds the distribution on the support of the form
//! `w_s ∝ exp(base_s + f_X[i] + f_Y[j] + f_Z[k])` whose marginals equal the
//! target. With `base = 0` this is the entropy maximiser over `D_γ`; with
//! `base = 2 ln V` it maximises `Σ w ln V + H(w)/2` over the same set.
//!
//! Iterative proportional fitting gets close, then Newton on the convex dual
//! `ln Z(f) - <f, target>` finishes the job (IPF alone crawls when the
//! solution sits on a face of the polytope).

use nalgebra::{DMatrix, DVector};

use crate::distributions::Marginals;
use crate::error::{Error, Result};
use crate::numeric::logsumexp;
use crate::tensor_core::Support;

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    /// Target max-norm marginal violation.
    pub tol: f64,
    /// Accept a result whose residual is above `tol` but below this.
    pub accept: f64,
    pub warmup_sweeps: usize,
    pub newton_iters: usize,
    pub max_sweeps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-13,
            accept: 1e-10,
            warmup_sweeps: 200,
            newton_iters: 200,
            max_sweeps: 100_000,
        }
    }
}

/// Result of a marginal fit.
#[derive(Clone, Debug)]
pub struct Fit {
    pub weights: Vec<f64>,
    /// Log side factors; `None` for labels with zero target mass.
    pub log_factors: [Vec<Option<f64>>; 3],
    /// Support indices that may carry mass (all three labels have mass).
    pub active: Vec<usize>,
    pub residual: f64,
    pub iterations: usize,
}

struct Problem<'a> {
    support: &'a Support,
    base: Vec<f64>,
    active: Vec<usize>,
    target: [Vec<f64>; 3],
    /// members[side][label] = positions in `active`
    members: [Vec<Vec<usize>>; 3],
    /// dual variable index for (side, label), if the label has mass
    var: [Vec<Option<usize>>; 3],
    nvars: usize,
}

impl<'a> Problem<'a> {
    fn new(support: &'a Support, base: Option<&[f64]>, target: &Marginals) -> Result<Self> {
        let mut tgt: [Vec<f64>; 3] = Default::default();
        for side in 0..3 {
            let mut m = target.sides[side].clone();
            if m.len() < support.labels(side) {
                m.resize(support.labels(side), 0.0);
            }
            if m.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::invalid("marginals must be finite and nonnegative"));
            }
            let total: f64 = m.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("marginal side {side} sums to {total}")));
            }
            tgt[side] = m;
        }
        let active: Vec<usize> = (0..support.len())
            .filter(|&s| {
                let t = support.triple(s);
                (0..3).all(|side| tgt[side][t[side] as usize] > 0.0)
            })
            .collect();
        let mut members: [Vec<Vec<usize>>; 3] = [0, 1, 2].map(|side| vec![Vec::new(); tgt[side].len()]);
        for (a, &s) in active.iter().enumerate() {
            let t = support.triple(s);
            for side in 0..3 {
                members[side][t[side] as usize].push(a);
            }
        }
        let mut var: [Vec<Option<usize>>; 3] = Default::default();
        let mut nvars = 0;
        let mut missing: f64 = 0.0;
        for side in 0..3 {
            var[side] = vec![None; tgt[side].len()];
            for l in 0..tgt[side].len() {
                if tgt[side][l] > 0.0 {
                    if members[side][l].is_empty() {
                        missing = missing.max(tgt[side][l]);
                    }
                    var[side][l] = Some(nvars);
                    nvars += 1;
                }
            }
        }
        if missing > 0.0 {
            return Err(Error::Infeasible { best_residual: missing });
        }
        let base = match base {
            Some(b) => active.iter().map(|&s| b[s]).collect(),
            None => vec![0.0; active.len()],
        };
        Ok(Problem {
            support,
            base,
            active,
            target: tgt,
            members,
            var,
            nvars,
        })
    }

    fn label(&self, a: usize, side: usize) -> usize {
        self.support.triple(self.active[a])[side] as usize
    }

    fn log_weights(&self, f: &[f64]) -> Vec<f64> {
        (0..self.active.len())
            .map(|a| {
                let mut x = self.base[a];
                for side in 0..3 {
                    x += f[self.var[side][self.label(a, side)].unwrap()];
                }
                x
            })
            .collect()
    }

    fn normalized(&self, f: &[f64]) -> (Vec<f64>, f64) {
        let lw = self.log_weights(f);
        let lz = logsumexp(&lw);
        (lw.iter().map(|x| (x - lz).exp()).collect(), lz)
    }

    /// Max-norm marginal violation of normalised weights.
    fn residual(&self, p: &[f64]) -> f64 {
        let mut r: f64 = 0.0;
        for side in 0..3 {
            for (l, mem) in self.members[side].iter().enumerate() {
                let m: f64 = mem.iter().map(|&a| p[a]).sum();
                r = r.max((m - self.target[side][l]).abs());
            }
        }
        r
    }

    fn ipf_sweep(&self, f: &mut [f64]) {
        let mut lw = self.log_weights(f);
        let mut buf = Vec::new();
        for side in 0..3 {
            for (l, mem) in self.members[side].iter().enumerate() {
                if mem.is_empty() {
                    continue;
                }
                buf.clear();
                buf.extend(mem.iter().map(|&a| lw[a]));
                let delta = self.target[side][l].ln() - logsumexp(&buf);
                f[self.var[side][l].unwrap()] += delta;
                for &a in mem {
                    lw[a] += delta;
                }
            }
        }
    }

    fn dual(&self, f: &[f64]) -> f64 {
        let lz = logsumexp(&self.log_weights(f));
        let mut lin = 0.0;
        for side in 0..3 {
            for (l, t) in self.target[side].iter().enumerate() {
                if let Some(v) = self.var[side][l] {
                    lin += f[v] * t;
                }
            }
        }
        lz - lin
    }

    /// One damped Newton step on the dual. Returns false when no progress
    /// could be made.
    fn newton_step(&self, f: &mut [f64]) -> bool {
        let n = self.nvars;
        let (p, _) = self.normalized(f);
        let mut grad = DVector::<f64>::zeros(n);
        let mut hess = DMatrix::<f64>::zeros(n, n);
        let mut idx = [0usize; 3];
        for (a, &pa) in p.iter().enumerate() {
            for side in 0..3 {
                idx[side] = self.var[side][self.label(a, side)].unwrap();
                grad[idx[side]] += pa;
            }
            for u in idx {
                for v in idx {
                    hess[(u, v)] += pa;
                }
            }
        }
        let mean = grad.clone();
        for side in 0..3 {
            for (l, t) in self.target[side].iter().enumerate() {
                if let Some(v) = self.var[side][l] {
                    grad[v] -= t;
                }
            }
        }
        hess -= &mean * mean.transpose();
        let scale = (0..n).map(|i| hess[(i, i)]).fold(0.0f64, f64::max).max(1e-300);
        let mut ridge = 1e-14 * scale;
        let dir = loop {
            let mut h = hess.clone();
            for i in 0..n {
                h[(i, i)] += ridge;
            }
            if let Some(ch) = h.cholesky() {
                break -ch.solve(&grad);
            }
            ridge *= 100.0;
            if ridge > scale {
                return false;
            }
        };
        let slope = grad.dot(&dir);
        if !(slope < 0.0) {
            return false;
        }
        let phi0 = self.dual(f);
        let mut step = 1.0;
        let mut trial = f.to_vec();
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = f[i] + step * dir[i];
            }
            let phi = self.dual(&trial);
            if phi.is_finite() && phi <= phi0 + 1e-4 * step * slope {
                f.copy_from_slice(&trial);
                return true;
            }
            step *= 0.5;
        }
        false
    }
}

/// Project onto the distributions with the given marginals.
pub fn fit_marginals(support: &Support, base: Option<&[f64]>, target: &Marginals, opts: &FitOptions) -> Result<Fit> {
    let prob = Problem::new(support, base, target)?;
    let mut f = vec![0.0; prob.nvars];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;

    let run_ipf = |f: &mut Vec<f64>, sweeps: usize, stop: f64, iterations: &mut usize| {
        let mut r = f64::INFINITY;
        for _ in 0..sweeps {
            prob.ipf_sweep(f);
            *iterations += 1;
            r = prob.residual(&prob.normalized(f).0);
            if r <= stop {
                break;
            }
        }
        r
    };

    residual = residual.min(run_ipf(&mut f, opts.warmup_sweeps, opts.tol.max(1e-8), &mut iterations));
    if residual > opts.tol {
        for _ in 0..opts.newton_iters {
            let moved = prob.newton_step(&mut f);
            iterations += 1;
            residual = prob.residual(&prob.normalized(&f).0);
            if residual <= opts.tol || !moved {
                break;
            }
        }
    }
    if residual > opts.tol {
        let left = opts.max_sweeps.saturating_sub(iterations);
        residual = run_ipf(&mut f, left, opts.tol, &mut iterations);
    }
    if !(residual <= opts.accept) {
        return Err(Error::Infeasible {
            best_residual: residual,
        });
    }

    let (p, _) = prob.normalized(&f);
    let mut weights = vec![0.0; support.len()];
    for (a, &s) in prob.active.iter().enumerate() {
        weights[s] = p[a];
    }
    let log_factors = [0, 1, 2].map(|side| prob.var[side].iter().map(|v| v.map(|i| f[i])).collect::<Vec<_>>());
    Ok(Fit {
        weights,
        log_factors,
        active: prob.active,
        residual,
        iterations,
    })
}

impl Fit {
    /// `base_s + Σ f` for an active index, i.e. the unnormalised log weight.
    pub fn log_potential(&self, support: &Support, base: Option<&[f64]>, s: usize) -> f64 {
        let t = support.triple(s);
        let mut x = base.map_or(0.0, |b| b[s]);
        for side in 0..3 {
            x += self.log_factors[side][t[side] as usize].unwrap_or(f64::NEG_INFINITY);
        }
        x
    }

    /// Largest deviation of `ln w_s - base_s - Σ f` from its mean over the
    /// positive entries; zero for an exact product form.
    pub fn product_form_defect(&self, support: &Support, base: Option<&[f64]>) -> f64 {
        let gaps: Vec<f64> = self
            .active
            .iter()
            .filter(|&&s| self.weights[s] > 0.0)
            .map(|&s| self.weights[s].ln() - self.log_potential(support, base, s))
            .collect();
        let lo = gaps.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if gaps.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}
