//! From candidate γ to the best value bound: for each candidate, solve both
//! programs on `D_γ` and keep the largest refined bound.

use rayon::prelude::*;

use crate::distributions::{marginals_of, DerivedQuantities, SymmetryGroup};
use crate::error::{Error, Result};
use crate::laser_engine::bounds::refined_from_parts;
use crate::numeric::entropy;
use crate::tensor_core::Support;

use super::fit::{fit_marginals, Fit, FitOptions};
use super::heuristics::{self, mirror_ascent};
use super::{HeuristicKind, DEFAULT_SEED};

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub heuristics: Vec<HeuristicKind>,
    /// λ values for heuristic 3; zero is skipped when heuristic 2 also runs.
    pub lambdas: Vec<f64>,
    pub starts: usize,
    pub seed: u64,
    /// Local ascent of the full bound over γ, started from the best candidate.
    pub refine: bool,
    pub refine_iters: usize,
    pub ascent_iters: usize,
    pub fit: FitOptions,
}

pub fn default_lambdas() -> Vec<f64> {
    std::iter::once(0.0).chain((0..=7).map(|k| 10f64.powi(k))).collect()
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            heuristics: vec![
                HeuristicKind::H1,
                HeuristicKind::H2,
                HeuristicKind::H3,
                HeuristicKind::H4,
            ],
            lambdas: default_lambdas(),
            starts: 8,
            seed: DEFAULT_SEED,
            refine: true,
            refine_iters: 200,
            ascent_iters: 3_000,
            fit: FitOptions::default(),
        }
    }
}

/// Everything the bound for one γ depends on.
#[derive(Clone, Debug)]
pub struct GammaEvaluation {
    pub label: String,
    pub gamma: Vec<f64>,
    /// Problem-1 optimum on `D_γ`.
    pub alpha: Vec<f64>,
    pub derived: DerivedQuantities,
    pub max_log_beta_n: f64,
    pub log_bound: f64,
    /// `(ln α_N - max ln β_N) / 2`, never positive.
    pub penalty_log: f64,
    /// Largest marginal residual of the two fits.
    pub kkt: f64,
    pub alpha_fit: Fit,
    pub beta_fit: Fit,
}

pub fn evaluate_gamma(
    support: &Support,
    log_values: &[f64],
    gamma: &[f64],
    label: &str,
    opts: &FitOptions,
) -> Result<GammaEvaluation> {
    let m = marginals_of(support, gamma);
    let base: Vec<f64> = log_values.iter().map(|v| 2.0 * v).collect();
    let alpha_fit = fit_marginals(support, Some(&base), &m, opts)?;
    let alpha = alpha_fit.weights.clone();
    let am = marginals_of(support, &alpha);
    let beta_fit = fit_marginals(support, None, &am, opts)?;
    let derived = DerivedQuantities {
        log_alpha_b: am.log_alpha_b(),
        log_alpha_n: entropy(&alpha),
        log_alpha_v: crate::distributions::log_alpha_v(&alpha, log_values),
    };
    // The entropy maximiser dominates α up to fit accuracy.
    let max_log_beta_n = entropy(&beta_fit.weights).max(derived.log_alpha_n);
    let log_bound = refined_from_parts(&derived, max_log_beta_n)?;
    Ok(GammaEvaluation {
        label: label.to_string(),
        gamma: gamma.to_vec(),
        alpha,
        derived,
        max_log_beta_n,
        log_bound,
        penalty_log: 0.5 * (derived.log_alpha_n - max_log_beta_n),
        kkt: alpha_fit.residual.max(beta_fit.residual),
        alpha_fit,
        beta_fit,
    })
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub best: GammaEvaluation,
    /// `(label, bound)` for every candidate that evaluated.
    pub candidates: Vec<(String, f64)>,
    pub failures: Vec<(String, String)>,
}

fn lambda_label(l: f64) -> String {
    if l == 0.0 {
        "H3(0)".into()
    } else {
        format!("H3(1e{})", l.log10().round() as i64)
    }
}

/// Candidate γ from the configured heuristics plus the best single triple.
pub fn candidate_gammas(
    support: &Support,
    log_values: &[f64],
    cfg: &PipelineConfig,
    group: Option<&SymmetryGroup>,
) -> Vec<(String, Vec<f64>)> {
    let n = support.len();
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    let wants = |k| cfg.heuristics.contains(&k);
    let h2 = (wants(HeuristicKind::H2) || wants(HeuristicKind::H3))
        .then(|| heuristics::heuristic2(support, log_values).weights);
    if wants(HeuristicKind::H2) {
        out.push(("H2".into(), h2.clone().unwrap()));
    }
    if wants(HeuristicKind::H4) {
        out.push(("H4".into(), heuristics::heuristic4(support, log_values).weights));
    }
    if wants(HeuristicKind::H1) {
        let r = heuristics::heuristic1(support, log_values, cfg.starts, cfg.seed, cfg.ascent_iters);
        out.push(("H1".into(), r.weights));
    }
    if wants(HeuristicKind::H3) {
        let starts = heuristics::start_points(n, h2.as_deref(), cfg.starts.max(8), cfg.seed, group);
        let lambdas: Vec<f64> = cfg
            .lambdas
            .iter()
            .copied()
            .filter(|&l| l > 0.0 || !wants(HeuristicKind::H2))
            .collect();
        let found: Vec<(String, Vec<f64>)> = lambdas
            .par_iter()
            .map(|&l| {
                let r = heuristics::heuristic3(support, log_values, l, &starts, group, cfg.ascent_iters);
                (lambda_label(l), r.weights)
            })
            .collect();
        out.extend(found);
    }
    let best_single = (0..n)
        .max_by(|&a, &b| log_values[a].total_cmp(&log_values[b]).then(b.cmp(&a)))
        .unwrap();
    let mut point = vec![0.0; n];
    point[best_single] = 1.0;
    out.push(("single".into(), point));
    if let Some(g) = group {
        for (_, w) in out.iter_mut() {
            *w = g.average(w);
        }
    }
    out
}

/// Best refined bound over the candidate γ.
pub fn full_pipeline_gamma(
    support: &Support,
    log_values: &[f64],
    cfg: &PipelineConfig,
    group: Option<&SymmetryGroup>,
) -> Result<PipelineOutcome> {
    if log_values.len() != support.len() || log_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("one finite log-value per support triple"));
    }
    let cands = candidate_gammas(support, log_values, cfg, group);
    let evals: Vec<(String, Result<GammaEvaluation>)> = cands
        .par_iter()
        .map(|(label, g)| (label.clone(), evaluate_gamma(support, log_values, g, label, &cfg.fit)))
        .collect();
    let mut best: Option<GammaEvaluation> = None;
    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for (label, e) in evals {
        match e {
            Ok(e) => {
                candidates.push((label, e.log_bound));
                if best.as_ref().is_none_or(|b| e.log_bound > b.log_bound) {
                    best = Some(e);
                }
            }
            Err(err) => failures.push((label, err.to_string())),
        }
    }
    let mut best = best.ok_or_else(|| {
        Error::Solver(format!(
            "every candidate failed: {}",
            failures
                .iter()
                .map(|(l, e)| format!("{l}: {e}"))
                .collect::<Vec<_>>()
                .join("; ")
        ))
    })?;
    if cfg.refine && support.len() > 1 {
        if let Some(r) = refine(support, log_values, &best, cfg, group) {
            if r.log_bound > best.log_bound {
                candidates.push((r.label.clone(), r.log_bound));
                best = r;
            }
        }
    }
    Ok(PipelineOutcome {
        best,
        candidates,
        failures,
    })
}

/// Gradient of the bound with respect to γ through the dual multipliers of
/// both fits (envelope theorem), defined when every label has mass.
fn bound_gradient(support: &Support, e: &GammaEvaluation) -> Option<Vec<f64>> {
    let m = marginals_of(support, &e.alpha);
    let mut out = Vec::with_capacity(support.len());
    for t in support.triples() {
        let mut d = 0.0;
        for side in 0..3 {
            let l = t[side] as usize;
            let f1 = e.alpha_fit.log_factors[side][l]?;
            let f2 = e.beta_fit.log_factors[side][l]?;
            d += -0.5 * f1 - (m.sides[side][l].ln() + 1.0) / 3.0 + 0.5 * f2;
        }
        out.push(d);
    }
    Some(out)
}

fn refine(
    support: &Support,
    log_values: &[f64],
    start: &GammaEvaluation,
    cfg: &PipelineConfig,
    group: Option<&SymmetryGroup>,
) -> Option<GammaEvaluation> {
    let n = support.len() as f64;
    let g0: Vec<f64> = start.alpha.iter().map(|x| (x + 1e-9 / n) / (1.0 + 1e-9)).collect();
    let eval = |g: &[f64]| evaluate_gamma(support, log_values, g, "", &cfg.fit).ok();
    let value = |g: &[f64]| eval(g).map_or(f64::NEG_INFINITY, |e| e.log_bound);
    let gradient = |g: &[f64]| {
        eval(g)
            .and_then(|e| bound_gradient(support, &e))
            .unwrap_or_else(|| vec![0.0; g.len()])
    };
    let r = mirror_ascent(&value, &gradient, &g0, group, cfg.refine_iters);
    let mut e = evaluate_gamma(support, log_values, &r.weights, "", &cfg.fit).ok()?;
    e.label = format!("{}+refine", start.label);
    Some(e)
}
