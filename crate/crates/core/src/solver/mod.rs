//! Entropy programs over marginal polytopes and the heuristics that choose
//! which marginals to analyse.

pub mod fit;
pub mod heuristics;
pub mod pipeline;
pub mod simplex;

use serde::{Deserialize, Serialize};

use crate::distributions::{log_alpha_v, marginals_of, Marginals, SupportDistribution, SymmetryGroup};
use crate::error::{Error, Result};
use crate::numeric::entropy;
use crate::tensor_core::Support;

pub use fit::{fit_marginals, Fit, FitOptions};
pub use pipeline::{full_pipeline_gamma, GammaEvaluation, PipelineConfig, PipelineOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HeuristicKind {
    H1,
    H2,
    H3,
    H4,
}

impl HeuristicKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "h1" => Ok(HeuristicKind::H1),
            "2" | "h2" => Ok(HeuristicKind::H2),
            "3" | "h3" => Ok(HeuristicKind::H3),
            "4" | "h4" => Ok(HeuristicKind::H4),
            other => Err(Error::invalid(format!("unknown heuristic '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObjectiveKind {
    Problem1,
    Problem2,
    Heuristic(HeuristicKind),
}

#[derive(Clone, Debug)]
pub struct SolverInstance {
    pub support: Support,
    pub log_values: Vec<f64>,
    pub tau: f64,
    pub kind: ObjectiveKind,
    pub marginals: Option<Marginals>,
    pub lambda: Option<f64>,
    pub symmetry: Option<SymmetryGroup>,
}

#[derive(Clone, Debug)]
pub struct SolverResult {
    pub distribution: SupportDistribution,
    /// Objective in log domain.
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Knobs for the non-concave heuristics.
#[derive(Clone, Debug)]
pub struct HeuristicOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for HeuristicOptions {
    fn default() -> Self {
        HeuristicOptions {
            starts: 8,
            seed: DEFAULT_SEED,
            max_iter: 5_000,
        }
    }
}

pub const DEFAULT_SEED: u64 = 20_201_007;

fn to_result(
    support: &Support,
    weights: Vec<f64>,
    objective: f64,
    kkt: f64,
    iterations: usize,
) -> Result<SolverResult> {
    Ok(SolverResult {
        distribution: SupportDistribution::new(support, weights)?,
        objective,
        kkt_residual: kkt,
        iterations,
        converged: kkt <= 1e-9,
    })
}

/// Problem 2: the entropy maximiser with the given marginals.
pub fn max_entropy_with_marginals(support: &Support, marginals: &Marginals) -> Result<SolverResult> {
    let fit = fit_marginals(support, None, marginals, &FitOptions::default())?;
    let h = entropy(&fit.weights);
    to_result(support, fit.weights, h, fit.residual, fit.iterations)
}

/// Problem 1: maximise `ln α_V + ln α_B + H(α)/2` with the given marginals.
pub fn solve_problem1(support: &Support, log_values: &[f64], marginals: &Marginals) -> Result<SolverResult> {
    if log_values.len() != support.len() || log_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("one finite log-value per support triple"));
    }
    let base: Vec<f64> = log_values.iter().map(|v| 2.0 * v).collect();
    let fit = fit_marginals(support, Some(&base), marginals, &FitOptions::default())?;
    let obj = log_alpha_v(&fit.weights, log_values)
        + marginals_of(support, &fit.weights).log_alpha_b()
        + 0.5 * entropy(&fit.weights);
    to_result(support, fit.weights, obj, fit.residual, fit.iterations)
}

/// One of the four heuristics. Heuristic 3 needs `lambda`.
pub fn heuristic_gamma(
    kind: HeuristicKind,
    support: &Support,
    log_values: &[f64],
    lambda: Option<f64>,
    symmetry: Option<&SymmetryGroup>,
    opts: &HeuristicOptions,
) -> Result<SolverResult> {
    if log_values.len() != support.len() || log_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("one finite log-value per support triple"));
    }
    match kind {
        HeuristicKind::H2 | HeuristicKind::H4 => {
            let r = if kind == HeuristicKind::H2 {
                heuristics::heuristic2(support, log_values)
            } else {
                heuristics::heuristic4(support, log_values)
            };
            let mut res = to_result(support, r.weights, r.value, r.gap, r.iterations)?;
            res.converged = r.converged;
            Ok(res)
        }
        HeuristicKind::H3 => {
            let lambda = lambda.ok_or_else(|| Error::invalid("heuristic 3 needs lambda"))?;
            if !lambda.is_finite() || lambda < 0.0 {
                return Err(Error::invalid("lambda must be finite and nonnegative"));
            }
            let anchor = heuristics::heuristic2(support, log_values).weights;
            let starts =
                heuristics::start_points(support.len(), Some(&anchor), opts.starts.max(8), opts.seed, symmetry);
            let r = heuristics::heuristic3(support, log_values, lambda, &starts, symmetry, opts.max_iter);
            let mut res = to_result(support, r.weights, r.value, r.stationarity, r.iterations)?;
            res.converged = r.converged;
            Ok(res)
        }
        HeuristicKind::H1 => {
            let r = heuristics::heuristic1(support, log_values, opts.starts.max(8), opts.seed, opts.max_iter);
            let mut res = to_result(support, r.weights, r.value, r.stationarity, r.iterations)?;
            res.converged = r.converged;
            Ok(res)
        }
    }
}

pub fn solve(inst: &SolverInstance) -> Result<SolverResult> {
    let need_marginals = || {
        inst.marginals
            .as_ref()
            .ok_or_else(|| Error::invalid("this objective needs fixed marginals"))
    };
    match &inst.kind {
        ObjectiveKind::Problem1 => solve_problem1(&inst.support, &inst.log_values, need_marginals()?),
        ObjectiveKind::Problem2 => max_entropy_with_marginals(&inst.support, need_marginals()?),
        ObjectiveKind::Heuristic(k) => heuristic_gamma(
            *k,
            &inst.support,
            &inst.log_values,
            inst.lambda,
            inst.symmetry.as_ref(),
            &HeuristicOptions::default(),
        ),
    }
}
