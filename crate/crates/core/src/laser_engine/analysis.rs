//! Recursive value analysis of `CW_q^{(x)t}`.
//!
//! Classes are processed level by level (t = 1, 2, 4, ...). Within a level
//! the classes are independent and run in parallel; results are collected in
//! key order so the output does not depend on scheduling.

use std::collections::BTreeMap;

use astro_float::BigFloat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{certify_refined, log_matmul_value, Hp, DEFAULT_PRECISION_BITS};
use crate::distributions::SymmetryGroup;
use crate::error::{Error, Result};
use crate::solver::pipeline::{full_pipeline_gamma, GammaEvaluation, PipelineConfig};
use crate::solver::HeuristicKind;
use crate::tensor_core::{split_oriented, ClassKey, Support, Triple};

use super::merge::{class_count, merged_value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueMethod {
    Merge,
    Recursion,
    MatmulLeaf,
}

impl ValueMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ValueMethod::Merge => "merge",
            ValueMethod::Recursion => "recursion",
            ValueMethod::MatmulLeaf => "matmul-leaf",
        }
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub pipeline: PipelineConfig,
    /// Levels up to this use every heuristic plus local refinement; larger
    /// levels use heuristic 2 only.
    pub full_search_max_level: u32,
    pub certify: bool,
    pub precision_bits: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            pipeline: PipelineConfig::default(),
            full_search_max_level: 8,
            certify: false,
            precision_bits: DEFAULT_PRECISION_BITS,
        }
    }
}

impl EngineConfig {
    fn pipeline_for(&self, level: u32) -> PipelineConfig {
        if level <= self.full_search_max_level {
            self.pipeline.clone()
        } else {
            PipelineConfig {
                heuristics: vec![HeuristicKind::H2],
                refine: false,
                ..self.pipeline.clone()
            }
        }
    }
}

/// A lower bound on `ln V_τ` for one class, with how it was obtained.
#[derive(Clone, Debug)]
pub struct ValueBound {
    pub class: ClassKey,
    pub tau: f64,
    pub log_value: f64,
    /// Extended-precision value as a decimal string, when certified.
    pub certified: Option<String>,
    pub method: ValueMethod,
    pub heuristic: Option<String>,
    /// Distribution on the inner support that the bound was computed from.
    pub distribution: Vec<(Triple, f64)>,
    pub penalty_log: f64,
    /// Largest solver residual behind this bound (0 for closed forms).
    pub kkt: f64,
}

/// The top-level bound for the whole power.
#[derive(Clone, Debug)]
pub struct TopBound {
    pub log_value: f64,
    pub certified: Option<String>,
    pub heuristic: String,
    pub distribution: Vec<(Triple, f64)>,
    pub penalty_log: f64,
    pub kkt: f64,
}

#[derive(Clone, Debug)]
pub struct CwAnalysis {
    pub q: u32,
    pub t: u32,
    pub tau: f64,
    pub classes: BTreeMap<ClassKey, ValueBound>,
    pub top: TopBound,
    /// `t ln(q + 2)`.
    pub threshold_log: f64,
    /// Certified top value meets the threshold in extended precision.
    pub certified_feasible: Option<bool>,
}

impl CwAnalysis {
    pub fn feasible(&self) -> bool {
        self.top.log_value >= self.threshold_log
    }

    pub fn max_kkt(&self) -> f64 {
        self.classes.values().map(|v| v.kkt).fold(self.top.kkt, f64::max)
    }
}

pub fn levels_up_to(t: u32) -> Result<Vec<u32>> {
    if t == 0 || !t.is_power_of_two() {
        return Err(Error::invalid(format!("t = {t} must be a power of two")));
    }
    Ok((0..=t.trailing_zeros()).map(|k| 1 << k).collect())
}

/// Sorted class keys at one level.
pub fn classes_at(q: u32, t: u32) -> Vec<ClassKey> {
    let mut out = Vec::new();
    for i in 0..=2 * t / 3 {
        for j in i..=(2 * t - i) / 2 {
            let k = 2 * t - i - j;
            if k < j {
                continue;
            }
            if q == 0 && [i, j, k].iter().any(|v| v % 2 != 0) {
                continue;
            }
            out.push(ClassKey::new(q, t, [i, j, k]).unwrap());
        }
    }
    out
}

/// Symmetries of the inner support of `T^t_{IJK}` in the given orientation:
/// swapping the two factors, and swapping roles with equal indices.
pub fn inner_symmetry(support: &Support, ijk: Triple) -> Result<SymmetryGroup> {
    let half = move |t: Triple| [ijk[0] - t[0], ijk[1] - t[1], ijk[2] - t[2]];
    let s01 = |t: Triple| [t[1], t[0], t[2]];
    let s12 = |t: Triple| [t[0], t[2], t[1]];
    let mut maps: Vec<&dyn Fn(Triple) -> Triple> = vec![&half];
    if ijk[0] == ijk[1] {
        maps.push(&s01);
    }
    if ijk[1] == ijk[2] {
        maps.push(&s12);
    }
    SymmetryGroup::generated_by(support, &maps)
}

/// Inner support and per-triple log values of a splittable class.
pub fn inner_problem(
    q: u32,
    t: u32,
    ijk: Triple,
    child: &dyn Fn(&ClassKey) -> Option<f64>,
) -> Result<(Support, Vec<f64>)> {
    let terms = split_oriented(q, t, ijk)?;
    let support = Support::new(terms.iter().map(|x| x.inner).collect())?;
    let values = terms
        .iter()
        .map(|x| {
            let l = child(&x.left).ok_or_else(|| Error::Solver(format!("missing value for {}", x.left)))?;
            let r = child(&x.right).ok_or_else(|| Error::Solver(format!("missing value for {}", x.right)))?;
            Ok(l + r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((support, values))
}

struct Computed {
    bound: ValueBound,
    eval: Option<(Support, GammaEvaluation)>,
}

fn closed_form(class: &ClassKey, tau: f64) -> Result<Computed> {
    let [_, i, j] = class.indices();
    let log_value = merged_value(class.q, class.t, i, j, tau)?;
    Ok(Computed {
        bound: ValueBound {
            class: *class,
            tau,
            log_value,
            certified: None,
            method: if class.t == 1 {
                ValueMethod::MatmulLeaf
            } else {
                ValueMethod::Merge
            },
            heuristic: None,
            distribution: Vec::new(),
            penalty_log: 0.0,
            kkt: 0.0,
        },
        eval: None,
    })
}

/// Bound one class in a given orientation from known child values.
pub fn class_bound_oriented(
    q: u32,
    t: u32,
    ijk: Triple,
    tau: f64,
    child: &dyn Fn(&ClassKey) -> Option<f64>,
    cfg: &EngineConfig,
) -> Result<(ValueBound, Support, GammaEvaluation)> {
    let class = ClassKey::new(q, t, ijk)?;
    let (support, values) = inner_problem(q, t, ijk, child)?;
    let group = inner_symmetry(&support, ijk)?;
    let pcfg = cfg.pipeline_for(t);
    let best = match full_pipeline_gamma(&support, &values, &pcfg, Some(&group)) {
        Ok(o) => o.best,
        Err(_) => {
            // Putting all mass on one inner triple is always admissible.
            let s = (0..values.len())
                .max_by(|&a, &b| values[a].total_cmp(&values[b]))
                .unwrap();
            let mut g = vec![0.0; values.len()];
            g[s] = 1.0;
            let mut e = crate::solver::pipeline::evaluate_gamma(&support, &values, &g, "single", &pcfg.fit)?;
            e.label = "single-fallback".into();
            e
        }
    };
    let bound = ValueBound {
        class,
        tau,
        log_value: best.log_bound,
        certified: None,
        method: ValueMethod::Recursion,
        heuristic: Some(best.label.clone()),
        distribution: support
            .triples()
            .iter()
            .copied()
            .zip(best.alpha.iter().copied())
            .collect(),
        penalty_log: best.penalty_log,
        kkt: best.kkt,
    };
    Ok((bound, support, best))
}

/// Values of every class up to level `t`, plus the top-level bound.
pub fn analyze_cw_full(q: u32, t: u32, tau: f64, cfg: &EngineConfig) -> Result<CwAnalysis> {
    if !(2.0 / 3.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("tau = {tau} outside [2/3, 1]")));
    }
    if q == 0 {
        return Err(Error::invalid("q must be at least 1"));
    }
    let levels = levels_up_to(t)?;
    let mut classes: BTreeMap<ClassKey, ValueBound> = BTreeMap::new();
    let mut hp_values: BTreeMap<ClassKey, BigFloat> = BTreeMap::new();
    let mut hp = if cfg.certify {
        Some(Hp::new(cfg.precision_bits)?)
    } else {
        None
    };

    for &level in &levels {
        let keys = classes_at(q, level);
        let known = &classes;
        let child = |k: &ClassKey| known.get(k).map(|v| v.log_value);
        let computed: Vec<Computed> = keys
            .par_iter()
            .map(|key| {
                if key.has_zero() {
                    closed_form(key, tau)
                } else {
                    class_bound_oriented(q, level, key.indices(), tau, &child, cfg).map(|(bound, s, e)| Computed {
                        bound,
                        eval: Some((s, e)),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        for c in computed {
            let mut bound = c.bound;
            if let Some(hp) = hp.as_mut() {
                let v = match &c.eval {
                    None => log_matmul_value(hp, &class_count(&bound.class)?, tau)?,
                    Some((support, e)) => {
                        let terms = split_oriented(q, level, bound.class.indices())?;
                        let vals = terms
                            .iter()
                            .map(|x| {
                                let l = hp_values
                                    .get(&x.left)
                                    .ok_or_else(|| Error::Certification(format!("no value for {}", x.left)))?;
                                let r = hp_values
                                    .get(&x.right)
                                    .ok_or_else(|| Error::Certification(format!("no value for {}", x.right)))?;
                                Ok(hp.add(l, r))
                            })
                            .collect::<Result<Vec<_>>>()?;
                        certify_refined(hp, support, &vals, &e.alpha, &e.beta_fit)?.log_value
                    }
                };
                let f = hp.to_f64(&v);
                if f < bound.log_value - 1e-9 {
                    return Err(Error::Certification(format!(
                        "{}: certified {f} below search value {}",
                        bound.class, bound.log_value
                    )));
                }
                bound.certified = Some(hp.to_decimal(&v));
                hp_values.insert(bound.class, v);
            }
            classes.insert(bound.class, bound);
        }
    }

    // Top level: every (I, J, K) with sum 2t, all six role permutations.
    let support = Support::new(Support::constant_sum_simplex(2 * t).triples().to_vec())?;
    let values: Vec<f64> = support
        .triples()
        .iter()
        .map(|ijk| classes[&ClassKey::new(q, t, *ijk).unwrap()].log_value)
        .collect();
    let group = SymmetryGroup::full_roles(&support)?;
    let pcfg = cfg.pipeline_for(t);
    let outcome = full_pipeline_gamma(&support, &values, &pcfg, Some(&group))?;
    let best = outcome.best;
    let threshold_log = t as f64 * ((q + 2) as f64).ln();
    let mut top = TopBound {
        log_value: best.log_bound,
        certified: None,
        heuristic: best.label.clone(),
        distribution: support
            .triples()
            .iter()
            .copied()
            .zip(best.alpha.iter().copied())
            .collect(),
        penalty_log: best.penalty_log,
        kkt: best.kkt,
    };
    let mut certified_feasible = None;
    if let Some(hp) = hp.as_mut() {
        let vals: Vec<BigFloat> = support
            .triples()
            .iter()
            .map(|ijk| hp_values[&ClassKey::new(q, t, *ijk).unwrap()].clone())
            .collect();
        let c = certify_refined(hp, &support, &vals, &best.alpha, &best.beta_fit)?;
        let thr = {
            let l = hp.u64((q + 2) as u64);
            let ln = hp.ln(&l);
            hp.mul(&hp.u64(t as u64), &ln)
        };
        certified_feasible = Some(hp.ge(&c.log_value, &thr));
        top.certified = Some(hp.to_decimal(&c.log_value));
    }
    Ok(CwAnalysis {
        q,
        t,
        tau,
        classes,
        top,
        threshold_log,
        certified_feasible,
    })
}

/// Lower bound on `ln V_τ(CW_q^{(x)t})`.
pub fn analyze_cw(q: u32, t: u32, tau: f64, cfg: &EngineConfig) -> Result<f64> {
    Ok(analyze_cw_full(q, t, tau, cfg)?.top.log_value)
}

/// Bound for one class, computing whatever lower levels it needs.
pub fn analyze_class(class: &ClassKey, tau: f64, cfg: &EngineConfig) -> Result<ValueBound> {
    if class.has_zero() {
        return Ok(closed_form(class, tau)?.bound);
    }
    let levels = levels_up_to(class.t)?;
    let mut known: BTreeMap<ClassKey, f64> = BTreeMap::new();
    for &level in &levels[..levels.len() - 1] {
        let keys = classes_at(class.q, level);
        let snapshot = &known;
        let child = |k: &ClassKey| snapshot.get(k).copied();
        let vals: Vec<(ClassKey, f64)> = keys
            .par_iter()
            .map(|k| {
                let v = if k.has_zero() {
                    closed_form(k, tau)?.bound.log_value
                } else {
                    class_bound_oriented(k.q, level, k.indices(), tau, &child, cfg)?
                        .0
                        .log_value
                };
                Ok((*k, v))
            })
            .collect::<Result<Vec<_>>>()?;
        known.extend(vals);
    }
    let child = |k: &ClassKey| known.get(k).copied();
    Ok(class_bound_oriented(class.q, class.t, class.indices(), tau, &child, cfg)?.0)
}

#[derive(Clone, Debug)]
pub struct OmegaResult {
    pub q: u32,
    pub t: u32,
    pub tau: f64,
    pub omega_bound: f64,
    pub tolerance: f64,
    pub certified: bool,
    /// Certified analysis at `tau`.
    pub analysis: CwAnalysis,
    pub bisection_steps: usize,
}

/// Bisection on τ for `analyze_cw(q, t, τ) >= t ln(q + 2)`. Reports the last
/// feasible τ plus the tolerance, then recertifies there.
pub fn omega_bound(q: u32, t: u32, tol: f64, cfg: &EngineConfig) -> Result<OmegaResult> {
    if !(tol >= 1e-9) {
        return Err(Error::invalid("tolerance must be at least 1e-9"));
    }
    let search = EngineConfig {
        certify: false,
        ..cfg.clone()
    };
    let feasible = |tau: f64| -> Result<bool> { Ok(analyze_cw_full(q, t, tau, &search)?.feasible()) };
    let (mut lo, mut hi) = (2.0 / 3.0, 1.0);
    let mut steps = 0;
    if !feasible(hi)? {
        return Err(Error::Solver(format!("q = {q}, t = {t} is infeasible at tau = 1")));
    }
    if feasible(lo)? {
        hi = lo;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        steps += 1;
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tau = (hi + tol).min(1.0);
    let analysis = analyze_cw_full(
        q,
        t,
        tau,
        &EngineConfig {
            certify: true,
            ..cfg.clone()
        },
    )?;
    let certified = analysis.certified_feasible == Some(true);
    Ok(OmegaResult {
        q,
        t,
        tau,
        omega_bound: 3.0 * tau,
        tolerance: tol,
        certified,
        analysis,
        bisection_steps: steps,
    })
}
