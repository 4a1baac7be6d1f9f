//! Versioned JSON form of an analysis, and its independent re-verification.

use std::collections::BTreeMap;

use astro_float::BigFloat;
use serde::{Deserialize, Serialize};

use crate::certify::{certify_refined, log_matmul_value, Hp};
use crate::distributions::marginals_of;
use crate::error::{Error, Result};
use crate::solver::{fit_marginals, FitOptions, HeuristicKind};
use crate::tensor_core::{split_oriented, ClassKey, Support, Triple};

use super::analysis::{CwAnalysis, EngineConfig, ValueMethod};
use super::merge::class_count;

pub const SCHEMA_VERSION: u32 = 1;

/// Slack allowed between a stored claim and its recomputation.
pub const VERIFY_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub triple: Triple,
    /// Shortest decimal that round-trips the stored `f64`.
    pub weight: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    #[serde(rename = "I")]
    pub i: u32,
    #[serde(rename = "J")]
    pub j: u32,
    #[serde(rename = "K")]
    pub k: u32,
    pub t: u32,
    pub log_value: String,
    pub method: ValueMethod,
    pub heuristic: Option<String>,
    pub gamma: Vec<WeightEntry>,
    pub penalty_log: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalEntry {
    pub log_value: String,
    pub heuristic: String,
    pub gamma: Vec<WeightEntry>,
    pub penalty_log: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub schema_version: u32,
    pub code_version: String,
    pub q: u32,
    pub t: u32,
    pub tau: String,
    pub heuristics: Vec<HeuristicKind>,
    pub lambdas: Vec<f64>,
    pub seed: u64,
    pub precision_bits: usize,
    pub entries: Vec<TableEntry>,
    pub global: GlobalEntry,
    pub threshold_log: String,
    pub certified: bool,
    pub omega: String,
}

fn weights(dist: &[(Triple, f64)]) -> Vec<WeightEntry> {
    dist.iter()
        .map(|(t, w)| WeightEntry {
            triple: *t,
            weight: format!("{w:?}"),
        })
        .collect()
}

impl ValueTable {
    /// Serialisable view of an analysis. Certified decimals are used when
    /// present, otherwise the search values.
    pub fn from_analysis(a: &CwAnalysis, cfg: &EngineConfig) -> ValueTable {
        let entries = a
            .classes
            .values()
            .map(|v| {
                let [i, j, k] = v.class.indices();
                TableEntry {
                    i,
                    j,
                    k,
                    t: v.class.t,
                    log_value: v.certified.clone().unwrap_or_else(|| format!("{:?}", v.log_value)),
                    method: v.method,
                    heuristic: v.heuristic.clone(),
                    gamma: weights(&v.distribution),
                    penalty_log: format!("{:?}", v.penalty_log),
                }
            })
            .collect();
        ValueTable {
            schema_version: SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            q: a.q,
            t: a.t,
            tau: format!("{:?}", a.tau),
            heuristics: cfg.pipeline.heuristics.clone(),
            lambdas: cfg.pipeline.lambdas.clone(),
            seed: cfg.pipeline.seed,
            precision_bits: cfg.precision_bits,
            entries,
            global: GlobalEntry {
                log_value: a
                    .top
                    .certified
                    .clone()
                    .unwrap_or_else(|| format!("{:?}", a.top.log_value)),
                heuristic: a.top.heuristic.clone(),
                gamma: weights(&a.top.distribution),
                penalty_log: format!("{:?}", a.top.penalty_log),
            },
            threshold_log: format!("{:?}", a.threshold_log),
            certified: a.certified_feasible == Some(true),
            omega: format!("{:?}", 3.0 * a.tau),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Parses and checks the schema version.
    pub fn from_json(s: &str) -> Result<ValueTable> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        match v.get("schema_version").and_then(|x| x.as_u64()) {
            Some(n) if n == SCHEMA_VERSION as u64 => {}
            Some(n) => return Err(Error::Schema(format!("schema version {n}, expected {SCHEMA_VERSION}"))),
            None => return Err(Error::Schema("missing schema_version".into())),
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn tau(&self) -> Result<f64> {
        self.tau
            .parse()
            .map_err(|_| Error::Schema(format!("bad tau '{}'", self.tau)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntryCheck {
    /// `T^t_{i,j,k}` or `global`.
    pub name: String,
    pub claimed: String,
    pub recomputed: String,
    pub pass: bool,
    pub note: Option<String>,
}

fn parse_weights(entries: &[WeightEntry]) -> Result<Vec<(Triple, f64)>> {
    entries
        .iter()
        .map(|e| {
            let w: f64 = e
                .weight
                .parse()
                .map_err(|_| Error::Schema(format!("bad weight '{}'", e.weight)))?;
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Schema(format!("weight '{}' out of range", e.weight)));
            }
            Ok((e.triple, w))
        })
        .collect()
}

/// Recompute the refined bound for `dist` on `support` in extended precision.
fn recertify(hp: &mut Hp, support: &Support, values: &[BigFloat], dist: &[(Triple, f64)]) -> Result<BigFloat> {
    let mut alpha = vec![0.0; support.len()];
    for (t, w) in dist {
        let s = support
            .index_of(t)
            .ok_or_else(|| Error::Certification(format!("triple {t:?} is not in the inner support")))?;
        alpha[s] = *w;
    }
    let total: f64 = alpha.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Certification("distribution has no mass".into()));
    }
    let normalized: Vec<f64> = alpha.iter().map(|a| a / total).collect();
    let m = marginals_of(support, &normalized);
    let fit = fit_marginals(support, None, &m, &FitOptions::default())?;
    Ok(certify_refined(hp, support, values, &alpha, &fit)?.log_value)
}

/// Re-derive every entry from its stored distribution and the stored values
/// of its children. Returns one check per entry, children before parents,
/// then the global entry and the threshold comparison.
pub fn verify_table(table: &ValueTable) -> Result<Vec<EntryCheck>> {
    let tau = table.tau()?;
    let mut hp = Hp::new(table.precision_bits.max(170))?;
    let slack = hp.f64(VERIFY_SLACK);
    let mut claims: BTreeMap<ClassKey, BigFloat> = BTreeMap::new();
    let mut sorted: Vec<&TableEntry> = table.entries.iter().collect();
    sorted.sort_by_key(|e| (e.t, e.i, e.j, e.k));
    for e in &sorted {
        let key = ClassKey::new(table.q, e.t, [e.i, e.j, e.k]).map_err(|err| Error::Schema(err.to_string()))?;
        let claim = hp.parse_checked(&e.log_value)?;
        claims.insert(key, claim);
    }

    let mut out = Vec::new();
    for e in &sorted {
        let key = ClassKey::new(table.q, e.t, [e.i, e.j, e.k]).unwrap();
        let claim = claims[&key].clone();
        let recomputed: Result<BigFloat> = match e.method {
            ValueMethod::Merge | ValueMethod::MatmulLeaf => {
                class_count(&key).and_then(|n| log_matmul_value(&mut hp, &n, tau))
            }
            ValueMethod::Recursion => (|| {
                let terms = split_oriented(table.q, e.t, key.indices())?;
                let support = Support::new(terms.iter().map(|x| x.inner).collect())?;
                let values = terms
                    .iter()
                    .map(|x| {
                        let l = claims
                            .get(&x.left)
                            .ok_or_else(|| Error::Certification(format!("no entry for {}", x.left)))?;
                        let r = claims
                            .get(&x.right)
                            .ok_or_else(|| Error::Certification(format!("no entry for {}", x.right)))?;
                        Ok(hp.add(l, r))
                    })
                    .collect::<Result<Vec<_>>>()?;
                recertify(&mut hp, &support, &values, &parse_weights(&e.gamma)?)
            })(),
        };
        out.push(check(&mut hp, key.to_string(), &claim, recomputed, &slack));
    }

    let top = (|| {
        let support = Support::constant_sum_simplex(2 * table.t);
        let values = support
            .triples()
            .iter()
            .map(|ijk| {
                let k = ClassKey::new(table.q, table.t, *ijk)?;
                claims
                    .get(&k)
                    .cloned()
                    .ok_or_else(|| Error::Certification(format!("no entry for {k}")))
            })
            .collect::<Result<Vec<_>>>()?;
        recertify(&mut hp, &support, &values, &parse_weights(&table.global.gamma)?)
    })();
    let global_claim = hp.parse_checked(&table.global.log_value)?;
    let top_ok = top.as_ref().ok().cloned();
    out.push(check(&mut hp, "global".into(), &global_claim, top, &slack));

    if table.certified {
        let thr = {
            let l = hp.u64(table.q as u64 + 2);
            let ln = hp.ln(&l);
            hp.mul(&hp.u64(table.t as u64), &ln)
        };
        let (pass, rec) = match &top_ok {
            Some(v) => (hp.ge(v, &thr), hp.to_decimal(v)),
            None => (false, "error".into()),
        };
        out.push(EntryCheck {
            name: "threshold".into(),
            claimed: hp.to_decimal(&thr),
            recomputed: rec,
            pass,
            note: (!pass).then(|| "recomputed value is below t ln(q+2)".into()),
        });
    }
    Ok(out)
}

fn check(hp: &mut Hp, name: String, claim: &BigFloat, recomputed: Result<BigFloat>, slack: &BigFloat) -> EntryCheck {
    match recomputed {
        Ok(v) => {
            let limit = hp.add(&v, slack);
            let pass = hp.ge(&limit, claim);
            EntryCheck {
                name,
                claimed: hp.to_decimal(claim),
                recomputed: hp.to_decimal(&v),
                pass,
                note: (!pass).then(|| "claim exceeds recomputed value".into()),
            }
        }
        Err(e) => EntryCheck {
            name,
            claimed: hp.to_decimal(claim),
            recomputed: "error".into(),
            pass: false,
            note: Some(e.to_string()),
        },
    }
}
