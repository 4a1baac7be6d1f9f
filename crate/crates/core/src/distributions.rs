//! Distributions on a block support and the quantities derived from them.
//!
//! Everything is kept in natural-log domain. `0 ln 0` is taken as 0.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{entropy, neg_xlogx};
use crate::tensor_core::{Support, Triple};

pub const SUM_TOLERANCE: f64 = 1e-12;
const CONSTRUCT_TOLERANCE: f64 = 1e-9;

/// Weights on the triples of a [`Support`], in support order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportDistribution {
    weights: Vec<f64>,
}

impl SupportDistribution {
    /// Validates and renormalises. Inputs whose total is off by more than 1e-9
    /// are rejected.
    pub fn new(support: &Support, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != support.len() {
            return Err(Error::invalid(format!(
                "{} weights for a support of size {}",
                weights.len(),
                support.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > CONSTRUCT_TOLERANCE {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(SupportDistribution {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Normalises arbitrary nonnegative mass.
    pub fn from_mass(support: &Support, mass: Vec<f64>) -> Result<Self> {
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::invalid("mass must have a positive finite total"));
        }
        Self::new(support, mass.into_iter().map(|m| m / total).collect())
    }

    pub fn uniform(support: &Support) -> Self {
        let n = support.len();
        SupportDistribution {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(support: &Support, s: usize) -> Self {
        let mut weights = vec![0.0; support.len()];
        weights[s] = 1.0;
        SupportDistribution { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn weight_of(&self, support: &Support, t: &Triple) -> f64 {
        support.index_of(t).map_or(0.0, |s| self.weights[s])
    }
}

/// Per-label mass on each side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub sides: [Vec<f64>; 3],
}

impl Marginals {
    pub fn x(&self) -> &[f64] {
        &self.sides[0]
    }
    pub fn y(&self) -> &[f64] {
        &self.sides[1]
    }
    pub fn z(&self) -> &[f64] {
        &self.sides[2]
    }

    pub fn max_abs_diff(&self, other: &Marginals) -> f64 {
        let mut d: f64 = 0.0;
        for side in 0..3 {
            let (a, b) = (&self.sides[side], &other.sides[side]);
            for l in 0..a.len().max(b.len()) {
                let x = a.get(l).copied().unwrap_or(0.0);
                let y = b.get(l).copied().unwrap_or(0.0);
                d = d.max((x - y).abs());
            }
        }
        d
    }

    /// `(1/3) * sum of side entropies`, i.e. `ln alpha_B`.
    pub fn log_alpha_b(&self) -> f64 {
        self.sides.iter().map(|m| entropy(m)).sum::<f64>() / 3.0
    }
}

pub fn marginals_of(support: &Support, weights: &[f64]) -> Marginals {
    let mut sides: [Vec<f64>; 3] = [0, 1, 2].map(|s| vec![0.0; support.labels(s)]);
    for (t, &w) in support.triples().iter().zip(weights) {
        for side in 0..3 {
            sides[side][t[side] as usize] += w;
        }
    }
    Marginals { sides }
}

pub fn marginals(support: &Support, alpha: &SupportDistribution) -> Marginals {
    marginals_of(support, &alpha.weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    pub log_alpha_b: f64,
    pub log_alpha_n: f64,
    pub log_alpha_v: f64,
}

/// `ln alpha_V = sum alpha * ln V`, skipping zero-weight triples.
pub fn log_alpha_v(weights: &[f64], log_values: &[f64]) -> f64 {
    weights
        .iter()
        .zip(log_values)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, v)| w * v)
        .sum()
}

/// Derived quantities for per-triple values given as natural logs (so a
/// nonpositive value shows up as a non-finite log and is rejected).
pub fn derived(support: &Support, alpha: &SupportDistribution, log_values: &[f64]) -> Result<DerivedQuantities> {
    if log_values.len() != support.len() {
        return Err(Error::invalid("one value per support triple"));
    }
    if log_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("values must be positive and finite"));
    }
    Ok(DerivedQuantities {
        log_alpha_b: marginals(support, alpha).log_alpha_b(),
        log_alpha_n: entropy(&alpha.weights),
        log_alpha_v: log_alpha_v(&alpha.weights, log_values),
    })
}

/// A distribution on the `1/n` grid together with its integer counts.
#[derive(Clone, Debug, PartialEq)]
pub struct GridRounding {
    pub distribution: SupportDistribution,
    pub counts: Vec<u64>,
    pub n: u64,
}

/// Floor every `n * alpha`, then hand the `K` missing units to the entries
/// with the largest fractional parts (ties to the lower index).
pub fn round_to_grid(support: &Support, alpha: &SupportDistribution, n: u64) -> Result<GridRounding> {
    if n < support.len() as u64 {
        return Err(Error::invalid(format!(
            "grid size {n} is smaller than the support ({})",
            support.len()
        )));
    }
    let nf = n as f64;
    let mut counts: Vec<u64> = Vec::with_capacity(alpha.weights.len());
    let mut frac: Vec<(f64, usize)> = Vec::with_capacity(alpha.weights.len());
    for (s, &w) in alpha.weights.iter().enumerate() {
        let x = w * nf;
        let f = x.floor();
        counts.push(f as u64);
        frac.push((x - f, s));
    }
    let floor_total: u64 = counts.iter().sum();
    let missing = n.saturating_sub(floor_total) as usize;
    frac.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, s) in frac.iter().take(missing) {
        counts[s] += 1;
    }
    // Floors of weights summing to slightly above 1 can overshoot by one unit.
    let mut excess = counts.iter().sum::<u64>().saturating_sub(n);
    if excess > 0 {
        for &(_, s) in frac.iter().rev() {
            if excess == 0 {
                break;
            }
            if counts[s] > 0 {
                counts[s] -= 1;
                excess -= 1;
            }
        }
    }
    let weights = counts.iter().map(|&c| c as f64 / nf).collect();
    Ok(GridRounding {
        distribution: SupportDistribution { weights },
        counts,
        n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub drift_n: f64,
    pub drift_b: f64,
    pub drift_v: f64,
    /// `C * |S| * (1 + ln n) / n` with `C = 4`.
    pub threshold: f64,
    /// The same threshold scaled by the largest `|ln V|` (at least 1).
    pub threshold_v: f64,
}

impl DriftReport {
    pub fn within_bounds(&self) -> bool {
        self.drift_n <= self.threshold && self.drift_b <= self.threshold && self.drift_v <= self.threshold_v
    }
}

pub const DRIFT_CONSTANT: f64 = 4.0;

pub fn ratio_drift_check(
    support: &Support,
    alpha: &SupportDistribution,
    rounded: &SupportDistribution,
    log_values: &[f64],
    n: u64,
) -> Result<DriftReport> {
    let a = derived(support, alpha, log_values)?;
    let b = derived(support, rounded, log_values)?;
    let nf = n as f64;
    let threshold = DRIFT_CONSTANT * support.len() as f64 * (1.0 + nf.ln()) / nf;
    let scale = log_values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    Ok(DriftReport {
        drift_n: (a.log_alpha_n - b.log_alpha_n).abs(),
        drift_b: (a.log_alpha_b - b.log_alpha_b).abs(),
        drift_v: (a.log_alpha_v - b.log_alpha_v).abs(),
        threshold,
        threshold_v: threshold * scale,
    })
}

/// A finite group acting on the support by permutations of support indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymmetryGroup {
    elements: Vec<Vec<usize>>,
}

impl SymmetryGroup {
    pub fn trivial(support: &Support) -> Self {
        SymmetryGroup {
            elements: vec![(0..support.len()).collect()],
        }
    }

    /// Closure of the permutations induced by the given triple maps. Errors if
    /// some map does not send the support onto itself.
    pub fn generated_by(support: &Support, maps: &[&dyn Fn(Triple) -> Triple]) -> Result<Self> {
        let mut gens = Vec::with_capacity(maps.len());
        for f in maps {
            let mut perm = Vec::with_capacity(support.len());
            let mut seen = HashSet::with_capacity(support.len());
            for t in support.triples() {
                let image = f(*t);
                let s = support
                    .index_of(&image)
                    .ok_or_else(|| Error::invalid(format!("map sends {t:?} to {image:?}, outside the support")))?;
                if !seen.insert(s) {
                    return Err(Error::invalid("map is not injective on the support"));
                }
                perm.push(s);
            }
            gens.push(perm);
        }
        let identity: Vec<usize> = (0..support.len()).collect();
        let mut elements = vec![identity.clone()];
        let mut known: HashSet<Vec<usize>> = [identity].into_iter().collect();
        let mut frontier = 0;
        while frontier < elements.len() {
            let g = elements[frontier].clone();
            frontier += 1;
            for h in &gens {
                let composed: Vec<usize> = g.iter().map(|&s| h[s]).collect();
                if known.insert(composed.clone()) {
                    elements.push(composed);
                }
            }
        }
        Ok(SymmetryGroup { elements })
    }

    /// Permutations of the three roles, e.g. `[1, 2, 0]` maps `(i,j,k)` to
    /// `(j,k,i)`.
    pub fn from_roles(support: &Support, roles: &[[usize; 3]]) -> Result<Self> {
        let maps: Vec<Box<dyn Fn(Triple) -> Triple>> = roles
            .iter()
            .map(|r| {
                let r = *r;
                Box::new(move |t: Triple| [t[r[0]], t[r[1]], t[r[2]]]) as Box<dyn Fn(Triple) -> Triple>
            })
            .collect();
        let refs: Vec<&dyn Fn(Triple) -> Triple> = maps.iter().map(|b| b.as_ref()).collect();
        Self::generated_by(support, &refs)
    }

    /// All six role permutations.
    pub fn full_roles(support: &Support) -> Result<Self> {
        Self::from_roles(support, &[[1, 2, 0], [1, 0, 2]])
    }

    pub fn cyclic_roles(support: &Support) -> Result<Self> {
        Self::from_roles(support, &[[1, 2, 0]])
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.elements.len() == 1
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    /// Group average of a vector indexed by the support.
    pub fn average(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for g in &self.elements {
            for (s, &img) in g.iter().enumerate() {
                out[img] += v[s];
            }
        }
        let k = self.elements.len() as f64;
        out.iter_mut().for_each(|x| *x /= k);
        out
    }
}

pub fn symmetrize(alpha: &SupportDistribution, group: &SymmetryGroup) -> Result<SupportDistribution> {
    if group.elements.first().map(Vec::len) != Some(alpha.weights.len()) {
        return Err(Error::invalid("group acts on a support of a different size"));
    }
    Ok(SupportDistribution {
        weights: group.average(&alpha.weights),
    })
}

/// Entropy of a weight vector; exported for callers that hold raw slices.
pub fn log_alpha_n(weights: &[f64]) -> f64 {
    weights.iter().map(|&w| neg_xlogx(w)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_core::Support;

    fn cw_support() -> Support {
        Support::new(vec![[0, 0, 2], [0, 2, 0], [2, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 0]]).unwrap()
    }

    #[test]
    fn uniform_cw_marginals() {
        let s = cw_support();
        let m = marginals(&s, &SupportDistribution::uniform(&s));
        for side in 0..3 {
            let want = [0.5, 1.0 / 3.0, 1.0 / 6.0];
            for l in 0..3 {
                assert!((m.sides[side][l] - want[l]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn point_mass_quantities() {
        let s = cw_support();
        let a = SupportDistribution::point_mass(&s, 0);
        let m = marginals(&s, &a);
        assert_eq!(m.x(), &[1.0, 0.0, 0.0]);
        assert_eq!(m.z(), &[0.0, 0.0, 1.0]);
        let v = [0.7, 0.1, 0.2, 0.3, 0.4, 0.5];
        let d = derived(&s, &a, &v).unwrap();
        assert_eq!(d.log_alpha_n, 0.0);
        assert_eq!(d.log_alpha_b, 0.0);
        assert_eq!(d.log_alpha_v, 0.7);
    }

    #[test]
    fn uniform_entropy_terms() {
        let s = cw_support();
        let d = derived(&s, &SupportDistribution::uniform(&s), &[0.0; 6]).unwrap();
        assert!((d.log_alpha_n - 6f64.ln()).abs() < 1e-14);
        let h = -(0.5f64 * 0.5f64.ln() + (1.0 / 3.0) * (1.0f64 / 3.0).ln() + (1.0 / 6.0) * (1.0f64 / 6.0).ln());
        assert!((d.log_alpha_b - h).abs() < 1e-14);
    }

    #[test]
    fn derived_rejects_bad_values() {
        let s = cw_support();
        let a = SupportDistribution::uniform(&s);
        assert!(derived(&s, &a, &[f64::NEG_INFINITY, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn constructor_tolerance() {
        let s = Support::new(vec![[0, 0, 1], [0, 1, 0]]).unwrap();
        assert!(SupportDistribution::new(&s, vec![0.5, 0.5 + 1e-10]).is_ok());
        assert!(SupportDistribution::new(&s, vec![0.5, 0.6]).is_err());
        assert!(SupportDistribution::new(&s, vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn rounding_examples() {
        let s = Support::new(vec![[0, 0, 1], [0, 1, 0]]).unwrap();
        let a = SupportDistribution::new(&s, vec![0.3, 0.7]).unwrap();
        assert_eq!(round_to_grid(&s, &a, 10).unwrap().counts, vec![3, 7]);
        let a = SupportDistribution::new(&s, vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let r = round_to_grid(&s, &a, 10).unwrap();
        assert_eq!(r.counts.iter().sum::<u64>(), 10);
        for (x, y) in r.distribution.weights().iter().zip(a.weights()) {
            assert!((x - y).abs() <= 0.1);
        }
        let s3 = Support::new(vec![[0, 0, 1], [0, 1, 0], [1, 0, 0]]).unwrap();
        let a = SupportDistribution::new(&s3, vec![0.25, 0.25, 0.5]).unwrap();
        assert_eq!(round_to_grid(&s3, &a, 4).unwrap().counts, vec![1, 1, 2]);
    }

    #[test]
    fn cyclic_orbit_average() {
        let s = cw_support();
        let g = SymmetryGroup::cyclic_roles(&s).unwrap();
        assert_eq!(g.order(), 3);
        let a = SupportDistribution::point_mass(&s, 3);
        let b = symmetrize(&a, &g).unwrap();
        for t in [[0, 1, 1], [1, 1, 0], [1, 0, 1]] {
            assert!((b.weight_of(&s, &t) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(SymmetryGroup::full_roles(&s).unwrap().order(), 6);
    }

    #[test]
    fn group_must_stabilize_support() {
        let s = Support::new(vec![[0, 1, 1], [1, 0, 1]]).unwrap();
        assert!(SymmetryGroup::cyclic_roles(&s).is_err());
    }
}
