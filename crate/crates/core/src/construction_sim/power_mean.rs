//! Picking one outcome that does at least as well as the averages.

use crate::error::{Error, Result};

/// Index maximising `a_i^{3/2} / b_i^{1/2}`; the first one on ties. The
/// maximum is at least `A^{3/2} / B^{1/2}` for the means `A`, `B`.
pub fn power_mean_select(a: &[f64], b: &[f64]) -> Result<usize> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::invalid("need two nonempty sequences of equal length"));
    }
    if a.iter().chain(b).any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::invalid("entries must be positive and finite"));
    }
    let score = |i: usize| 1.5 * a[i].ln() - 0.5 * b[i].ln();
    let mut best = 0;
    for i in 1..a.len() {
        if score(i) > score(best) {
            best = i;
        }
    }
    Ok(best)
}

/// `A^{3/2} / B^{1/2}` for the means of `a` and `b`.
pub fn mean_floor(a: &[f64], b: &[f64]) -> f64 {
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    ma.powf(1.5) / mb.sqrt()
}
