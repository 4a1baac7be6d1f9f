//! The asymptotic sum inequality: `Σ (a b c)^τ = r`.

use crate::error::{Error, Result};
use crate::tensor_core::MatMulShape;

pub fn asymptotic_sum(shapes: &[MatMulShape], tau: f64) -> f64 {
    shapes.iter().map(|s| s.volume().powf(tau)).sum()
}

/// The τ in [2/3, 1] with `Σ (a_i b_i c_i)^τ = r`, to 1e-12.
pub fn schonhage_tau(shapes: &[MatMulShape], r: f64) -> Result<f64> {
    if shapes.is_empty() {
        return Err(Error::invalid("need at least one matrix product"));
    }
    if !(r > shapes.len() as f64) {
        return Err(Error::invalid(format!(
            "rank {r} must exceed the number of products ({})",
            shapes.len()
        )));
    }
    let (mut lo, mut hi) = (2.0 / 3.0, 1.0);
    if asymptotic_sum(shapes, lo) > r {
        return Err(Error::NoSolution(format!("sum exceeds {r} already at tau = 2/3")));
    }
    if asymptotic_sum(shapes, hi) < r {
        return Err(Error::NoSolution(format!("sum stays below {r} at tau = 1")));
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if asymptotic_sum(shapes, mid) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
