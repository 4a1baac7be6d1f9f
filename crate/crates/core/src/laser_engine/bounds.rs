//! The refined laser bound and the weaker ratio bound it replaces.

use crate::distributions::{derived, DerivedQuantities, SupportDistribution};
use crate::error::{Error, Result};
use crate::tensor_core::Support;

const DOMINANCE_SLACK: f64 = 1e-9;

fn check_dominance(d: &DerivedQuantities, max_log_beta_n: f64) -> Result<()> {
    if !max_log_beta_n.is_finite() {
        return Err(Error::invalid("max entropy term must be finite"));
    }
    if max_log_beta_n < d.log_alpha_n - DOMINANCE_SLACK {
        return Err(Error::invalid(format!(
            "max entropy {max_log_beta_n} is below the distribution's own entropy {}",
            d.log_alpha_n
        )));
    }
    Ok(())
}

/// `ln α_V + ln α_B + (ln α_N - max ln β_N) / 2`.
pub fn refined_from_parts(d: &DerivedQuantities, max_log_beta_n: f64) -> Result<f64> {
    check_dominance(d, max_log_beta_n)?;
    Ok(d.log_alpha_v + d.log_alpha_b + 0.5 * (d.log_alpha_n - max_log_beta_n).min(0.0))
}

/// `ln α_V + ln α_B + ln α_N - max ln β_N`.
pub fn classic_from_parts(d: &DerivedQuantities, max_log_beta_n: f64) -> Result<f64> {
    check_dominance(d, max_log_beta_n)?;
    Ok(d.log_alpha_v + d.log_alpha_b + (d.log_alpha_n - max_log_beta_n).min(0.0))
}

pub fn refined_bound(
    support: &Support,
    log_values: &[f64],
    alpha: &SupportDistribution,
    max_log_beta_n: f64,
) -> Result<f64> {
    refined_from_parts(&derived(support, alpha, log_values)?, max_log_beta_n)
}

pub fn classic_bound(
    support: &Support,
    log_values: &[f64],
    alpha: &SupportDistribution,
    max_log_beta_n: f64,
) -> Result<f64> {
    classic_from_parts(&derived(support, alpha, log_values)?, max_log_beta_n)
}
