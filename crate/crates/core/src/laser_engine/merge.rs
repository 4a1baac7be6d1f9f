//! Classes with a zero index are a single thin matrix product.

use num_bigint::BigUint;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::numeric::{biguint_to_f64, multinomial};
use crate::tensor_core::ClassKey;

/// Number of triples of `T^t_{IJ0}`: each coordinate is a corner term
/// `(2,0,0)`, `(0,2,0)` or one of `q` middle terms `(1,1,0)`. With `b` middle
/// coordinates the corners split as `(I-b)/2` and `(J-b)/2`.
pub fn merged_count(q: u32, t: u32, i: u32, j: u32) -> Result<BigUint> {
    if i + j != 2 * t {
        return Err(Error::invalid(format!("I + J must equal {} for a merged class", 2 * t)));
    }
    let mut n = BigUint::zero();
    for b in 0..=i.min(j) {
        if !(i - b).is_multiple_of(2) || !(j - b).is_multiple_of(2) {
            continue;
        }
        let parts = [b as u64, ((i - b) / 2) as u64, ((j - b) / 2) as u64];
        n += multinomial(&parts) * BigUint::from(q).pow(b);
    }
    Ok(n)
}

/// The two nonzero-side indices of a class with a zero index.
pub fn merge_indices(class: &ClassKey) -> Option<(u32, u32)> {
    let [a, b, c] = class.indices();
    (a == 0).then_some((b, c))
}

pub fn class_count(class: &ClassKey) -> Result<BigUint> {
    let (i, j) = merge_indices(class).ok_or_else(|| Error::invalid(format!("{class} has no zero index")))?;
    merged_count(class.q, class.t, i, j)
}

/// `τ ln N` for `T^t_{IJ0}`.
pub fn merged_value(q: u32, t: u32, i: u32, j: u32, tau: f64) -> Result<f64> {
    let n = merged_count(q, t, i, j)?;
    if n.is_zero() {
        return Err(Error::invalid("merged class is the zero tensor"));
    }
    Ok(tau * biguint_to_f64(&n).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_counts() {
        assert_eq!(merged_count(2, 2, 2, 2).unwrap(), BigUint::from(6u32));
        assert_eq!(merged_count(5, 1, 1, 1).unwrap(), BigUint::from(5u32));
        assert_eq!(merged_count(2, 2, 3, 1).unwrap(), BigUint::from(4u32));
        assert_eq!(merged_count(7, 1, 0, 2).unwrap(), BigUint::from(1u32));
        assert_eq!(merged_count(0, 1, 1, 1).unwrap(), BigUint::zero());
        assert!(merged_value(0, 1, 1, 1, 0.8).is_err());
    }
}
