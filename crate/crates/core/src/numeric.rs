//! Small numeric helpers shared across modules.

use num_bigint::BigUint;
use num_traits::One;

/// `-x ln x` with the `0 ln 0 = 0` convention.
#[inline]
pub fn neg_xlogx(x: f64) -> f64 {
    if x > 0.0 {
        -x * x.ln()
    } else {
        0.0
    }
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().map(|&x| neg_xlogx(x)).sum()
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

pub fn factorial(n: u64) -> BigUint {
    (2..=n).fold(BigUint::one(), |acc, k| acc * k)
}

/// `n! / prod(k_i!)`; the parts must sum to `n`.
pub fn multinomial(parts: &[u64]) -> BigUint {
    let mut out = BigUint::one();
    let mut total = 0u64;
    for &k in parts {
        for j in 1..=k {
            total += 1;
            out *= total;
            out /= j;
        }
    }
    out
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::default();
    }
    multinomial(&[k, n - k])
}

/// `ln(n!)`, exact summation below 1e5 and Stirling above.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 100_000 {
        (2..=n).map(|k| (k as f64).ln()).sum()
    } else {
        let x = n as f64;
        x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x * x)
    }
}

pub fn ln_multinomial(parts: &[u64]) -> f64 {
    let n: u64 = parts.iter().sum();
    ln_factorial(n) - parts.iter().map(|&k| ln_factorial(k)).sum::<f64>()
}

pub fn biguint_to_f64(x: &BigUint) -> f64 {
    // to_f64 saturates to infinity, which is fine for counters we only compare
    num_traits::ToPrimitive::to_f64(x).unwrap_or(f64::INFINITY)
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

pub fn next_prime(n: u64) -> u64 {
    let mut k = n.max(2);
    while !is_prime(k) {
        k += 1;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multinomial_small() {
        assert_eq!(multinomial(&[2, 10]), BigUint::from(66u32));
        assert_eq!(multinomial(&[1, 1, 1]), BigUint::from(6u32));
        assert_eq!(binomial(5, 7), BigUint::default());
    }

    #[test]
    fn ln_factorial_branches_agree() {
        let exact: f64 = (2..=100_000u64).map(|k| (k as f64).ln()).sum();
        let a = ln_factorial(99_999) + (100_000f64).ln();
        assert!((a - exact).abs() < 1e-6);
        assert!((ln_factorial(100_000) - exact).abs() / exact < 1e-12);
    }

    #[test]
    fn primes() {
        assert_eq!(next_prime(6600), 6607);
        assert_eq!(next_prime(5), 5);
        assert!(!is_prime(1));
        assert!(is_prime(2));
    }

    #[test]
    fn entropy_uniform() {
        let p = [0.25; 4];
        assert!((entropy(&p) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
    }
}
