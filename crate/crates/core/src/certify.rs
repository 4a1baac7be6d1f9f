//! Extended-precision re-evaluation of value bounds.
//!
//! Search runs in `f64`; every bound that feeds an exponent claim is
//! recomputed here from its distribution. The maximum-entropy term is bounded
//! from above by weak duality, so the recomputed value is a valid lower bound
//! for any dual multipliers, however they were found.

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::solver::Fit;
use crate::tensor_core::Support;

/// 256 bits is a little over 77 decimal digits.
pub const DEFAULT_PRECISION_BITS: usize = 256;

pub struct Hp {
    bits: usize,
    rm: RoundingMode,
    consts: Consts,
}

impl Hp {
    pub fn new(bits: usize) -> Result<Self> {
        if bits < 170 {
            return Err(Error::invalid("certification needs at least 170 bits (50 digits)"));
        }
        let consts = Consts::new().map_err(|e| Error::Certification(format!("{e:?}")))?;
        Ok(Hp {
            bits,
            rm: RoundingMode::ToEven,
            consts,
        })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn digits(&self) -> usize {
        (self.bits as f64 * std::f64::consts::LOG10_2).floor() as usize
    }

    pub fn f64(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.bits)
    }

    pub fn u64(&self, x: u64) -> BigFloat {
        BigFloat::from_u64(x, self.bits)
    }

    pub fn zero(&self) -> BigFloat {
        self.u64(0)
    }

    pub fn biguint(&mut self, x: &BigUint) -> BigFloat {
        self.parse(&x.to_string())
    }

    pub fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.bits, self.rm)
    }

    pub fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.bits, self.rm)
    }

    pub fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.bits, self.rm)
    }

    pub fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, self.bits, self.rm)
    }

    pub fn ln(&mut self, a: &BigFloat) -> BigFloat {
        a.ln(self.bits, self.rm, &mut self.consts)
    }

    pub fn exp(&mut self, a: &BigFloat) -> BigFloat {
        a.exp(self.bits, self.rm, &mut self.consts)
    }

    pub fn parse(&mut self, s: &str) -> BigFloat {
        BigFloat::parse(s.trim(), Radix::Dec, self.bits, self.rm, &mut self.consts)
    }

    pub fn parse_checked(&mut self, s: &str) -> Result<BigFloat> {
        let x = self.parse(s);
        if x.is_nan() || x.is_inf() {
            return Err(Error::Schema(format!("not a finite decimal: '{s}'")));
        }
        Ok(x)
    }

    pub fn to_decimal(&mut self, a: &BigFloat) -> String {
        a.format(Radix::Dec, self.rm, &mut self.consts)
            .unwrap_or_else(|_| "NaN".into())
    }

    pub fn to_f64(&mut self, a: &BigFloat) -> f64 {
        self.to_decimal(a).parse().unwrap_or(f64::NAN)
    }

    /// `a >= b`.
    pub fn ge(&self, a: &BigFloat, b: &BigFloat) -> bool {
        matches!(a.cmp(b), Some(c) if c >= 0)
    }

    pub fn sum(&self, xs: impl IntoIterator<Item = BigFloat>) -> BigFloat {
        xs.into_iter().fold(self.zero(), |acc, x| self.add(&acc, &x))
    }

    /// `-x ln x` with `0 ln 0 = 0`.
    pub fn neg_xlogx(&mut self, x: &BigFloat) -> BigFloat {
        if x.is_zero() {
            return self.zero();
        }
        let l = self.ln(x);
        self.mul(x, &l).neg()
    }

    pub fn logsumexp(&mut self, xs: &[BigFloat]) -> BigFloat {
        let mut m = xs[0].clone();
        for x in &xs[1..] {
            if !self.ge(&m, x) {
                m = x.clone();
            }
        }
        let mut acc = self.zero();
        for x in xs {
            let d = self.sub(x, &m);
            let e = self.exp(&d);
            acc = self.add(&acc, &e);
        }
        let l = self.ln(&acc);
        self.add(&m, &l)
    }
}

/// Pieces of a certified bound, all in natural log.
#[derive(Clone, Debug)]
pub struct CertifiedBound {
    pub log_value: BigFloat,
    pub log_alpha_v: BigFloat,
    pub log_alpha_b: BigFloat,
    pub log_alpha_n: BigFloat,
    /// Upper bound on `max ln β_N` over distributions with α's marginals.
    pub beta_upper: BigFloat,
}

/// Recompute `ln α_V + ln α_B + (ln α_N - max ln β_N)/2` for `α` normalised
/// in extended precision, with the max-entropy term replaced by the dual
/// bound `ln Σ exp(Aᵀf) - <f, m>` at the multipliers of `beta_fit`.
pub fn certify_refined(
    hp: &mut Hp,
    support: &Support,
    log_values: &[BigFloat],
    alpha: &[f64],
    beta_fit: &Fit,
) -> Result<CertifiedBound> {
    if alpha.len() != support.len() || log_values.len() != support.len() {
        return Err(Error::invalid("certification inputs do not match the support"));
    }
    if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::Certification("distribution has invalid weights".into()));
    }
    let raw: Vec<BigFloat> = alpha.iter().map(|&a| hp.f64(a)).collect();
    let total = hp.sum(raw.iter().cloned());
    if total.is_zero() {
        return Err(Error::Certification("distribution has no mass".into()));
    }
    let w: Vec<BigFloat> = raw.iter().map(|x| hp.div(x, &total)).collect();

    let mut marg: [Vec<BigFloat>; 3] = [0, 1, 2].map(|side| vec![hp.zero(); support.labels(side)]);
    for (s, t) in support.triples().iter().enumerate() {
        for side in 0..3 {
            let l = t[side] as usize;
            marg[side][l] = hp.add(&marg[side][l], &w[s]);
        }
    }

    let mut log_alpha_v = hp.zero();
    let mut log_alpha_n = hp.zero();
    for s in 0..support.len() {
        if w[s].is_zero() {
            continue;
        }
        let wv = hp.mul(&w[s], &log_values[s]);
        log_alpha_v = hp.add(&log_alpha_v, &wv);
        let h = hp.neg_xlogx(&w[s]);
        log_alpha_n = hp.add(&log_alpha_n, &h);
    }
    let mut side_h = hp.zero();
    for side in marg.iter() {
        for m in side {
            let h = hp.neg_xlogx(m);
            side_h = hp.add(&side_h, &h);
        }
    }
    let log_alpha_b = hp.div(&side_h, &hp.u64(3));

    // Every triple α uses must be admissible for the dual; a triple outside
    // the fit's active set would mean the marginals disagree in sign pattern.
    let mut potentials = Vec::with_capacity(beta_fit.active.len());
    for &s in &beta_fit.active {
        let t = support.triple(s);
        let mut x = hp.zero();
        for side in 0..3 {
            let f = beta_fit.log_factors[side][t[side] as usize]
                .ok_or_else(|| Error::Certification("dual multiplier missing".into()))?;
            x = hp.add(&x, &hp.f64(f));
        }
        potentials.push(x);
    }
    for (s, a) in alpha.iter().enumerate() {
        if *a > 0.0 && !beta_fit.active.contains(&s) {
            return Err(Error::Certification(format!(
                "triple {:?} carries mass but is outside the dual's support",
                support.triple(s)
            )));
        }
    }
    if potentials.is_empty() {
        return Err(Error::Certification("empty dual support".into()));
    }
    let mut beta_upper = hp.logsumexp(&potentials);
    for side in 0..3 {
        for (l, m) in marg[side].iter().enumerate() {
            if m.is_zero() {
                continue;
            }
            let f = beta_fit.log_factors[side]
                .get(l)
                .copied()
                .flatten()
                .ok_or_else(|| Error::Certification("label with mass has no multiplier".into()))?;
            let fm = hp.mul(&hp.f64(f), m);
            beta_upper = hp.sub(&beta_upper, &fm);
        }
    }
    // Weak duality never undercuts α's own entropy; if rounding ever made it
    // do so, the larger value is still an upper bound.
    if !hp.ge(&beta_upper, &log_alpha_n) {
        beta_upper = log_alpha_n.clone();
    }
    let penalty = hp.sub(&log_alpha_n, &beta_upper);
    let half = hp.f64(0.5);
    let half_penalty = hp.mul(&penalty, &half);
    let vb = hp.add(&log_alpha_v, &log_alpha_b);
    let log_value = hp.add(&vb, &half_penalty);
    Ok(CertifiedBound {
        log_value,
        log_alpha_v,
        log_alpha_b,
        log_alpha_n,
        beta_upper,
    })
}

/// `τ ln N` in extended precision.
pub fn log_matmul_value(hp: &mut Hp, n: &BigUint, tau: f64) -> Result<BigFloat> {
    if n == &BigUint::default() {
        return Err(Error::invalid("zero tensor has no value"));
    }
    let x = hp.biguint(n);
    let l = hp.ln(&x);
    Ok(hp.mul(&hp.f64(tau), &l))
}
