//! Random zeroing out of a block-diagonal tensor with extra off-diagonal
//! blocks, down to a direct sum of diagonal blocks.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` diagonal blocks `(i, i, i)` plus off-diagonal triples with pairwise
/// distinct coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSupport {
    pub n: usize,
    pub off_diag: Vec<[u32; 3]>,
}

impl BlockSupport {
    pub fn new(n: usize, mut off_diag: Vec<[u32; 3]>) -> Result<Self> {
        for t in &off_diag {
            if t.iter().any(|&v| v as usize >= n) {
                return Err(Error::invalid(format!("triple {t:?} out of range for n = {n}")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::invalid(format!(
                    "off-diagonal triple {t:?} repeats a coordinate"
                )));
            }
        }
        off_diag.sort_unstable();
        off_diag.dedup();
        Ok(BlockSupport { n, off_diag })
    }

    /// `|off_diag| / n`.
    pub fn m(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.off_diag.len() as f64 / self.n as f64
        }
    }

    /// `round(m n)` distinct off-diagonal triples drawn uniformly.
    pub fn random(n: usize, m: f64, seed: u64) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("need n >= 3 for off-diagonal triples"));
        }
        let want = (m * n as f64).round() as usize;
        let possible = (n as u128) * (n as u128 - 1) * (n as u128 - 2);
        if want as u128 > possible {
            return Err(Error::invalid("more triples requested than exist"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::with_capacity(want);
        let mut out = Vec::with_capacity(want);
        while out.len() < want {
            let v = sample(&mut rng, n, 3);
            let t = [v.index(0) as u32, v.index(1) as u32, v.index(2) as u32];
            if seen.insert(t) {
                out.push(t);
            }
        }
        BlockSupport::new(n, out)
    }

    /// Whether no off-diagonal triple lies entirely inside `kept`.
    pub fn is_diagonal_on(&self, kept: &[u32]) -> bool {
        let mut inside = vec![false; self.n];
        for &i in kept {
            if i as usize >= self.n {
                return false;
            }
            inside[i as usize] = true;
        }
        !self.off_diag.iter().any(|t| t.iter().all(|&v| inside[v as usize]))
    }
}

/// Outcome of the randomized zeroing out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroOutResult {
    /// Surviving diagonal blocks, sorted.
    pub kept: Vec<u32>,
    /// Inclusion probability used.
    pub p: f64,
    /// `m` after clamping to at least 1.
    pub m_used: f64,
    /// `|kept|` for every trial, in order.
    pub trial_sizes: Vec<usize>,
    pub best_trial: usize,
    /// `2n / (3 sqrt(3m))`.
    pub expectation_floor: f64,
}

/// One trial: keep each block with probability `p`, then drop the first
/// coordinate of every off-diagonal triple that survived whole.
fn one_trial(bs: &BlockSupport, p: f64, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let in_r: Vec<bool> = (0..bs.n).map(|_| rng.random::<f64>() < p).collect();
    let mut drop = vec![false; bs.n];
    for t in &bs.off_diag {
        if t.iter().all(|&v| in_r[v as usize]) {
            drop[t[0] as usize] = true;
        }
    }
    (0..bs.n as u32)
        .filter(|&i| in_r[i as usize] && !drop[i as usize])
        .collect()
}

/// Best of `trials` independent trials. The result is checked against every
/// off-diagonal triple before it is returned.
pub fn random_zero_out(bs: &BlockSupport, trials: usize, seed: u64) -> Result<ZeroOutResult> {
    let m_used = bs.m().max(1.0);
    let floor = 2.0 * bs.n as f64 / (3.0 * (3.0 * m_used).sqrt());
    if bs.off_diag.is_empty() {
        return Ok(ZeroOutResult {
            kept: (0..bs.n as u32).collect(),
            p: 1.0,
            m_used,
            trial_sizes: vec![bs.n],
            best_trial: 0,
            expectation_floor: floor,
        });
    }
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let p = 1.0 / (3.0 * m_used).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Vec<u32> = Vec::new();
    let mut best_trial = 0;
    let mut sizes = Vec::with_capacity(trials);
    for k in 0..trials {
        let kept = one_trial(bs, p, &mut rng);
        sizes.push(kept.len());
        if kept.len() > best.len() || k == 0 {
            best = kept;
            best_trial = k;
        }
    }
    if !bs.is_diagonal_on(&best) {
        return Err(Error::Solver("zeroing out left an off-diagonal triple".into()));
    }
    Ok(ZeroOutResult {
        kept: best,
        p,
        m_used,
        trial_sizes: sizes,
        best_trial,
        expectation_floor: floor,
    })
}

/// Largest `I` with no off-diagonal triple inside, by enumerating subsets.
pub fn max_diagonal_subset(bs: &BlockSupport) -> Result<Vec<u32>> {
    if bs.n > 24 {
        return Err(Error::CapExceeded {
            what: "exhaustive subset search",
            needed: 1u128 << bs.n,
            cap: 1 << 24,
        });
    }
    let masks: Vec<u32> = bs
        .off_diag
        .iter()
        .map(|t| t.iter().fold(0u32, |acc, &v| acc | (1 << v)))
        .collect();
    let mut best = 0u32;
    for s in 0u32..(1u32 << bs.n) {
        if s.count_ones() > best.count_ones() && masks.iter().all(|&m| s & m != m) {
            best = s;
        }
    }
    Ok((0..bs.n as u32).filter(|i| best & (1 << i) != 0).collect())
}
