//! Block-level simulation of the four-step construction on
//! `T^{(x)n} (x) T^{r(x)n} (x) T^{rr(x)n}` for a small partitioned tensor.
//!
//! A block triple is determined by three sequences `σ, σ', σ''` in `S^n`,
//! one per factor, each with side sequences consistent with the marginals.
//! Its X-block is `(I(σ), J(σ'), K(σ''))`, its Y-block
//! `(J(σ), K(σ'), I(σ''))` and its Z-block `(K(σ), I(σ'), J(σ''))`.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{multinomial, next_prime};
use crate::tensor_core::{build_cw, Support, Triple};

use super::behrend::{behrend_set, SalemSpencerSet};
use super::zero_out::{random_zero_out, BlockSupport};

/// Default cap on the number of block triples enumerated.
pub const DEFAULT_TRIPLE_CAP: u128 = 1_000_000;

/// Trials for the final random zeroing out.
pub const ZERO_OUT_TRIALS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub seed: u64,
    pub n: u64,
    pub q: u32,
    pub support: Vec<Triple>,
    /// `n α` per support triple.
    pub alpha_counts: Vec<u64>,
    /// Number of consistent blocks per kind.
    pub n_b: u128,
    pub n_alpha: u128,
    pub n_t: u128,
    pub r: f64,
    pub modulus: u64,
    pub set_size: usize,
    pub c1: u64,
    pub c2: u64,
    pub c3: u64,
    pub c1_prime: u64,
    /// α-consistent triples left after the greedy block removal.
    pub diagonal: usize,
    /// Other triples whose three blocks all belong to those.
    pub off_diagonal: usize,
    pub l: usize,
    /// `(2 / (3 sqrt 3)) C1'^{3/2} / C3^{1/2} - 1`.
    pub l_floor: f64,
    pub expected_c1: f64,
    pub expected_c3: f64,
    pub linearity_violations: u64,
    pub block_disjoint: bool,
    pub hash_weights: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_ms: Option<u64>,
}

impl PipelineStats {
    pub fn l_bound_holds(&self) -> bool {
        if self.c1_prime == 0 || self.c3 < self.c1_prime {
            return true;
        }
        self.l as f64 >= self.l_floor
    }
}

/// Everything that does not depend on the hash seed.
#[derive(Clone, Debug)]
pub struct PipelineSetup {
    pub q: u32,
    pub n: u64,
    support: Support,
    p: u32,
    counts: Vec<u64>,
    /// Consistent sequences, as support indices per position.
    sequences: Vec<Vec<u8>>,
    is_alpha: Vec<bool>,
    /// Interned side-sequence id per sequence and side.
    side_id: Vec<[u32; 3]>,
    set: SalemSpencerSet,
    in_set: Vec<bool>,
    pub n_b: u128,
    pub n_alpha: u128,
    pub n_t: u128,
    pub r: f64,
}

fn to_u128(x: &BigUint, what: &'static str) -> Result<u128> {
    x.to_u128().ok_or(Error::CapExceeded {
        what,
        needed: u128::MAX,
        cap: u128::MAX,
    })
}

/// The `CW_q` block support and counts `(2, 0, 0, 10, 0, 0) n / 12`: mass on
/// `(0,0,2)` and `(1,0,1)` only, which keeps the block space small.
pub fn cw_default_counts(n: u64) -> Result<Vec<u64>> {
    if !n.is_multiple_of(6) || n == 0 {
        return Err(Error::invalid("the default distribution needs n divisible by 6"));
    }
    Ok(vec![n / 6, 0, 0, 5 * n / 6, 0, 0])
}

impl PipelineSetup {
    /// `counts[s] = n α_s` for the support triples in sorted order.
    pub fn new(q: u32, support: &Support, counts: &[u64], cap: u128) -> Result<Self> {
        let p = support
            .constant_sum()
            .ok_or_else(|| Error::invalid("support triples must have a constant sum"))?;
        if counts.len() != support.len() {
            return Err(Error::invalid("one count per support triple"));
        }
        if support.len() > 255 {
            return Err(Error::invalid("support too large for the block simulation"));
        }
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::invalid("counts must sum to a positive n"));
        }
        let mut side_counts: [Vec<u64>; 3] = [0, 1, 2].map(|side| vec![0; support.labels(side)]);
        for (s, t) in support.triples().iter().enumerate() {
            for side in 0..3 {
                side_counts[side][t[side] as usize] += counts[s];
            }
        }
        let n_b = (0..3).try_fold(1u128, |acc, side| {
            let c = to_u128(&multinomial(&side_counts[side]), "consistent blocks")?;
            acc.checked_mul(c).ok_or(Error::CapExceeded {
                what: "consistent blocks",
                needed: u128::MAX,
                cap: u128::MAX,
            })
        })?;
        let f_alpha = to_u128(&multinomial(counts), "consistent sequences")?;

        // Enumerate sequences with the right side counts, aborting past the
        // cube root of the cap.
        let f_cap = (cap as f64).cbrt().floor() as usize;
        let mut sequences = Vec::new();
        let mut cur = Vec::with_capacity(n as usize);
        let mut rem = side_counts.clone();
        enumerate(support, n as usize, &mut cur, &mut rem, &mut sequences, f_cap)?;
        let f = sequences.len() as u128;
        let n_t = f * f * f;
        if n_t > cap {
            return Err(Error::CapExceeded {
                what: "block triples",
                needed: n_t,
                cap,
            });
        }
        let is_alpha: Vec<bool> = sequences
            .iter()
            .map(|sq| {
                let mut c = vec![0u64; support.len()];
                for &s in sq {
                    c[s as usize] += 1;
                }
                c == counts
            })
            .collect();
        let n_alpha = f_alpha.pow(3);
        debug_assert_eq!(is_alpha.iter().filter(|&&b| b).count() as u128, f_alpha);

        let mut interners: [BTreeMap<Vec<u32>, u32>; 3] = Default::default();
        let side_id = sequences
            .iter()
            .map(|sq| {
                [0, 1, 2].map(|side| {
                    let key: Vec<u32> = sq.iter().map(|&s| support.triple(s as usize)[side]).collect();
                    let next = interners[side].len() as u32;
                    *interners[side].entry(key).or_insert(next)
                })
            })
            .collect();

        let r = n_alpha as f64 / n_b as f64;
        let modulus = next_prime(((100.0 * r).ceil() as u64).max(5));
        let set = behrend_set(modulus)?;
        let in_set = set.mask();
        Ok(PipelineSetup {
            q,
            n,
            support: support.clone(),
            p,
            counts: counts.to_vec(),
            sequences,
            is_alpha,
            side_id,
            set,
            in_set,
            n_b,
            n_alpha,
            n_t,
            r,
        })
    }

    /// `CW_q` with [`cw_default_counts`].
    pub fn cw_default(q: u32, n: u64) -> Result<Self> {
        let support = Support::new(build_cw(q as usize).block_support().into_iter().collect())?;
        PipelineSetup::new(q, &support, &cw_default_counts(n)?, DEFAULT_TRIPLE_CAP)
    }

    pub fn modulus(&self) -> u64 {
        self.set.modulus
    }

    pub fn set(&self) -> &SalemSpencerSet {
        &self.set
    }

    pub fn expected_c1(&self) -> f64 {
        let m = self.modulus() as f64;
        self.set.len() as f64 * self.n_alpha as f64 / (m * m)
    }

    pub fn expected_c3(&self) -> f64 {
        let m = self.modulus() as f64;
        self.set.len() as f64 * self.n_t as f64 / (m * m)
    }

    /// One run of hashing, pruning and the final zeroing out.
    pub fn run(&self, seed: u64) -> Result<PipelineStats> {
        let m = self.modulus();
        let n = self.n as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<u64> = (0..=3 * n).map(|_| rng.random_range(0..m)).collect();
        let p = self.p as u64;

        // Per sequence: partial sums of the three hash functions by slot.
        let lab = |sq: &[u8], side: usize, l: usize| self.support.triple(sq[l] as usize)[side] as u64;
        let slot = |sq: &[u8], side: usize, off: usize, flip: bool| -> u64 {
            (0..n).fold(0u64, |acc, l| {
                let v = if flip { p - lab(sq, side, l) } else { lab(sq, side, l) };
                (acc + w[1 + l + off] * v) % m
            })
        };
        let f = self.sequences.len();
        // hx: slot 0 from I(σ), slot 1 from J(σ'), slot 2 from K(σ'').
        // hy: slot 0 from J(σ), slot 1 from K(σ'), slot 2 from I(σ'').
        // hz: slot 0 from P-K(σ), slot 1 from P-I(σ'), slot 2 from P-J(σ'').
        let mut hx = vec![[0u64; 3]; f];
        let mut hy = vec![[0u64; 3]; f];
        let mut hz = vec![[0u64; 3]; f];
        for (i, sq) in self.sequences.iter().enumerate() {
            hx[i] = [slot(sq, 0, 0, false), slot(sq, 1, n, false), slot(sq, 2, 2 * n, false)];
            hy[i] = [slot(sq, 1, 0, false), slot(sq, 2, n, false), slot(sq, 0, 2 * n, false)];
            hz[i] = [slot(sq, 2, 0, true), slot(sq, 0, n, true), slot(sq, 1, 2 * n, true)];
        }
        let w0 = w[0];

        let mut survivors: Vec<[u32; 3]> = Vec::new();
        let mut violations = 0u64;
        for a in 0..f {
            for b in 0..f {
                let px = hx[a][0] + hx[b][1];
                let py = hy[a][0] + hy[b][1];
                let pz = hz[a][0] + hz[b][1];
                for c in 0..f {
                    let x = 2 * (px + hx[c][2]) % m;
                    if !self.in_set[x as usize] {
                        continue;
                    }
                    let y = (2 * w0 + 2 * (py + hy[c][2])) % m;
                    if !self.in_set[y as usize] {
                        continue;
                    }
                    let z = (w0 + pz + hz[c][2]) % m;
                    if !self.in_set[z as usize] {
                        continue;
                    }
                    if (x + y) % m != 2 * z % m {
                        violations += 1;
                    }
                    survivors.push([a as u32, b as u32, c as u32]);
                }
            }
        }

        let alpha_triple = |t: &[u32; 3]| t.iter().all(|&s| self.is_alpha[s as usize]);
        let blocks = |t: &[u32; 3]| -> [(u32, u32, u32); 3] {
            let (a, b, c) = (
                self.side_id[t[0] as usize],
                self.side_id[t[1] as usize],
                self.side_id[t[2] as usize],
            );
            [(a[0], b[1], c[2]), (a[1], b[2], c[0]), (a[2], b[0], c[1])]
        };
        let c3 = survivors.len() as u64;
        let alpha_idx: Vec<usize> = (0..survivors.len()).filter(|&i| alpha_triple(&survivors[i])).collect();
        let c1 = alpha_idx.len() as u64;

        // Block -> survivors using it, per kind.
        let mut users: [BTreeMap<(u32, u32, u32), Vec<usize>>; 3] = Default::default();
        for (i, t) in survivors.iter().enumerate() {
            for (kind, blk) in blocks(t).into_iter().enumerate() {
                users[kind].entry(blk).or_default().push(i);
            }
        }
        let is_alpha_surv: Vec<bool> = survivors.iter().map(alpha_triple).collect();
        let c2: u64 = users
            .iter()
            .flat_map(|u| u.values())
            .map(|v| {
                let g = v.iter().filter(|&&i| is_alpha_surv[i]).count() as u64;
                g * g.saturating_sub(1) / 2
            })
            .sum();
        let c1_prime = c1.saturating_sub(2 * c2);

        // Greedy removal of shared blocks. Counts only go down, so one pass in
        // key order finds every block that needs removing.
        let mut alive = vec![true; survivors.len()];
        for u in users.iter() {
            for list in u.values() {
                let g = list.iter().filter(|&&i| alive[i] && is_alpha_surv[i]).count();
                if g >= 2 {
                    for &i in list {
                        alive[i] = false;
                    }
                }
            }
        }
        let diag: Vec<usize> = alpha_idx.iter().copied().filter(|&i| alive[i]).collect();
        if (diag.len() as u64) < c1_prime {
            return Err(Error::Solver(format!(
                "block removal kept {} triples, fewer than C1' = {c1_prime}",
                diag.len()
            )));
        }
        let mut owner: [HashMap<(u32, u32, u32), u32>; 3] = Default::default();
        for (label, &i) in diag.iter().enumerate() {
            for (kind, blk) in blocks(&survivors[i]).into_iter().enumerate() {
                owner[kind].insert(blk, label as u32);
            }
        }
        let mut off = Vec::new();
        for (i, t) in survivors.iter().enumerate() {
            if !alive[i] || is_alpha_surv[i] {
                continue;
            }
            let b = blocks(t);
            let labels: Option<Vec<u32>> = (0..3).map(|k| owner[k].get(&b[k]).copied()).collect();
            if let Some(l) = labels {
                if l[0] == l[1] || l[1] == l[2] || l[0] == l[2] {
                    return Err(Error::Solver("a block triple shares two blocks with another".into()));
                }
                off.push([l[0], l[1], l[2]]);
            }
        }
        let bs = BlockSupport::new(diag.len(), off)?;
        let off_diagonal = bs.off_diag.len();
        let zo = random_zero_out(&bs, ZERO_OUT_TRIALS, seed ^ 0x9e37_79b9_7f4a_7c15)?;

        // Final structure: only the kept diagonal triples may have all three
        // blocks kept, and they must not share blocks.
        let mut kept_blocks: [HashMap<(u32, u32, u32), usize>; 3] = Default::default();
        let mut block_disjoint = true;
        for &label in &zo.kept {
            let i = diag[label as usize];
            for (kind, blk) in blocks(&survivors[i]).into_iter().enumerate() {
                if kept_blocks[kind].insert(blk, i).is_some() {
                    block_disjoint = false;
                }
            }
        }
        for (i, t) in survivors.iter().enumerate() {
            let b = blocks(t);
            let inside = (0..3).all(|k| kept_blocks[k].contains_key(&b[k]));
            if inside && (0..3).any(|k| kept_blocks[k][&b[k]] != i) {
                block_disjoint = false;
            }
        }

        let l = zo.kept.len();
        let l_floor = if c3 > 0 {
            2.0 / (3.0 * 3f64.sqrt()) * (c1_prime as f64).powf(1.5) / (c3 as f64).sqrt() - 1.0
        } else {
            -1.0
        };
        Ok(PipelineStats {
            seed,
            n: self.n,
            q: self.q,
            support: self.support.triples().to_vec(),
            alpha_counts: self.counts.clone(),
            n_b: self.n_b,
            n_alpha: self.n_alpha,
            n_t: self.n_t,
            r: self.r,
            modulus: m,
            set_size: self.set.len(),
            c1,
            c2,
            c3,
            c1_prime,
            diagonal: diag.len(),
            off_diagonal,
            l,
            l_floor,
            expected_c1: self.expected_c1(),
            expected_c3: self.expected_c3(),
            linearity_violations: violations,
            block_disjoint,
            hash_weights: w,
            wall_time_ms: None,
        })
    }
}

fn enumerate(
    support: &Support,
    left: usize,
    cur: &mut Vec<u8>,
    rem: &mut [Vec<u64>; 3],
    out: &mut Vec<Vec<u8>>,
    cap: usize,
) -> Result<()> {
    if left == 0 {
        if out.len() >= cap {
            return Err(Error::CapExceeded {
                what: "consistent sequences",
                needed: out.len() as u128 + 1,
                cap: cap as u128,
            });
        }
        out.push(cur.clone());
        return Ok(());
    }
    for (s, t) in support.triples().iter().enumerate() {
        if (0..3).all(|side| rem[side][t[side] as usize] > 0) {
            for side in 0..3 {
                rem[side][t[side] as usize] -= 1;
            }
            cur.push(s as u8);
            let r = enumerate(support, left - 1, cur, rem, out, cap);
            cur.pop();
            for side in 0..3 {
                rem[side][t[side] as usize] += 1;
            }
            r?;
        }
    }
    Ok(())
}

/// One run on `CW_q` with α rounded to the `1/n` grid.
pub fn simulate_laser_pipeline(q: u32, n: u64, alpha: &[f64], seed: u64) -> Result<PipelineStats> {
    let support = Support::new(build_cw(q as usize).block_support().into_iter().collect())?;
    let dist = crate::distributions::SupportDistribution::new(&support, alpha.to_vec())?;
    let grid = crate::distributions::round_to_grid(&support, &dist, n)?;
    PipelineSetup::new(q, &support, &grid.counts, DEFAULT_TRIPLE_CAP)?.run(seed)
}
