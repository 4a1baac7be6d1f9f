//! Instances on which the random zeroing out cannot do much better: every
//! large enough set of blocks contains an off-diagonal triple.

use std::collections::{HashMap, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::zero_out::BlockSupport;

/// Fraction of random sets that must contain a triple for `s` to count as
/// covered when measuring the effective threshold.
pub const COVERAGE_LEVEL: f64 = 0.995;

/// A random `s`-subset of `[n]` as a bitset.
#[derive(Clone, Debug)]
struct Bits(Vec<u64>);

impl Bits {
    fn random(n: usize, s: usize, rng: &mut ChaCha8Rng) -> Bits {
        let mut w = vec![0u64; n.div_ceil(64)];
        for i in sample(rng, n, s).iter() {
            w[i / 64] |= 1 << (i % 64);
        }
        Bits(w)
    }

    fn has(&self, i: u32) -> bool {
        self.0[i as usize / 64] >> (i % 64) & 1 == 1
    }

    fn holds(&self, t: &[u32; 3]) -> bool {
        t.iter().all(|&v| self.has(v))
    }

    fn members(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for (k, &w) in self.0.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                out.push((k * 64) as u32 + w.trailing_zeros());
                w &= w - 1;
            }
        }
        out
    }
}

/// Fraction of `samples` uniformly random `s`-subsets of `[n]` that contain
/// some off-diagonal triple of `bs`.
pub fn coverage(bs: &BlockSupport, s: usize, samples: usize, seed: u64) -> f64 {
    if s > bs.n || samples == 0 {
        return if s > bs.n { 1.0 } else { 0.0 };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hit = (0..samples)
        .filter(|_| {
            let b = Bits::random(bs.n, s, &mut rng);
            bs.off_diag.iter().any(|t| b.holds(t))
        })
        .count();
    hit as f64 / samples as f64
}

/// Smallest `s` at which fresh random `s`-subsets are covered at
/// [`COVERAGE_LEVEL`]. Coverage is monotone in `s`, so this bisects.
pub fn effective_threshold(bs: &BlockSupport, samples: usize, seed: u64) -> usize {
    let (mut lo, mut hi) = (2usize, bs.n);
    if coverage(bs, hi, samples, seed) < COVERAGE_LEVEL {
        return bs.n + 1;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if coverage(bs, mid, samples, seed) >= COVERAGE_LEVEL {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceStats {
    pub n: usize,
    pub m: usize,
    /// `n ln n / sqrt(m)`.
    pub s_natural_log: f64,
    /// `n log2 n / sqrt(m)`.
    pub s_log2: f64,
    /// Subset size the construction ended up covering on its training sets.
    pub s_target: usize,
    /// Smallest size covered at the fixed level on fresh samples.
    pub s_effective: usize,
    pub coverage_at_target: f64,
    pub triples: usize,
    /// `|off_diag| / (m n)`.
    pub size_constant: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct GreedyOptions {
    /// Training subsets drawn per target size.
    pub samples: usize,
    /// Candidate triples scored per greedy step.
    pub candidates: usize,
    /// Fresh subsets used for the reported coverage figures.
    pub check_samples: usize,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        GreedyOptions {
            samples: 2_000,
            candidates: 32,
            check_samples: 1_000,
        }
    }
}

/// Greedy covering construction on sampled subsets. Starting from
/// `s = min(n, n ln n / sqrt(m))`, it adds the candidate triple that lies in
/// the most uncovered training subsets until all are covered, then lowers `s`
/// and continues, while the budget of `m n` triples lasts.
pub fn greedy_hard_instance(
    n: usize,
    m: usize,
    seed: u64,
    opts: &GreedyOptions,
) -> Result<(BlockSupport, HardInstanceStats)> {
    if n < 3 || m == 0 {
        return Err(Error::invalid("need n >= 3 and m >= 1"));
    }
    let mut warnings = Vec::new();
    if n < 64 {
        warnings.push(format!("n = {n} is below the intended scale (64)"));
    }
    let ln = (n as f64).ln() * n as f64 / (m as f64).sqrt();
    let l2 = (n as f64).log2() * n as f64 / (m as f64).sqrt();
    let budget = m * n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<[u32; 3]> = Vec::new();
    let mut chosen_set: HashSet<[u32; 3]> = HashSet::new();
    let mut s = (ln.ceil() as usize).clamp(3, n);
    let mut covered_sizes: Vec<usize> = Vec::new();

    'sizes: loop {
        let mut open: Vec<Bits> = (0..opts.samples)
            .map(|_| Bits::random(n, s, &mut rng))
            .filter(|b| !chosen.iter().any(|t| b.holds(t)))
            .collect();
        while !open.is_empty() {
            if chosen.len() >= budget {
                break 'sizes;
            }
            // Candidates come from inside uncovered subsets so each one helps.
            let mut best: Option<([u32; 3], usize)> = None;
            for _ in 0..opts.candidates {
                let b = &open[rng.random_range(0..open.len())];
                let mem = b.members();
                let pick = sample(&mut rng, mem.len(), 3);
                let t = [mem[pick.index(0)], mem[pick.index(1)], mem[pick.index(2)]];
                if chosen_set.contains(&t) {
                    continue;
                }
                let score = open.iter().filter(|b| b.holds(&t)).count();
                if best.is_none_or(|(_, sc)| score > sc) {
                    best = Some((t, score));
                }
            }
            let Some((t, _)) = best else { continue };
            chosen.push(t);
            chosen_set.insert(t);
            open.retain(|b| !b.holds(&t));
        }
        covered_sizes.push(s);
        if s <= 3 {
            break;
        }
        s -= (s / 20).max(1);
    }

    let bs = BlockSupport::new(n, chosen)?;
    // Training sets are covered by construction; the target is the smallest
    // trained size that also holds up on a held-out batch.
    let holdout_seed = seed ^ 0x0dd_ba11;
    let s_target = covered_sizes
        .iter()
        .rev()
        .copied()
        .find(|&s| coverage(&bs, s, opts.check_samples, holdout_seed) >= COVERAGE_LEVEL)
        .or(covered_sizes.first().copied())
        .unwrap_or(n + 1);
    let check_seed = seed ^ 0x5eed_c0de;
    let coverage_at_target = if s_target <= n {
        coverage(&bs, s_target, opts.check_samples, check_seed)
    } else {
        0.0
    };
    let s_effective = effective_threshold(&bs, opts.check_samples, check_seed);
    let stats = HardInstanceStats {
        n,
        m,
        s_natural_log: ln,
        s_log2: l2,
        s_target,
        s_effective,
        coverage_at_target,
        triples: bs.off_diag.len(),
        size_constant: bs.off_diag.len() as f64 / (m * n) as f64,
        warnings,
    };
    Ok((bs, stats))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeInstanceStats {
    pub hard: HardInstanceStats,
    /// Triples drawn on the doubled universe, before any removal.
    pub drawn: usize,
    /// Universe elements removed to break pairs sharing two elements.
    pub removed_for_conflicts: usize,
    pub attempts: usize,
}

fn unordered(t: &[u32; 3]) -> [u32; 3] {
    let mut s = *t;
    s.sort_unstable();
    s
}

/// Whether any two triples share two or more elements.
pub fn is_free(bs: &BlockSupport) -> bool {
    let mut pairs: HashSet<(u32, u32)> = HashSet::new();
    for t in &bs.off_diag {
        let [a, b, c] = unordered(t);
        for p in [(a, b), (a, c), (b, c)] {
            if !pairs.insert(p) {
                return false;
            }
        }
    }
    true
}

/// Random free instance: draw each 3-subset of a universe of size `2n` with
/// probability `2nm / (3 C(2n, 3))`, delete one element of every pair of
/// triples sharing two elements, then trim the universe to `n` and relabel.
pub fn free_hard_instance(
    n: usize,
    m: usize,
    seed: u64,
    opts: &GreedyOptions,
) -> Result<(BlockSupport, FreeInstanceStats)> {
    if n < 3 || m < 2 {
        return Err(Error::invalid("need n >= 3 and m >= 2"));
    }
    let mut warnings = Vec::new();
    let ln = (n as f64).ln();
    if (m as f64) < ln * ln || (m as f64) > (n as f64 / 6.0).sqrt() {
        warnings.push(format!(
            "m = {m} is outside [ln^2 n, sqrt(n/6)] = [{:.2}, {:.2}]",
            ln * ln,
            (n as f64 / 6.0).sqrt()
        ));
    }
    let universe = 2 * n;
    let total = {
        let u = universe as f64;
        u * (u - 1.0) * (u - 2.0) / 6.0
    };
    let p = (universe * m) as f64 / (3.0 * total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const MAX_ATTEMPTS: usize = 100;
    for attempt in 1..=MAX_ATTEMPTS {
        let count = Binomial::new(total as u64, p.min(1.0))
            .map_err(|e| Error::invalid(e.to_string()))?
            .sample(&mut rng) as usize;
        let mut drawn: HashSet<[u32; 3]> = HashSet::with_capacity(count);
        while drawn.len() < count {
            let v = sample(&mut rng, universe, 3);
            let mut t = [v.index(0) as u32, v.index(1) as u32, v.index(2) as u32];
            t.sort_unstable();
            drawn.insert(t);
        }
        let mut triples: Vec<[u32; 3]> = drawn.into_iter().collect();
        triples.sort_unstable();
        let drawn_count = triples.len();

        let mut alive = vec![true; universe];
        let mut by_pair: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        for (i, &[a, b, c]) in triples.iter().enumerate() {
            for pr in [(a, b), (a, c), (b, c)] {
                by_pair.entry(pr).or_default().push(i);
            }
        }
        let mut conflicts: Vec<(u32, u32)> = by_pair.iter().filter(|(_, v)| v.len() > 1).map(|(k, _)| *k).collect();
        conflicts.sort_unstable();
        let mut removed = 0;
        for (a, b) in conflicts {
            let live: Vec<usize> = by_pair[&(a, b)]
                .iter()
                .copied()
                .filter(|&i| triples[i].iter().all(|&v| alive[v as usize]))
                .collect();
            if live.len() > 1 {
                alive[a as usize] = false;
                removed += 1;
            }
        }
        let remaining: Vec<u32> = (0..universe as u32).filter(|&v| alive[v as usize]).collect();
        if remaining.len() < n {
            continue;
        }
        let mut keep = vec![None; universe];
        for (new, &old) in remaining[..n].iter().enumerate() {
            keep[old as usize] = Some(new as u32);
        }
        let off: Vec<[u32; 3]> = triples
            .iter()
            .filter_map(|t| Some([keep[t[0] as usize]?, keep[t[1] as usize]?, keep[t[2] as usize]?]))
            .collect();
        let bs = BlockSupport::new(n, off)?;
        if !is_free(&bs) {
            return Err(Error::Solver("free construction produced a shared pair".into()));
        }
        let s_ln = (n as f64).ln() * n as f64 / (m as f64).sqrt();
        let s_target = (s_ln.ceil() as usize).min(n);
        let check_seed = seed ^ 0x5eed_c0de;
        let hard = HardInstanceStats {
            n,
            m,
            s_natural_log: s_ln,
            s_log2: (n as f64).log2() * n as f64 / (m as f64).sqrt(),
            s_target,
            s_effective: effective_threshold(&bs, opts.check_samples, check_seed),
            coverage_at_target: coverage(&bs, s_target, opts.check_samples, check_seed),
            triples: bs.off_diag.len(),
            size_constant: bs.off_diag.len() as f64 / (m * n) as f64,
            warnings,
        };
        return Ok((
            bs,
            FreeInstanceStats {
                hard,
                drawn: drawn_count,
                removed_for_conflicts: removed,
                attempts: attempt,
            },
        ));
    }
    Err(Error::Solver(format!(
        "universe fell below {n} in each of {MAX_ATTEMPTS} attempts"
    )))
}
