//! Sets in `Z_M` with no nontrivial solution of `a + b = 2c`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SalemSpencerSet {
    pub modulus: u64,
    /// Sorted ascending, all below `modulus`.
    pub elements: Vec<u64>,
}

impl SalemSpencerSet {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, x: u64) -> bool {
        self.elements.binary_search(&x).is_ok()
    }

    /// Membership table indexed by residue.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.modulus as usize];
        for &x in &self.elements {
            m[x as usize] = true;
        }
        m
    }
}

/// Residues `c` with `2c ≡ s (mod m)`.
fn halves(s: u64, m: u64) -> impl Iterator<Item = u64> {
    let s = s % m;
    let (a, b) = if m % 2 == 1 {
        let c = if s.is_multiple_of(2) { s / 2 } else { (s + m) / 2 };
        (Some(c), None)
    } else if s.is_multiple_of(2) {
        (Some(s / 2), Some(s / 2 + m / 2))
    } else {
        (None, None)
    };
    a.into_iter().chain(b)
}

/// Marks every residue that would close a progression with `x` and the
/// current members.
fn forbid(forbidden: &mut [bool], members: &[u64], x: u64, m: u64) {
    forbidden[x as usize] = true;
    if m.is_multiple_of(2) {
        forbidden[((x + m / 2) % m) as usize] = true;
    }
    for &a in members {
        forbidden[((2 * a + m - x % m) % m) as usize] = true;
        forbidden[((2 * x + m - a) % m) as usize] = true;
        for c in halves(a + x, m) {
            forbidden[c as usize] = true;
        }
    }
}

/// Numbers below `limit` whose base-3 digits are all 0 or 1. Sums of two such
/// numbers have no carries, so `a + b = 2c` forces `a = b = c`.
pub fn base3_seed(limit: u64) -> Vec<u64> {
    let mut out = vec![0u64];
    let mut p = 1u64;
    while p < limit {
        let extra: Vec<u64> = out.iter().map(|x| x + p).filter(|&x| x < limit).collect();
        if extra.is_empty() {
            break;
        }
        out.extend(extra);
        p *= 3;
    }
    out.sort_unstable();
    out
}

/// Local-search steps per residue; the search stops early once it reaches
/// `M^0.6`.
pub const SEARCH_STEPS_PER_RESIDUE: u64 = 200;

/// Target size for the local search.
pub fn practical_floor(modulus: u64) -> usize {
    (modulus as f64).powf(0.6).ceil() as usize
}

/// Residues `y` that complete a progression with members `x` and `a`
/// (`a == x` covers the degenerate `x + x = 2y`).
fn completions(x: u64, a: u64, m: u64) -> impl Iterator<Item = u64> {
    let outer = if a == x {
        [None, None]
    } else {
        [Some((2 * a + m - x) % m), Some((2 * x + m - a) % m)]
    };
    outer.into_iter().flatten().chain(halves(a + x, m))
}

/// A progression-free set with, for every residue, the number of member
/// pairs it would complete a progression with.
struct Packing {
    m: u64,
    member: Vec<bool>,
    members: Vec<u64>,
    conflicts: Vec<u32>,
}

impl Packing {
    fn new(m: u64) -> Self {
        Packing {
            m,
            member: vec![false; m as usize],
            members: Vec::new(),
            conflicts: vec![0; m as usize],
        }
    }

    fn bump(&mut self, x: u64, up: bool) {
        let m = self.m;
        let others: Vec<u64> = self.members.clone();
        for a in others.into_iter().chain(std::iter::once(x)) {
            for y in completions(x, a, m) {
                let c = &mut self.conflicts[y as usize];
                if up {
                    *c += 1;
                } else {
                    *c -= 1;
                }
            }
        }
    }

    fn insert(&mut self, x: u64) {
        self.member[x as usize] = true;
        self.bump(x, true);
        self.members.push(x);
    }

    fn remove(&mut self, x: u64) {
        let pos = self.members.iter().position(|&v| v == x).unwrap();
        self.members.swap_remove(pos);
        self.bump(x, false);
        self.member[x as usize] = false;
    }

    fn reset(&mut self, to: &[u64]) {
        for v in self.members.clone() {
            self.remove(v);
        }
        for &v in to {
            self.insert(v);
        }
    }

    fn is_free(&self, y: u64) -> bool {
        !self.member[y as usize] && self.conflicts[y as usize] == 0
    }

    /// Members that form a progression with `x` together with another member.
    fn blocking_pairs(&self, x: u64) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        for &a in &self.members {
            for y in completions(x, a, self.m) {
                if self.member[y as usize] {
                    out.push((a, y));
                }
            }
        }
        out
    }

    fn fill(&mut self, order: &[u64]) {
        for &y in order {
            if self.is_free(y) {
                self.insert(y);
            }
        }
    }
}

/// Iterated local search: force a random non-member in, evict one member of
/// every progression it closes, refill greedily, and keep the move unless the
/// set shrank.
fn local_search(start: &[u64], m: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let target = practical_floor(m);
    let mut pack = Packing::new(m);
    for &x in start {
        pack.insert(x);
    }
    let mut best = pack.members.clone();
    let mut order: Vec<u64> = (0..m).collect();
    for _ in 0..SEARCH_STEPS_PER_RESIDUE * m {
        if best.len() >= target {
            break;
        }
        let x = rng.random_range(0..m);
        if pack.member[x as usize] {
            continue;
        }
        let before = pack.members.clone();
        for (a, b) in pack.blocking_pairs(x) {
            if pack.member[a as usize] && pack.member[b as usize] {
                let victim = if rng.random::<bool>() { a } else { b };
                pack.remove(victim);
            }
        }
        if pack.is_free(x) {
            pack.insert(x);
            order.shuffle(rng);
            pack.fill(&order);
        }
        if pack.members.len() < before.len() {
            pack.reset(&before);
        } else if pack.members.len() > best.len() {
            best = pack.members.clone();
        }
    }
    best
}

/// Base-3 seed below `M/2` (so no sums wrap) extended greedily over all
/// residues, then improved by local search up to `M^0.6`. Randomness is
/// seeded by `M`, so the output is a function of `M`.
pub fn behrend_set(modulus: u64) -> Result<SalemSpencerSet> {
    if modulus == 0 {
        return Err(Error::invalid("modulus must be at least 1"));
    }
    let m = modulus;
    let mut pack = Packing::new(m);
    for x in base3_seed(m.div_ceil(2)) {
        pack.insert(x);
    }
    pack.fill(&(0..m).collect::<Vec<_>>());
    let mut best = pack.members;
    if best.len() < practical_floor(m) {
        let mut rng = ChaCha8Rng::seed_from_u64(m);
        best = local_search(&best, m, &mut rng);
    }
    best.sort_unstable();
    Ok(SalemSpencerSet {
        modulus: m,
        elements: best,
    })
}

/// Exhaustive check in `O(|A|^2)`: for each pair `(a, b)` no member may be a
/// midpoint unless `a = b = c`.
pub fn is_progression_free(set: &SalemSpencerSet) -> bool {
    let m = set.modulus;
    let mask = set.mask();
    if set.elements.iter().any(|&x| x >= m) {
        return false;
    }
    for (i, &a) in set.elements.iter().enumerate() {
        for &b in &set.elements[i..] {
            for c in halves(a + b, m) {
                if mask[c as usize] && !(a == b && b == c) {
                    return false;
                }
            }
        }
    }
    true
}

/// Largest progression-free subset of `Z_M`, by branch and bound over
/// bitmasks. Translation invariance lets the search fix `0 ∈ A`.
pub fn max_progression_free_size(modulus: u64) -> Result<usize> {
    if modulus == 0 || modulus > 64 {
        return Err(Error::invalid("exhaustive search supports 1 <= M <= 64"));
    }
    let m = modulus as u32;
    let full: u64 = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
    let forbid_mask = |members: &[u32], x: u32| -> u64 {
        let mut f = vec![false; m as usize];
        let mem: Vec<u64> = members.iter().map(|&a| a as u64).collect();
        forbid(&mut f, &mem, x as u64, m as u64);
        f.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0u64, |acc, (i, _)| acc | (1u64 << i))
    };

    fn search(
        members: &mut Vec<u32>,
        forbidden: u64,
        next: u32,
        m: u32,
        full: u64,
        best: &mut usize,
        forbid_mask: &dyn Fn(&[u32], u32) -> u64,
    ) {
        if members.len() > *best {
            *best = members.len();
        }
        let above = if next >= m { 0 } else { full & !((1u64 << next) - 1) };
        let open = above & !forbidden;
        if members.len() + open.count_ones() as usize <= *best {
            return;
        }
        let mut rest = open;
        while rest != 0 {
            let x = rest.trailing_zeros();
            rest &= rest - 1;
            if members.len() + 1 + rest.count_ones() as usize <= *best {
                return;
            }
            let f = forbidden | forbid_mask(members, x);
            members.push(x);
            search(members, f, x + 1, m, full, best, forbid_mask);
            members.pop();
        }
    }

    let mut best = 0;
    let mut members = vec![0u32];
    let f0 = forbid_mask(&[], 0);
    search(&mut members, f0, 1, m, full, &mut best, &forbid_mask);
    Ok(best.max(1))
}
