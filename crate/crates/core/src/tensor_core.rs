//! Block-partitioned 0/1 trilinear forms, the CW family and its graded powers.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A block triple `(i, j, k)`: one label per side.
pub type Triple = [u32; 3];

/// Default cap on variables per side for explicit Kronecker products.
pub const DEFAULT_VARIABLE_CAP: usize = 1 << 20;

/// Nonzero block triples of a partitioned tensor, in a fixed order.
#[derive(Clone, Debug)]
pub struct Support {
    triples: Vec<Triple>,
    labels: [usize; 3],
    index: HashMap<Triple, usize>,
}

impl PartialEq for Support {
    fn eq(&self, other: &Self) -> bool {
        self.triples == other.triples
    }
}

impl Support {
    pub fn new(triples: Vec<Triple>) -> Result<Self> {
        if triples.is_empty() {
            return Err(Error::invalid("support must be nonempty"));
        }
        let mut index = HashMap::with_capacity(triples.len());
        let mut labels = [0usize; 3];
        for (s, t) in triples.iter().enumerate() {
            if index.insert(*t, s).is_some() {
                return Err(Error::invalid(format!("duplicate support triple {t:?}")));
            }
            for side in 0..3 {
                labels[side] = labels[side].max(t[side] as usize + 1);
            }
        }
        Ok(Support { triples, labels, index })
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple(&self, s: usize) -> Triple {
        self.triples[s]
    }

    /// Number of labels on one side (max label + 1).
    pub fn labels(&self, side: usize) -> usize {
        self.labels[side]
    }

    pub fn total_labels(&self) -> usize {
        self.labels.iter().sum()
    }

    pub fn index_of(&self, t: &Triple) -> Option<usize> {
        self.index.get(t).copied()
    }

    /// The common value of `i + j + k`, if there is one.
    pub fn constant_sum(&self) -> Option<u32> {
        let p = self.triples[0].iter().sum::<u32>();
        self.triples.iter().all(|t| t.iter().sum::<u32>() == p).then_some(p)
    }

    /// All triples of nonnegative integers summing to `p`, lexicographic.
    pub fn constant_sum_simplex(p: u32) -> Support {
        let mut triples = Vec::new();
        for i in 0..=p {
            for j in 0..=p - i {
                triples.push([i, j, p - i - j]);
            }
        }
        Support::new(triples).expect("simplex support is nonempty")
    }
}

/// Sparse trilinear form with 0/1 coefficients and a block label per variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockTensor {
    dims: [usize; 3],
    block_of: [Vec<u32>; 3],
    support: Vec<[usize; 3]>,
}

impl BlockTensor {
    pub fn new(block_of: [Vec<u32>; 3], mut support: Vec<[usize; 3]>) -> Result<Self> {
        let dims = [block_of[0].len(), block_of[1].len(), block_of[2].len()];
        for t in &support {
            for side in 0..3 {
                if t[side] >= dims[side] {
                    return Err(Error::invalid(format!(
                        "support triple {t:?} out of range for dims {dims:?}"
                    )));
                }
            }
        }
        support.sort_unstable();
        let n = support.len();
        support.dedup();
        if support.len() != n {
            return Err(Error::invalid("repeated support triple (coefficient > 1)"));
        }
        Ok(BlockTensor {
            dims,
            block_of,
            support,
        })
    }

    /// `x0 y0 z0` with a single block per side.
    pub fn unit() -> Self {
        BlockTensor::new([vec![0], vec![0], vec![0]], vec![[0, 0, 0]]).unwrap()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn support(&self) -> &[[usize; 3]] {
        &self.support
    }

    pub fn nnz(&self) -> usize {
        self.support.len()
    }

    pub fn block_of(&self, side: usize) -> &[u32] {
        &self.block_of[side]
    }

    pub fn block_count(&self, side: usize) -> usize {
        self.block_of[side].iter().map(|&b| b as usize + 1).max().unwrap_or(0)
    }

    /// Variables per block on one side.
    pub fn block_sizes(&self, side: usize) -> Vec<usize> {
        let mut out = vec![0; self.block_count(side)];
        for &b in &self.block_of[side] {
            out[b as usize] += 1;
        }
        out
    }

    /// Block triples that carry at least one support triple.
    pub fn block_support(&self) -> BTreeSet<Triple> {
        self.support
            .iter()
            .map(|t| [self.block_of[0][t[0]], self.block_of[1][t[1]], self.block_of[2][t[2]]])
            .collect()
    }

    /// Keep only support triples whose blocks are all kept. Variables are not
    /// renumbered.
    pub fn zero_out(&self, keep: [&[u32]; 3]) -> BlockTensor {
        let keep: [BTreeSet<u32>; 3] = keep.map(|k| k.iter().copied().collect());
        let support = self
            .support
            .iter()
            .filter(|t| (0..3).all(|side| keep[side].contains(&self.block_of[side][t[side]])))
            .copied()
            .collect();
        BlockTensor {
            dims: self.dims,
            block_of: self.block_of.clone(),
            support,
        }
    }

    /// The subtensor on one block triple.
    pub fn block(&self, b: Triple) -> BlockTensor {
        self.zero_out([&[b[0]], &[b[1]], &[b[2]]])
    }

    /// Variables of one side that occur in the support.
    pub fn used_variables(&self, side: usize) -> BTreeSet<usize> {
        self.support.iter().map(|t| t[side]).collect()
    }
}

/// CW_q over `q + 2` variables per side with blocks {0}, {1..q}, {q+1}.
pub fn build_cw(q: usize) -> BlockTensor {
    let n = q + 2;
    let labels: Vec<u32> = (0..n)
        .map(|v| match v {
            0 => 0,
            v if v == q + 1 => 2,
            _ => 1,
        })
        .collect();
    let last = q + 1;
    let mut support = vec![[0, 0, last], [0, last, 0], [last, 0, 0]];
    for i in 1..=q {
        support.extend([[0, i, i], [i, 0, i], [i, i, 0]]);
    }
    BlockTensor::new([labels.clone(), labels.clone(), labels], support).unwrap()
}

fn kronecker_with(
    a: &BlockTensor,
    b: &BlockTensor,
    cap: usize,
    label: impl Fn(usize, u32, u32) -> u32,
) -> Result<BlockTensor> {
    let mut block_of: [Vec<u32>; 3] = Default::default();
    for side in 0..3 {
        let n = a.dims[side]
            .checked_mul(b.dims[side])
            .filter(|&n| n <= cap)
            .ok_or(Error::CapExceeded {
                what: "kronecker variables per side",
                needed: a.dims[side] as u128 * b.dims[side] as u128,
                cap: cap as u128,
            })?;
        let mut v = Vec::with_capacity(n);
        for &la in &a.block_of[side] {
            for &lb in &b.block_of[side] {
                v.push(label(side, la, lb));
            }
        }
        block_of[side] = v;
    }
    let mut support = Vec::with_capacity(a.nnz() * b.nnz());
    for ta in &a.support {
        for tb in &b.support {
            support.push([
                ta[0] * b.dims[0] + tb[0],
                ta[1] * b.dims[1] + tb[1],
                ta[2] * b.dims[2] + tb[2],
            ]);
        }
    }
    BlockTensor::new(block_of, support)
}

/// Kronecker product; variable `(u, v)` becomes `u * dim_b + v` and its block
/// label is the pair of labels, encoded as `la * blocks_b + lb`.
pub fn kronecker(a: &BlockTensor, b: &BlockTensor, cap: usize) -> Result<BlockTensor> {
    let nb = [b.block_count(0), b.block_count(1), b.block_count(2)];
    kronecker_with(a, b, cap, |side, la, lb| la * nb[side] as u32 + lb)
}

/// Kronecker product whose block labels add (the grading used for CW powers).
pub fn kronecker_graded(a: &BlockTensor, b: &BlockTensor, cap: usize) -> Result<BlockTensor> {
    kronecker_with(a, b, cap, |_, la, lb| la + lb)
}

/// `t`-fold graded Kronecker power.
pub fn graded_power(t: &BlockTensor, power: u32, cap: usize) -> Result<BlockTensor> {
    if power == 0 {
        return Err(Error::invalid("power must be at least 1"));
    }
    let mut out = t.clone();
    for _ in 1..power {
        out = kronecker_graded(&out, t, cap)?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatMulShape {
    pub a: u64,
    pub b: u64,
    pub c: u64,
}

impl MatMulShape {
    pub fn new(a: u64, b: u64, c: u64) -> Result<Self> {
        if a == 0 || b == 0 || c == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        Ok(MatMulShape { a, b, c })
    }

    pub fn volume(&self) -> f64 {
        self.a as f64 * self.b as f64 * self.c as f64
    }
}

impl fmt::Display for MatMulShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{},{}>", self.a, self.b, self.c)
    }
}

/// `<a,b,c>` as `sum x_{ij} y_{jk} z_{ki}` with one block per side.
pub fn matmul_tensor(shape: MatMulShape) -> BlockTensor {
    let (a, b, c) = (shape.a as usize, shape.b as usize, shape.c as usize);
    let mut support = Vec::with_capacity(a * b * c);
    for i in 0..a {
        for j in 0..b {
            for k in 0..c {
                support.push([i * b + j, j * c + k, k * a + i]);
            }
        }
    }
    BlockTensor::new([vec![0; a * b], vec![0; b * c], vec![0; c * a]], support).unwrap()
}

/// Recognise a sum of triples that all share one variable on one side and
/// pair the other two sides bijectively. Such a tensor is a single matrix
/// multiplication tensor with one dimension equal to the number of triples.
pub fn detect_merged_matmul(t: &BlockTensor) -> Option<MatMulShape> {
    let n = t.nnz();
    if n == 0 {
        return None;
    }
    let used: [BTreeSet<usize>; 3] = [0, 1, 2].map(|s| t.used_variables(s));
    let nn = n as u64;
    for shared in 0..3 {
        let others: Vec<usize> = (0..3).filter(|&s| s != shared).collect();
        if used[shared].len() == 1 && others.iter().all(|&s| used[s].len() == n) {
            return Some(match shared {
                0 => MatMulShape { a: 1, b: 1, c: nn },
                1 => MatMulShape { a: nn, b: 1, c: 1 },
                _ => MatMulShape { a: 1, b: nn, c: 1 },
            });
        }
    }
    None
}

/// Canonical key for the graded class `T^t_{IJK}` of `CW_q^{(x)t}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassKey {
    pub q: u32,
    pub t: u32,
    key: Triple,
}

impl ClassKey {
    pub fn new(q: u32, t: u32, ijk: Triple) -> Result<Self> {
        if t == 0 {
            return Err(Error::invalid("class level must be at least 1"));
        }
        if ijk.iter().sum::<u32>() != 2 * t {
            return Err(Error::invalid(format!("class indices {ijk:?} must sum to {}", 2 * t)));
        }
        let mut key = ijk;
        key.sort_unstable();
        Ok(ClassKey { q, t, key })
    }

    /// Sorted ascending.
    pub fn indices(&self) -> Triple {
        self.key
    }

    pub fn has_zero(&self) -> bool {
        self.key[0] == 0
    }
}

impl fmt::Display for ClassKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [i, j, k] = self.key;
        write!(f, "T^{}_{{{},{},{}}}", self.t, i, j, k)
    }
}

/// Where the subtensor of one support triple comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum SubtensorRef {
    Explicit(BlockTensor),
    Class(ClassKey),
    /// Kronecker product of two classes one level down.
    Product(ClassKey, ClassKey),
}

#[derive(Clone, Debug)]
pub struct PartitionedTensor {
    pub p: u32,
    pub support: Support,
    pub parts: Vec<SubtensorRef>,
}

impl PartitionedTensor {
    pub fn new(p: u32, support: Support, parts: Vec<SubtensorRef>) -> Result<Self> {
        if parts.len() != support.len() {
            return Err(Error::invalid("one subtensor reference per support triple"));
        }
        if support.constant_sum() != Some(p) {
            return Err(Error::invalid(format!("support triples must sum to {p}")));
        }
        Ok(PartitionedTensor { p, support, parts })
    }
}

/// Whether `T^t_{IJK}` is nonzero. For q = 0 only the corner blocks exist, so
/// every index must be even.
fn class_nonzero(q: u32, ijk: Triple) -> bool {
    q > 0 || ijk.iter().all(|v| v % 2 == 0)
}

/// Symbolic view of `CW_q^{(x)t}` partitioned by graded block sums.
pub fn grade_power(q: u32, t: u32) -> Result<PartitionedTensor> {
    if t == 0 {
        return Err(Error::invalid("t must be at least 1"));
    }
    let triples: Vec<Triple> = Support::constant_sum_simplex(2 * t)
        .triples()
        .iter()
        .copied()
        .filter(|&ijk| class_nonzero(q, ijk))
        .collect();
    let parts = triples
        .iter()
        .map(|&ijk| ClassKey::new(q, t, ijk).map(SubtensorRef::Class))
        .collect::<Result<Vec<_>>>()?;
    PartitionedTensor::new(2 * t, Support::new(triples)?, parts)
}

/// One term of the splitting of a class into a product of two half-level
/// classes. `inner` is the block triple in the inner partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitTerm {
    pub inner: Triple,
    pub left: ClassKey,
    pub right: ClassKey,
}

/// Terms `T^{t/2}_{I'J'K'} (x) T^{t/2}_{(I-I')(J-J')(K-K')}` of a class, with
/// indices taken in the class's sorted orientation.
pub fn split_subtensor(class: &ClassKey) -> Result<Vec<SplitTerm>> {
    split_oriented(class.q, class.t, class.key)
}

/// Like [`split_subtensor`] but keeps the given orientation of `(I, J, K)`.
pub fn split_oriented(q: u32, t: u32, ijk: Triple) -> Result<Vec<SplitTerm>> {
    let class = ClassKey::new(q, t, ijk)?;
    if !t.is_multiple_of(2) {
        return Err(Error::invalid(format!("cannot split {class}: level must be even")));
    }
    // Children live at level t/2, so their indices sum to t.
    let h = t / 2;
    let [i, j, k] = ijk;
    let mut out = Vec::new();
    for a in 0..=i.min(t) {
        for b in 0..=j.min(t - a) {
            let c = t - a - b;
            if c > k {
                continue;
            }
            let l = [a, b, c];
            let r = [i - a, j - b, k - c];
            if !class_nonzero(class.q, l) || !class_nonzero(class.q, r) {
                continue;
            }
            out.push(SplitTerm {
                inner: l,
                left: ClassKey::new(class.q, h, l)?,
                right: ClassKey::new(class.q, h, r)?,
            });
        }
    }
    Ok(out)
}

/// The inner partitioned tensor of a splittable class (P = t).
pub fn inner_partition(class: &ClassKey) -> Result<PartitionedTensor> {
    let terms = split_subtensor(class)?;
    let support = Support::new(terms.iter().map(|t| t.inner).collect())?;
    let parts = terms.iter().map(|t| SubtensorRef::Product(t.left, t.right)).collect();
    PartitionedTensor::new(class.t, support, parts)
}

/// Explicit `T^t_{IJK}` inside the graded power of `CW_q`; test-oracle scale
/// only.
pub fn materialize_class(q: usize, t: u32, ijk: Triple, cap: usize) -> Result<BlockTensor> {
    let power = graded_power(&build_cw(q), t, cap)?;
    Ok(power.block(ijk))
}
