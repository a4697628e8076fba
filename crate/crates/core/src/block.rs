//! Block-structured vectors and the `l_{p,q}` norm family.
//!
//! An `n`-vector is split into `N` contiguous blocks of length `D`. Block
//! indices are 1-based everywhere in the public API and in reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Absolute threshold below which a block norm counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockStructure {
    num_blocks: usize,
    block_len: usize,
}

impl BlockStructure {
    pub fn new(num_blocks: usize, block_len: usize) -> Result<Self> {
        if num_blocks == 0 || block_len == 0 {
            return Err(Error::Parameter(format!(
                "block structure needs N >= 1 and D >= 1, got N = {num_blocks}, D = {block_len}"
            )));
        }
        Ok(Self {
            num_blocks,
            block_len,
        })
    }

    /// Splits a length-`n` vector into blocks of length `block_len`.
    pub fn from_len(n: usize, block_len: usize) -> Result<Self> {
        if block_len == 0 || !n.is_multiple_of(block_len) {
            return Err(Error::Parameter(format!(
                "length {n} is not divisible by block length {block_len}"
            )));
        }
        Self::new(n / block_len, block_len)
    }

    /// One block per entry; the scalar sparsity model.
    pub fn scalar(n: usize) -> Result<Self> {
        Self::new(n, 1)
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn total_len(&self) -> usize {
        self.num_blocks * self.block_len
    }

    /// Entry range of block `k` (1-based).
    pub fn range(&self, k: usize) -> Range<usize> {
        debug_assert!(k >= 1 && k <= self.num_blocks);
        (k - 1) * self.block_len..k * self.block_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSignal {
    values: DVector<f64>,
    structure: BlockStructure,
}

impl BlockSignal {
    pub fn new(values: DVector<f64>, structure: BlockStructure) -> Result<Self> {
        if values.len() != structure.total_len() {
            return Err(Error::Dimension(format!(
                "signal has {} entries, block structure expects {}",
                values.len(),
                structure.total_len()
            )));
        }
        Ok(Self { values, structure })
    }

    pub fn zeros(structure: BlockStructure) -> Self {
        Self {
            values: DVector::zeros(structure.total_len()),
            structure,
        }
    }

    pub fn from_slice(values: &[f64], structure: BlockStructure) -> Result<Self> {
        Self::new(DVector::from_column_slice(values), structure)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn structure(&self) -> BlockStructure {
        self.structure
    }

    /// Block `k` (1-based).
    pub fn block(&self, k: usize) -> &[f64] {
        &self.values.as_slice()[self.structure.range(k)]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.values.as_slice().chunks_exact(self.structure.block_len)
    }

    /// Reinterprets the same entries under a different block length.
    pub fn with_structure(&self, structure: BlockStructure) -> Result<Self> {
        Self::new(self.values.clone(), structure)
    }
}

/// Ordered set of 1-based block indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSupport {
    indices: Vec<usize>,
    structure: BlockStructure,
}

impl BlockSupport {
    pub fn new<I: IntoIterator<Item = usize>>(indices: I, structure: BlockStructure) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for k in indices {
            if k == 0 || k > structure.num_blocks() {
                return Err(Error::Parameter(format!(
                    "block index {k} outside 1..={}",
                    structure.num_blocks()
                )));
            }
            if !seen.insert(k) {
                return Err(Error::Parameter(format!("duplicate block index {k}")));
            }
        }
        Ok(Self {
            indices: seen.into_iter().collect(),
            structure,
        })
    }

    pub fn empty(structure: BlockStructure) -> Self {
        Self {
            indices: Vec::new(),
            structure,
        }
    }

    pub fn full(structure: BlockStructure) -> Self {
        Self {
            indices: (1..=structure.num_blocks()).collect(),
            structure,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn structure(&self) -> BlockStructure {
        self.structure
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    pub fn complement(&self) -> Self {
        Self {
            indices: (1..=self.structure.num_blocks())
                .filter(|k| !self.contains(*k))
                .collect(),
            structure: self.structure,
        }
    }

    /// Entry positions covered by the support, in block order.
    pub fn entry_indices(&self) -> Vec<usize> {
        self.indices
            .iter()
            .flat_map(|&k| self.structure.range(k))
            .collect()
    }

    /// The same entries viewed as a support of single-entry blocks.
    pub fn to_scalar(&self) -> Self {
        let structure = BlockStructure {
            num_blocks: self.structure.total_len(),
            block_len: 1,
        };
        Self {
            indices: self.entry_indices().into_iter().map(|i| i + 1).collect(),
            structure,
        }
    }
}

pub fn block_norms(x: &BlockSignal) -> Vec<f64> {
    x.blocks().map(euclid).collect()
}

/// `sum_k ||x_k||_p^q`; with `q = 0` this counts blocks whose `p`-norm exceeds
/// [`DEFAULT_ZERO_TOL`].
pub fn lpq_norm(x: &BlockSignal, p: f64, q: f64) -> Result<f64> {
    if !(p >= 1.0) || !(q >= 0.0) || !q.is_finite() {
        return Err(Error::Parameter(format!(
            "l_(p,q) norm needs p >= 1 and finite q >= 0, got p = {p}, q = {q}"
        )));
    }
    let norms = x.blocks().map(|b| p_norm(b, p));
    if q == 0.0 {
        return Ok(norms.filter(|&v| v > DEFAULT_ZERO_TOL).count() as f64);
    }
    Ok(norms.map(|v| v.powf(q)).sum())
}

pub fn l21_norm(x: &BlockSignal) -> f64 {
    x.blocks().map(euclid).sum()
}

pub fn support_of(x: &BlockSignal, zero_tol: f64) -> BlockSupport {
    let indices = x
        .blocks()
        .enumerate()
        .filter(|(_, b)| euclid(b) > zero_tol)
        .map(|(i, _)| i + 1)
        .collect();
    BlockSupport {
        indices,
        structure: x.structure(),
    }
}

pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn p_norm(v: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        euclid(v)
    } else if p == 1.0 {
        v.iter().map(|a| a.abs()).sum()
    } else if p.is_infinite() {
        v.iter().fold(0.0, |m, a| m.max(a.abs()))
    } else {
        v.iter().map(|a| a.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Plain-text vector: a line holding `n`, then one value per line.
pub fn write_vector(v: &DVector<f64>) -> String {
    let mut out = String::with_capacity(24 * (v.len() + 1));
    let _ = writeln!(out, "{}", v.len());
    for x in v.iter() {
        let _ = writeln!(out, "{x:.16e}");
    }
    out
}

pub fn read_vector(text: &str) -> Result<DVector<f64>> {
    let mut tokens = text.split_whitespace();
    let n: usize = tokens
        .next()
        .ok_or_else(|| Error::Parse("empty vector file".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad vector length: {e}")))?;
    let values = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad value {t:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != n {
        return Err(Error::Parse(format!(
            "vector header says {n} values, found {}",
            values.len()
        )));
    }
    Ok(DVector::from_vec(values))
}
