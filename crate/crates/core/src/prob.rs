//! Finite-alphabet probability primitives.
//!
//! Single-axis pmfs, multi-axis joint pmfs stored as flat row-major tensors,
//! KL divergence in nats, empirical types and strong typicality, and i.i.d.
//! sampling driven by caller-owned generators.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use thiserror::Error;

/// Normalization tolerance for every pmf in the crate.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbError {
    #[error("empty alphabet")]
    EmptyAlphabet,
    #[error("negative or non-finite probability {value} at index {index}")]
    InvalidEntry { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("absolute continuity violated at cell {cell:?}: P > 0 but Q = 0")]
    AbsoluteContinuityViolation { cell: Vec<usize> },
    #[error("symbol {symbol} outside alphabet of size {alphabet_size}")]
    OutOfAlphabet { symbol: usize, alphabet_size: usize },
    #[error("sequence must contain at least one symbol")]
    EmptySequence,
    #[error("axis {axis} out of range for a {rank}-axis joint")]
    BadAxis { axis: usize, rank: usize },
}

fn validate(probs: &[f64]) -> Result<(), ProbError> {
    if probs.is_empty() {
        return Err(ProbError::EmptyAlphabet);
    }
    for (index, &value) in probs.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(ProbError::InvalidEntry { index, value });
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORM_TOL {
        return Err(ProbError::NotNormalized { sum });
    }
    Ok(())
}

/// A pmf over `{0, .., alphabet_size - 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self, ProbError> {
        validate(&probs)?;
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self, ProbError> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(ProbError::NotNormalized { sum });
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn uniform(alphabet_size: usize) -> Self {
        assert!(alphabet_size > 0);
        Self {
            probs: vec![1.0 / alphabet_size as f64; alphabet_size],
        }
    }

    pub fn point(alphabet_size: usize, symbol: usize) -> Self {
        let mut probs = vec![0.0; alphabet_size];
        probs[symbol] = 1.0;
        Self { probs }
    }

    /// Two-symbol pmf `(1 - p, p)`.
    pub fn bernoulli(p: f64) -> Result<Self, ProbError> {
        Self::new(vec![1.0 - p, p])
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, symbol: usize) -> f64 {
        self.probs[symbol]
    }

    pub fn kl_divergence(&self, other: &Pmf) -> Result<f64, ProbError> {
        kl_divergence(self, other)
    }

    /// Draws `n` i.i.d. symbols.
    pub fn sample_iid<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let dist = WeightedIndex::new(&self.probs).expect("validated pmf");
        (0..n).map(|_| dist.sample(rng)).collect()
    }
}

/// A joint pmf over a product alphabet, stored row-major (last axis fastest).
///
/// The three-axis instance `(U1, U2, V)` is the hypothesis distribution of a
/// [`TestProblem`](crate::simulator::TestProblem); two-axis instances appear as
/// pairwise marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    dims: Vec<usize>,
    probs: Vec<f64>,
}

/// Three-axis joint over `(U1, U2, V)`.
pub type Joint3Pmf = JointPmf;

/// Axes of a three-axis joint over `(U1, U2, V)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    U1,
    U2,
    V,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::U1, Axis::U2, Axis::V];

    pub fn index(self) -> usize {
        match self {
            Axis::U1 => 0,
            Axis::U2 => 1,
            Axis::V => 2,
        }
    }
}

impl JointPmf {
    pub fn new(dims: Vec<usize>, probs: Vec<f64>) -> Result<Self, ProbError> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(ProbError::EmptyAlphabet);
        }
        let cells: usize = dims.iter().product();
        if cells != probs.len() {
            return Err(ProbError::ShapeMismatch {
                left: dims,
                right: vec![probs.len()],
            });
        }
        validate(&probs)?;
        Ok(Self { dims, probs })
    }

    /// Outer product of single-axis pmfs.
    pub fn product(factors: &[&Pmf]) -> Self {
        let dims: Vec<usize> = factors.iter().map(|f| f.alphabet_size()).collect();
        let mut probs = vec![1.0];
        for f in factors {
            probs = probs
                .iter()
                .flat_map(|&a| f.probs().iter().map(move |&b| a * b))
                .collect();
        }
        Self { dims, probs }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_cells(&self) -> usize {
        self.probs.len()
    }

    pub fn flat_index(&self, cell: &[usize]) -> usize {
        debug_assert_eq!(cell.len(), self.dims.len());
        cell.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&c, &d)| acc * d + c)
    }

    pub fn cell(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = flat % d;
            flat /= d;
        }
        out
    }

    pub fn get(&self, cell: &[usize]) -> f64 {
        self.probs[self.flat_index(cell)]
    }

    /// Marginal along one axis (sums out all others).
    pub fn marginal(&self, axis: usize) -> Result<Pmf, ProbError> {
        if axis >= self.rank() {
            return Err(ProbError::BadAxis {
                axis,
                rank: self.rank(),
            });
        }
        let mut out = vec![0.0; self.dims[axis]];
        for (flat, &p) in self.probs.iter().enumerate() {
            out[self.axis_coord(flat, axis)] += p;
        }
        Ok(Pmf { probs: out })
    }

    /// Marginal along a named axis of a three-axis joint.
    pub fn axis_marginal(&self, axis: Axis) -> Result<Pmf, ProbError> {
        self.marginal(axis.index())
    }

    /// Joint marginal over the listed axes, in the listed order.
    pub fn marginal_joint(&self, axes: &[usize]) -> Result<JointPmf, ProbError> {
        for &axis in axes {
            if axis >= self.rank() {
                return Err(ProbError::BadAxis {
                    axis,
                    rank: self.rank(),
                });
            }
        }
        let dims: Vec<usize> = axes.iter().map(|&a| self.dims[a]).collect();
        let mut out = vec![0.0; dims.iter().product()];
        for (flat, &p) in self.probs.iter().enumerate() {
            let idx = axes
                .iter()
                .fold(0, |acc, &a| acc * self.dims[a] + self.axis_coord(flat, a));
            out[idx] += p;
        }
        Ok(JointPmf { dims, probs: out })
    }

    /// Coordinate of `flat` along `axis`.
    pub fn axis_coord(&self, flat: usize, axis: usize) -> usize {
        let stride: usize = self.dims[axis + 1..].iter().product();
        (flat / stride) % self.dims[axis]
    }

    pub fn kl_divergence(&self, other: &JointPmf) -> Result<f64, ProbError> {
        kl_divergence(self, other)
    }

    /// Draws `n` i.i.d. cells, returned as flat indices.
    pub fn sample_iid<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let dist = WeightedIndex::new(&self.probs).expect("validated pmf");
        (0..n).map(|_| dist.sample(rng)).collect()
    }

    /// Splits flat cell indices into one symbol sequence per axis.
    pub fn split_axes(&self, cells: &[usize]) -> Vec<Vec<usize>> {
        (0..self.rank())
            .map(|axis| cells.iter().map(|&c| self.axis_coord(c, axis)).collect())
            .collect()
    }

    /// Builds a joint from already-normalized cells without re-validating.
    pub(crate) fn from_raw(dims: Vec<usize>, probs: Vec<f64>) -> Self {
        Self { dims, probs }
    }
}

/// Anything that exposes a shape and a flat probability vector.
pub trait FiniteDistribution {
    fn shape(&self) -> Vec<usize>;
    fn flat(&self) -> &[f64];
}

impl FiniteDistribution for Pmf {
    fn shape(&self) -> Vec<usize> {
        vec![self.probs.len()]
    }
    fn flat(&self) -> &[f64] {
        &self.probs
    }
}

impl FiniteDistribution for JointPmf {
    fn shape(&self) -> Vec<usize> {
        self.dims.clone()
    }
    fn flat(&self) -> &[f64] {
        &self.probs
    }
}

/// `D(P || Q)` in nats with `0 ln(0/q) = 0`.
pub fn kl_divergence<D: FiniteDistribution>(p: &D, q: &D) -> Result<f64, ProbError> {
    let (ps, qs) = (p.shape(), q.shape());
    if ps != qs {
        return Err(ProbError::ShapeMismatch {
            left: ps,
            right: qs,
        });
    }
    let mut total = 0.0;
    for (i, (&a, &b)) in p.flat().iter().zip(q.flat()).enumerate() {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(ProbError::AbsoluteContinuityViolation {
                cell: unflatten(i, &ps),
            });
        }
        total += a * (a / b).ln();
    }
    // Rounding can leave a tiny negative residue when P == Q.
    Ok(total.max(0.0))
}

fn unflatten(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for (slot, &d) in out.iter_mut().zip(dims).rev() {
        *slot = flat % d;
        flat /= d;
    }
    out
}

/// Symbol counts of a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SequenceType {
    counts: Vec<u64>,
    n: u64,
}

impl SequenceType {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self, ProbError> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(ProbError::EmptySequence);
        }
        Ok(Self { counts, n })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn frequency(&self, symbol: usize) -> f64 {
        self.counts[symbol] as f64 / self.n as f64
    }

    pub fn to_pmf(&self) -> Pmf {
        Pmf {
            probs: (0..self.counts.len()).map(|a| self.frequency(a)).collect(),
        }
    }

    /// Strong typicality of this type with respect to `reference`.
    pub fn is_strongly_typical(&self, reference: &Pmf, mu: f64) -> bool {
        counts_typical(&self.counts, self.n, reference, mu)
    }
}

// Absorbs rounding in `count / n` so exact boundary cases count as typical.
const TYPICALITY_EPS: f64 = 1e-12;

/// Typicality test on raw counts; shared with the exact enumerator.
pub(crate) fn counts_typical(counts: &[u64], n: u64, reference: &Pmf, mu: f64) -> bool {
    if counts.len() != reference.alphabet_size() || n == 0 {
        return false;
    }
    counts.iter().zip(reference.probs()).all(|(&c, &p)| {
        if p == 0.0 {
            c == 0
        } else {
            (c as f64 / n as f64 - p).abs() <= mu + TYPICALITY_EPS
        }
    })
}

pub fn empirical_type(seq: &[usize], alphabet_size: usize) -> Result<SequenceType, ProbError> {
    if seq.is_empty() {
        return Err(ProbError::EmptySequence);
    }
    let mut counts = vec![0u64; alphabet_size];
    for &symbol in seq {
        if symbol >= alphabet_size {
            return Err(ProbError::OutOfAlphabet {
                symbol,
                alphabet_size,
            });
        }
        counts[symbol] += 1;
    }
    Ok(SequenceType {
        counts,
        n: seq.len() as u64,
    })
}

/// `true` iff every symbol frequency is within `mu` of `reference` and no
/// symbol of zero reference mass occurs. Out-of-alphabet symbols and empty
/// sequences are never typical.
pub fn is_strongly_typical(seq: &[usize], reference: &Pmf, mu: f64) -> bool {
    match empirical_type(seq, reference.alphabet_size()) {
        Ok(t) => t.is_strongly_typical(reference, mu),
        Err(_) => false,
    }
}
