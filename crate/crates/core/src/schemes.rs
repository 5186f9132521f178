//! Encoders and deciders: the local typicality test, the marker-symbol
//! schemes for partially connected channels, and the threshold transform
//! that turns a randomized decider into a deterministic one.
//!
//! Every marker scheme quantizes each sensor's observation to a single
//! typicality bit and signals it by choosing between an input that can
//! produce a designated output and one that cannot, for `k` channel uses.

use std::fmt;

use thiserror::Error;

use crate::channels::{
    admissible, cost_budget, ChannelClass, ChannelError, CostBudget, CostModel, Dmmac, MarkerSet,
    Sensor, ToggleWitness,
};
use crate::prob::{is_strongly_typical, Axis, Pmf};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("scheme needs a {expected} channel, but the channel is {found}")]
    ClassMismatch {
        expected: ChannelClass,
        found: ChannelClass,
    },
    #[error("marker symbols do not satisfy the class inequalities for this kernel")]
    MarkerMismatch,
    #[error("typicality slack must be positive, got {0}")]
    BadMu(f64),
    #[error("threshold must lie in (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("reference pmf for {axis:?} has {got} symbols, channel input alphabet has {expected}")]
    AlphabetMismatch {
        axis: Axis,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Local,
    Sparse,
    SparseFull,
    FullSparse,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Local => "local",
            SchemeKind::Sparse => "sparse",
            SchemeKind::SparseFull => "sparse_full",
            SchemeKind::FullSparse => "full_sparse",
        }
    }

    /// Achievability scheme matching a channel class.
    pub fn for_class(class: ChannelClass) -> Self {
        match class {
            ChannelClass::Full => SchemeKind::Local,
            ChannelClass::Sparse => SchemeKind::Sparse,
            ChannelClass::SparseFull => SchemeKind::SparseFull,
            ChannelClass::FullSparse => SchemeKind::FullSparse,
        }
    }

    /// Axes whose typicality the decider (directly or via markers) requires.
    pub fn checked_axes(self) -> &'static [Axis] {
        match self {
            SchemeKind::Local => &[Axis::V],
            SchemeKind::Sparse => &[Axis::U1, Axis::U2, Axis::V],
            SchemeKind::SparseFull => &[Axis::U1, Axis::V],
            SchemeKind::FullSparse => &[Axis::U2, Axis::V],
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reference marginals used by the typicality tests.
#[derive(Debug, Clone, PartialEq)]
pub struct References {
    pub u1: Pmf,
    pub u2: Pmf,
    pub v: Pmf,
}

impl References {
    pub fn get(&self, axis: Axis) -> &Pmf {
        match axis {
            Axis::U1 => &self.u1,
            Axis::U2 => &self.u2,
            Axis::V => &self.v,
        }
    }
}

/// One marker block: the symbols both sensors send during it and the output
/// the decider looks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    /// Which sensor signals its bit in this block.
    signaller: Sensor,
    witness: ToggleWitness,
}

impl Block {
    /// Inputs `(x1, x2)` during the block given the signaller's flag.
    fn inputs(&self, flag: bool) -> (usize, usize) {
        let own = if flag {
            self.witness.enabled
        } else {
            self.witness.blocked
        };
        match self.signaller {
            Sensor::S1 => (own, self.witness.partner),
            Sensor::S2 => (self.witness.partner, own),
        }
    }
}

/// A complete scheme at a fixed blocklength.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheme {
    kind: SchemeKind,
    n: usize,
    mu: f64,
    k: usize,
    budget: Option<CostBudget>,
    markers: Option<MarkerSet>,
    blocks: Vec<Block>,
    refs: References,
}

impl Scheme {
    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Marker block length; 0 for the local scheme.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn budget(&self) -> Option<&CostBudget> {
        self.budget.as_ref()
    }

    pub fn markers(&self) -> Option<&MarkerSet> {
        self.markers.as_ref()
    }

    pub fn references(&self) -> &References {
        &self.refs
    }

    pub fn checked_axes(&self) -> &'static [Axis] {
        self.kind.checked_axes()
    }

    pub fn is_typical(&self, seq: &[usize], axis: Axis) -> bool {
        is_strongly_typical(seq, self.refs.get(axis), self.mu)
    }

    pub fn encode1(&self, u1: &[usize]) -> Vec<usize> {
        self.encode_flag(Sensor::S1, self.is_typical(u1, Axis::U1))
    }

    pub fn encode2(&self, u2: &[usize]) -> Vec<usize> {
        self.encode_flag(Sensor::S2, self.is_typical(u2, Axis::U2))
    }

    /// Encoder output of `sensor` when its typicality bit is `flag`.
    pub fn encode_flag(&self, sensor: Sensor, flag: bool) -> Vec<usize> {
        let mut x = vec![0; self.n];
        for (b, block) in self.blocks.iter().enumerate() {
            let (x1, x2) = block.inputs(flag);
            let sym = match sensor {
                Sensor::S1 => x1,
                Sensor::S2 => x2,
            };
            x[b * self.k..(b + 1) * self.k].fill(sym);
        }
        x
    }

    /// Both encoders from the two typicality bits.
    pub fn encode_flags(&self, t1: bool, t2: bool) -> (Vec<usize>, Vec<usize>) {
        (
            self.encode_flag(Sensor::S1, t1),
            self.encode_flag(Sensor::S2, t2),
        )
    }

    /// Whether every marker output occurs in its block.
    pub fn markers_present(&self, y: &[usize]) -> bool {
        self.blocks.iter().enumerate().all(|(b, block)| {
            y[b * self.k..(b + 1) * self.k].contains(&block.witness.output)
        })
    }

    /// Returns 0 (accept the null hypothesis) or 1.
    pub fn decide(&self, y: &[usize], v: &[usize]) -> u8 {
        u8::from(!(self.markers_present(y) && self.is_typical(v, Axis::V)))
    }

    /// Decision from a precomputed `V` typicality bit.
    pub fn decide_with_flag(&self, y: &[usize], v_typical: bool) -> u8 {
        u8::from(!(v_typical && self.markers_present(y)))
    }

    /// Probability that all marker outputs appear, given the sensors' bits.
    pub fn acceptance_given_flags(&self, ch: &Dmmac, t1: bool, t2: bool) -> f64 {
        self.blocks
            .iter()
            .map(|block| {
                let flag = match block.signaller {
                    Sensor::S1 => t1,
                    Sensor::S2 => t2,
                };
                let (x1, x2) = block.inputs(flag);
                marker_presence_probability(ch.prob(block.witness.output, x1, x2), self.k)
            })
            .product()
    }
}

/// `1 − (1 − p)^k`: probability that an output of per-use probability `p`
/// occurs in `k` independent uses.
pub fn marker_presence_probability(p: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    -f64::exp_m1(k as f64 * f64::ln_1p(-p))
}

fn check_mu(mu: f64) -> Result<(), SchemeError> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(SchemeError::BadMu(mu))
    }
}

/// Test that ignores the channel: accept iff `v` is typical.
pub fn build_local_scheme(p_v: &Pmf, mu: f64, n: usize) -> Result<Scheme, SchemeError> {
    check_mu(mu)?;
    Ok(Scheme {
        kind: SchemeKind::Local,
        n,
        mu,
        k: 0,
        budget: None,
        markers: None,
        blocks: Vec::new(),
        refs: References {
            u1: Pmf::point(1, 0),
            u2: Pmf::point(1, 0),
            v: p_v.clone(),
        },
    })
}

/// Three-condition marker scheme for channels where both sensors can toggle
/// an output.
#[allow(clippy::too_many_arguments)]
pub fn build_sparse_scheme(
    ch: &Dmmac,
    markers: &MarkerSet,
    cm: &CostModel,
    n: usize,
    mu: f64,
    p_u1: &Pmf,
    p_u2: &Pmf,
    p_v: &Pmf,
) -> Result<Scheme, SchemeError> {
    let (w1, w2) = match (markers.sensor1, markers.sensor2) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(SchemeError::MarkerMismatch),
    };
    let blocks = vec![
        Block {
            signaller: Sensor::S1,
            witness: w1,
        },
        Block {
            signaller: Sensor::S2,
            witness: w2,
        },
    ];
    build_marker(
        SchemeKind::Sparse,
        ch,
        markers,
        blocks,
        cm,
        n,
        mu,
        References {
            u1: p_u1.clone(),
            u2: p_u2.clone(),
            v: p_v.clone(),
        },
    )
}

/// Single-block scheme where only sensor 1 signals.
pub fn build_sparse_full_scheme(
    ch: &Dmmac,
    markers: &MarkerSet,
    cm: &CostModel,
    n: usize,
    mu: f64,
    p_u1: &Pmf,
    p_v: &Pmf,
) -> Result<Scheme, SchemeError> {
    let w1 = markers.sensor1.ok_or(SchemeError::MarkerMismatch)?;
    let blocks = vec![Block {
        signaller: Sensor::S1,
        witness: w1,
    }];
    let refs = References {
        u1: p_u1.clone(),
        u2: Pmf::point(ch.dims()[1].max(1), 0),
        v: p_v.clone(),
    };
    build_marker(SchemeKind::SparseFull, ch, markers, blocks, cm, n, mu, refs)
}

/// Single-block scheme where only sensor 2 signals.
pub fn build_full_sparse_scheme(
    ch: &Dmmac,
    markers: &MarkerSet,
    cm: &CostModel,
    n: usize,
    mu: f64,
    p_u2: &Pmf,
    p_v: &Pmf,
) -> Result<Scheme, SchemeError> {
    let w2 = markers.sensor2.ok_or(SchemeError::MarkerMismatch)?;
    let blocks = vec![Block {
        signaller: Sensor::S2,
        witness: w2,
    }];
    let refs = References {
        u1: Pmf::point(ch.dims()[0].max(1), 0),
        u2: p_u2.clone(),
        v: p_v.clone(),
    };
    build_marker(SchemeKind::FullSparse, ch, markers, blocks, cm, n, mu, refs)
}

#[allow(clippy::too_many_arguments)]
fn build_marker(
    kind: SchemeKind,
    ch: &Dmmac,
    markers: &MarkerSet,
    blocks: Vec<Block>,
    cm: &CostModel,
    n: usize,
    mu: f64,
    refs: References,
) -> Result<Scheme, SchemeError> {
    check_mu(mu)?;
    let found = ch.classify();
    let expected = match kind {
        SchemeKind::Sparse => ChannelClass::Sparse,
        SchemeKind::SparseFull => ChannelClass::SparseFull,
        SchemeKind::FullSparse => ChannelClass::FullSparse,
        SchemeKind::Local => unreachable!("local scheme has no markers"),
    };
    if found != expected {
        return Err(SchemeError::ClassMismatch { expected, found });
    }
    if !markers.verify(ch) {
        return Err(SchemeError::MarkerMismatch);
    }
    let dims = ch.dims();
    for (sensor, expected) in [(Sensor::S1, dims[0]), (Sensor::S2, dims[1])] {
        let got = cm.costs(sensor).len();
        if got != expected {
            return Err(ChannelError::BadCostModel(format!(
                "{sensor:?} has {got} costs for {expected} input symbols"
            ))
            .into());
        }
    }
    let budget = cost_budget(cm, n)?;
    let k = block_length(&blocks, cm, &budget, n);
    if k < 1 || blocks.len() * k > n {
        return Err(ChannelError::BlocklengthTooSmall { n, k }.into());
    }
    let scheme = Scheme {
        kind,
        n,
        mu,
        k,
        budget: Some(budget),
        markers: Some(*markers),
        blocks,
        refs,
    };
    debug_assert!([true, false].iter().all(|&f| {
        admissible(&scheme.encode_flag(Sensor::S1, f), Sensor::S1, cm, n)
            && admissible(&scheme.encode_flag(Sensor::S2, f), Sensor::S2, cm, n)
    }));
    Ok(scheme)
}

/// Largest `k ≤ budget.k` such that both encoders stay within budget for
/// either value of their bit.
fn block_length(blocks: &[Block], cm: &CostModel, budget: &CostBudget, n: usize) -> usize {
    let mut k = budget.k;
    for sensor in [Sensor::S1, Sensor::S2] {
        let per_use: f64 = blocks
            .iter()
            .map(|b| {
                let pick = |flag| {
                    let (x1, x2) = b.inputs(flag);
                    match sensor {
                        Sensor::S1 => cm.cost(sensor, x1),
                        Sensor::S2 => cm.cost(sensor, x2),
                    }
                };
                pick(true).max(pick(false))
            })
            .sum();
        if per_use > 0.0 {
            let cap = (cm.budget(sensor, n) / per_use * (1.0 + 1e-12)).floor() as usize;
            k = k.min(cap);
        }
    }
    k
}

/// Decider that accepts the null hypothesis with a given probability.
pub trait RandomizedDecider {
    /// Probability of deciding 0 on `(v, y)`.
    fn accept_probability(&self, v: &[usize], y: &[usize]) -> f64;
}

impl<F> RandomizedDecider for F
where
    F: Fn(&[usize], &[usize]) -> f64,
{
    fn accept_probability(&self, v: &[usize], y: &[usize]) -> f64 {
        self(v, y)
    }
}

/// Deterministic decider: 0 iff the acceptance probability exceeds `gamma`.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdDecider<D> {
    inner: D,
    gamma: f64,
}

impl<D: RandomizedDecider> ThresholdDecider<D> {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn decide(&self, v: &[usize], y: &[usize]) -> u8 {
        u8::from(self.inner.accept_probability(v, y) <= self.gamma)
    }
}

pub fn derandomize<D: RandomizedDecider>(
    rd: D,
    gamma: f64,
) -> Result<ThresholdDecider<D>, SchemeError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(SchemeError::BadThreshold(gamma));
    }
    Ok(ThresholdDecider { inner: rd, gamma })
}

/// `γ_n = 1 / ln(2 + n)`: vanishes, but slower than any exponential.
pub fn gamma_schedule(n: usize) -> f64 {
    1.0 / (2.0 + n as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::BudgetLaw;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn adder() -> Dmmac {
        Dmmac::from_fn([2, 2, 4], |x1, x2, y| {
            let s = x1 + x2;
            if y == s || y == s + 1 {
                0.5
            } else {
                0.0
            }
        })
        .unwrap()
    }

    fn only_x1() -> Dmmac {
        Dmmac::from_fn([2, 2, 2], |x1, x2, y| match (x1, y) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => [0.5, 0.3][x2] * if y == 0 { 1.0 } else { 0.0 } + [0.5, 0.7][x2] * if y == 1 { 1.0 } else { 0.0 },
        })
        .unwrap()
    }

    fn half() -> Pmf {
        Pmf::uniform(2)
    }

    fn sparse(n: usize, mu: f64) -> (Dmmac, Scheme, CostModel) {
        let ch = adder();
        let m = ch.find_markers(ChannelClass::Sparse).unwrap();
        let cm = CostModel::unit([2, 2], BudgetLaw::sqrt()).unwrap();
        let s = build_sparse_scheme(&ch, &m, &cm, n, mu, &half(), &half(), &half()).unwrap();
        (ch, s, cm)
    }

    #[test]
    fn local_scheme() {
        let s = build_local_scheme(&half(), 0.1, 4).unwrap();
        assert_eq!(s.decide(&[0; 4], &[0, 1, 1, 0]), 0);
        assert_eq!(s.decide(&[0; 4], &[0, 0, 0, 1]), 1);
        let wide = build_local_scheme(&half(), 1.0, 4).unwrap();
        assert_eq!(wide.decide(&[], &[0, 0, 0, 0]), 0);
        let skew = build_local_scheme(&Pmf::new(vec![1.0, 0.0]).unwrap(), 1.0, 3).unwrap();
        assert_eq!(skew.decide(&[], &[0, 1, 0]), 1);
        let cm = CostModel::unit([3, 5], BudgetLaw::Log { a: 0.1 }).unwrap();
        assert!(admissible(&s.encode1(&[1, 0, 1, 0]), Sensor::S1, &cm, 4));
        assert!(admissible(&s.encode2(&[1, 1, 1, 1]), Sensor::S2, &cm, 4));
        assert!(build_local_scheme(&half(), 0.0, 4).is_err());
    }

    #[test]
    fn sparse_encoders() {
        let (_, s, cm) = sparse(100, 0.1);
        assert_eq!(s.k(), 5);
        let typical: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let x1 = s.encode1(&typical);
        // enabled = 0, blocked = 1; sensor 1 sends the partner of sensor 2's
        // witness (0) in block 2.
        assert_eq!(&x1[..5], &[0; 5]);
        assert_eq!(&x1[5..10], &[0; 5]);
        let x1_bad = s.encode1(&[1; 100]);
        assert_eq!(&x1_bad[..5], &[1; 5]);
        assert!(x1_bad[10..].iter().all(|&x| x == 0));
        assert!(admissible(&x1_bad, Sensor::S1, &cm, 100));
        let x2_bad = s.encode2(&[0; 100]);
        assert_eq!(&x2_bad[5..10], &[1; 5]);
        assert!(admissible(&x2_bad, Sensor::S2, &cm, 100));
    }

    #[test]
    fn sparse_decider() {
        let (_, s, _) = sparse(20, 0.1);
        let k = s.k();
        assert_eq!(k, 2);
        let v: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let mut y = vec![3; 20];
        y[1] = 0;
        y[k] = 0;
        assert_eq!(s.decide(&y, &v), 0);
        assert_eq!(s.decide(&y, &[0; 20]), 1);
        y[k] = 2;
        assert_eq!(s.decide(&y, &v), 1);
    }

    #[test]
    fn sparse_class_guards() {
        let ch = only_x1();
        let m = ch.find_markers(ChannelClass::SparseFull).unwrap();
        let cm = CostModel::unit([2, 2], BudgetLaw::sqrt()).unwrap();
        assert!(matches!(
            build_sparse_scheme(&ch, &m, &cm, 100, 0.1, &half(), &half(), &half()),
            Err(SchemeError::MarkerMismatch)
        ));
        let both = MarkerSet {
            sensor1: m.sensor1,
            sensor2: m.sensor1,
        };
        assert!(matches!(
            build_sparse_scheme(&ch, &both, &cm, 100, 0.1, &half(), &half(), &half()),
            Err(SchemeError::ClassMismatch { .. })
        ));
        let a = adder();
        let mut bad = a.find_markers(ChannelClass::Sparse).unwrap();
        bad.sensor1.as_mut().unwrap().output = 1;
        assert!(matches!(
            build_sparse_scheme(&a, &bad, &cm, 100, 0.1, &half(), &half(), &half()),
            Err(SchemeError::MarkerMismatch)
        ));
        let m = a.find_markers(ChannelClass::Sparse).unwrap();
        assert!(matches!(
            build_sparse_scheme(&a, &m, &cm, 3, 0.1, &half(), &half(), &half()),
            Err(SchemeError::Channel(ChannelError::BlocklengthTooSmall { .. }))
        ));
    }

    #[test]
    fn sparse_full_scheme() {
        let ch = only_x1();
        let m = ch.find_markers(ChannelClass::SparseFull).unwrap();
        let cm = CostModel::unit([2, 2], BudgetLaw::sqrt()).unwrap();
        let s = build_sparse_full_scheme(&ch, &m, &cm, 64, 0.1, &half(), &half()).unwrap();
        let w = m.sensor1.unwrap();
        let k = s.k();
        let x1 = s.encode1(&(0..64).map(|i| i % 2).collect::<Vec<_>>());
        assert!(x1[..k].iter().all(|&x| x == w.enabled));
        assert!(x1[k..].iter().all(|&x| x == 0));
        assert_eq!(s.encode2(&[0; 64]), s.encode2(&[1; 64]));
        assert!(s.encode2(&[0; 64])[..k].iter().all(|&x| x == w.partner));
        let v: Vec<usize> = (0..64).map(|i| i % 2).collect();
        let absent = vec![1 - w.output; 64];
        assert_eq!(s.decide(&absent, &v), 1);
        let mut present = absent.clone();
        present[k - 1] = w.output;
        assert_eq!(s.decide(&present, &v), 0);
    }

    #[test]
    fn full_sparse_mirrors_sparse_full() {
        let ch = only_x1();
        let mirrored = Dmmac::from_fn([2, 2, 2], |x1, x2, y| ch.prob(y, x2, x1)).unwrap();
        assert_eq!(mirrored.classify(), ChannelClass::FullSparse);
        let m = mirrored.find_markers(ChannelClass::FullSparse).unwrap();
        let cm = CostModel::unit([2, 2], BudgetLaw::sqrt()).unwrap();
        let s = build_full_sparse_scheme(&mirrored, &m, &cm, 64, 0.1, &half(), &half()).unwrap();
        let w = m.sensor2.unwrap();
        let k = s.k();
        let x2 = s.encode2(&(0..64).map(|i| i % 2).collect::<Vec<_>>());
        assert!(x2[..k].iter().all(|&x| x == w.enabled));
        assert!(x2[k..].iter().all(|&x| x == 0));
        assert_eq!(s.encode1(&[0; 64]), s.encode1(&[1; 64]));
        let v: Vec<usize> = (0..64).map(|i| i % 2).collect();
        assert_eq!(s.decide(&vec![1 - w.output; 64], &v), 1);
        assert!(build_sparse_full_scheme(&mirrored, &m, &cm, 64, 0.1, &half(), &half()).is_err());
    }

    #[test]
    fn unequal_costs_shrink_blocks() {
        let ch = adder();
        let m = ch.find_markers(ChannelClass::Sparse).unwrap();
        let law = BudgetLaw::sqrt();
        let cm = CostModel::new([vec![0.0, 3.0], vec![0.0, 1.0]], [law, law]).unwrap();
        let n = 400;
        let s = build_sparse_scheme(&ch, &m, &cm, n, 0.1, &half(), &half(), &half()).unwrap();
        assert!(s.k() <= s.budget().unwrap().k);
        for f in [true, false] {
            assert!(admissible(&s.encode_flag(Sensor::S1, f), Sensor::S1, &cm, n));
            assert!(admissible(&s.encode_flag(Sensor::S2, f), Sensor::S2, &cm, n));
        }
    }

    #[test]
    fn decider_permutation_invariance() {
        let (_, s, _) = sparse(40, 0.15);
        let k = s.k();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let mut y: Vec<usize> = (0..40).map(|_| rng.random_range(0..4)).collect();
            let mut v: Vec<usize> = (0..40).map(|_| rng.random_range(0..2)).collect();
            let d = s.decide(&y, &v);
            y[..k].shuffle(&mut rng);
            y[k..2 * k].shuffle(&mut rng);
            y[2 * k..].shuffle(&mut rng);
            v.shuffle(&mut rng);
            assert_eq!(s.decide(&y, &v), d);
        }
    }

    #[test]
    fn marker_presence_frequency() {
        let ch = adder();
        let k = 6;
        let p = ch.prob(0, 0, 0);
        let exact = marker_presence_probability(p, k);
        assert!((exact - (1.0 - 0.5f64.powi(6))).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let trials = 20_000;
        let hits = (0..trials)
            .filter(|_| (0..k).any(|_| ch.sample(0, 0, &mut rng) == 0))
            .count();
        let freq = hits as f64 / trials as f64;
        let se = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!((freq - exact).abs() < 3.0 * se, "{freq} vs {exact}");
    }

    #[test]
    fn acceptance_given_flags_uses_blocked_zero() {
        let (ch, s, _) = sparse(100, 0.1);
        let both = s.acceptance_given_flags(&ch, true, true);
        assert!((both - (1.0 - 0.5f64.powi(5)).powi(2)).abs() < 1e-15);
        assert_eq!(s.acceptance_given_flags(&ch, false, true), 0.0);
        assert_eq!(s.acceptance_given_flags(&ch, true, false), 0.0);
    }

    #[test]
    fn derandomize_thresholds() {
        let v = [0, 1];
        let y = [2, 3];
        assert_eq!(derandomize(|_: &[usize], _: &[usize]| 0.6, 0.5).unwrap().decide(&v, &y), 0);
        assert_eq!(derandomize(|_: &[usize], _: &[usize]| 0.5, 0.5).unwrap().decide(&v, &y), 1);
        assert_eq!(derandomize(|_: &[usize], _: &[usize]| 0.0, 0.5).unwrap().decide(&v, &y), 1);
        assert!(derandomize(|_: &[usize], _: &[usize]| 0.0, 1.0).is_err());
        assert!(derandomize(|_: &[usize], _: &[usize]| 0.0, 0.0).is_err());
    }

    #[test]
    fn gamma_schedule_values() {
        assert!((gamma_schedule(1) - 0.910_239_226_626_837_3).abs() < 1e-15);
        let mut prev = gamma_schedule(1);
        for n in 2..2000 {
            let g = gamma_schedule(n);
            assert!(g < prev);
            prev = g;
        }
        assert!(gamma_schedule(1_000_000).ln().abs() / 1e6 < 2e-5);
    }
}
