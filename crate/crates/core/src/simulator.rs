//! Error-probability estimation for a (problem, channel, scheme) triple.
//!
//! Three estimators are available: direct Monte-Carlo with Wilson intervals,
//! exact enumeration over joint types, and importance sampling of the type-II
//! error with sources drawn from a tilted joint and reweighted by the
//! likelihood ratio. All randomness is derived from a master seed and the
//! trial index, so results do not depend on scheduling.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

use crate::channels::{gg_channel_output, ChannelError, Dmmac, GgMac};
use crate::exponents::{min_kl_fixed_marginals, ExponentError, IpfOptions, MarginalConstraintSet};
use crate::prob::{counts_typical, kl_divergence, Axis, JointPmf, ProbError};
use crate::schemes::{Scheme, SchemeError, SchemeKind};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Upper limit on the number of joint types the exact oracle will visit.
pub const MAX_COMPOSITIONS: u64 = 20_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("problem: {0}")]
    BadProblem(String),
    #[error("trial count must be positive")]
    ZeroTrials,
    #[error("exact enumeration would visit {compositions} joint types (limit {MAX_COMPOSITIONS})")]
    InstanceTooLarge { compositions: u64 },
    #[error("tilt vanishes on cell {cell:?} where Q is positive and acceptance is possible")]
    ZeroTiltOnSupport { cell: Vec<usize> },
    #[error("cannot fit an exponent: beta estimate at n = {n} is zero")]
    DegenerateFit { n: usize },
    #[error("exponent fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("blocklength ladder must be nonempty and strictly increasing")]
    BadLadder,
    #[error("{0}")]
    Unsupported(String),
    #[error("scheme was built for n = {scheme}, asked to run at n = {requested}")]
    BlocklengthMismatch { scheme: usize, requested: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// The hypothesis pair `H0: P`, `H1: Q` on `(U1, U2, V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestProblem {
    p: JointPmf,
    q: JointPmf,
}

impl TestProblem {
    pub fn new(p: JointPmf, q: JointPmf) -> Result<Self, SimError> {
        if p.rank() != 3 {
            return Err(SimError::BadProblem(format!(
                "joints need 3 axes, got {}",
                p.rank()
            )));
        }
        // Rejects shape mismatches and P ⋪ Q with the offending cell.
        kl_divergence(&p, &q)?;
        Ok(Self { p, q })
    }

    pub fn p(&self) -> &JointPmf {
        &self.p
    }

    pub fn q(&self) -> &JointPmf {
        &self.q
    }

    pub fn dims(&self) -> [usize; 3] {
        let d = self.p.dims();
        [d[0], d[1], d[2]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Channel {
    Discrete(Dmmac),
    Gg(GgMac),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Direct,
    Importance,
    Exact,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Direct => "direct",
            Estimator::Importance => "importance",
            Estimator::Exact => "exact",
        }
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Estimator::Direct),
            "importance" => Ok(Estimator::Importance),
            "exact" => Ok(Estimator::Exact),
            other => Err(format!("unknown estimator {other:?}")),
        }
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo.min(p), hi.max(p))
}

/// Error estimates at one blocklength.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEstimate {
    pub n: usize,
    pub estimator: Estimator,
    pub alpha: f64,
    pub alpha_ci: (f64, f64),
    pub beta: f64,
    /// `ln beta`, kept separately because beta may underflow.
    pub ln_beta: f64,
    pub beta_ci: (f64, f64),
    /// Relative standard error of an importance-sampling beta.
    pub beta_rel_se: Option<f64>,
    pub trials: usize,
}

/// Importance-sampling estimate of the type-II error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsEstimate {
    pub beta: f64,
    pub ln_beta: f64,
    /// Variance of the estimator (not of a single weight).
    pub variance: f64,
    /// Standard error divided by the estimate; infinite when nothing was
    /// accepted.
    pub rel_se: f64,
    pub accepted: usize,
}

impl IsEstimate {
    pub fn std_error(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn ci95(&self) -> (f64, f64) {
        if self.accepted == 0 {
            return (0.0, 0.0);
        }
        let half = Z95 * self.rel_se;
        ((self.beta * (1.0 - half)).max(0.0), (self.beta * (1.0 + half)).min(1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactErrors {
    pub alpha: f64,
    pub beta: f64,
    pub ln_beta: f64,
}

/// Cell layout helpers shared by the estimators.
struct Layout {
    dims: [usize; 3],
    coords: Vec<[usize; 3]>,
}

impl Layout {
    fn new(j: &JointPmf) -> Self {
        let d = j.dims();
        let dims = [d[0], d[1], d[2]];
        let coords = (0..j.num_cells())
            .map(|c| [j.axis_coord(c, 0), j.axis_coord(c, 1), j.axis_coord(c, 2)])
            .collect();
        Self { dims, coords }
    }

    fn marginal_counts(&self, cell_counts: &[u64]) -> [Vec<u64>; 3] {
        let mut m = self.dims.map(|d| vec![0u64; d]);
        for (c, &k) in cell_counts.iter().enumerate() {
            if k > 0 {
                for axis in 0..3 {
                    m[axis][self.coords[c][axis]] += k;
                }
            }
        }
        m
    }
}

/// Typicality bits `(u1, u2, v)` of a joint type under the scheme's references.
fn flags(scheme: &Scheme, layout: &Layout, cell_counts: &[u64]) -> [bool; 3] {
    let n = scheme.n() as u64;
    let m = layout.marginal_counts(cell_counts);
    let refs = scheme.references();
    let t = |axis: Axis| {
        let counts = &m[axis.index()];
        let r = refs.get(axis);
        // A sensor whose bit is unused gets a one-symbol placeholder reference.
        if r.alphabet_size() != counts.len() {
            return true;
        }
        counts_typical(counts, n, r, scheme.mu())
    };
    [t(Axis::U1), t(Axis::U2), t(Axis::V)]
}

fn check_compatible(problem: &TestProblem, channel: &Channel, scheme: &Scheme) -> Result<(), SimError> {
    let dims = problem.dims();
    let refs = scheme.references();
    if refs.v.alphabet_size() != dims[2] {
        return Err(SimError::BadProblem(format!(
            "scheme expects |V| = {}, problem has {}",
            refs.v.alphabet_size(),
            dims[2]
        )));
    }
    match channel {
        Channel::Gg(_) if scheme.kind() != SchemeKind::Local => Err(SimError::Unsupported(
            "generalized-Gaussian channels only support the local scheme".into(),
        )),
        Channel::Discrete(_) if scheme.kind() != SchemeKind::Local => {
            for (axis, want) in [(Axis::U1, dims[0]), (Axis::U2, dims[1])] {
                let r = refs.get(axis);
                let used = scheme.checked_axes().contains(&axis);
                if used && r.alphabet_size() != want {
                    return Err(SimError::BadProblem(format!(
                        "scheme expects |{axis:?}| = {}, problem has {want}",
                        r.alphabet_size()
                    )));
                }
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Draws sources from `source`, runs encoders and channel, and reports
/// whether the null hypothesis was accepted along with the joint type.
fn one_trial(
    source: &JointPmf,
    layout: &Layout,
    channel: &Channel,
    scheme: &Scheme,
    rng: &mut ChaCha8Rng,
) -> (bool, Vec<u64>) {
    let n = scheme.n();
    let cells = source.sample_iid(n, rng);
    let mut counts = vec![0u64; source.num_cells()];
    for &c in &cells {
        counts[c] += 1;
    }
    let [t1, t2, tv] = flags(scheme, layout, &counts);
    let (x1, x2) = scheme.encode_flags(t1, t2);
    let accept = match channel {
        Channel::Discrete(ch) => {
            let y = ch.transmit(&x1, &x2, rng).expect("encoders emit n symbols");
            scheme.decide_with_flag(&y, tv) == 0
        }
        Channel::Gg(mac) => {
            let to_real = |x: &[usize]| x.iter().map(|&s| s as f64).collect::<Vec<_>>();
            // The local decider does not look at the output.
            let _ = gg_channel_output(mac, &to_real(&x1), &to_real(&x2), rng);
            scheme.decide_with_flag(&[], tv) == 0
        }
    };
    (accept, counts)
}

/// Direct Monte-Carlo estimate of both error probabilities.
///
/// Trial `t` uses the same random stream under both hypotheses.
pub fn run_trials(
    problem: &TestProblem,
    channel: &Channel,
    scheme: &Scheme,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<ErrorEstimate, SimError> {
    if trials == 0 {
        return Err(SimError::ZeroTrials);
    }
    if scheme.n() != n {
        return Err(SimError::BlocklengthMismatch {
            scheme: scheme.n(),
            requested: n,
        });
    }
    check_compatible(problem, channel, scheme)?;
    let layout = Layout::new(problem.p());
    let (rejects, accepts) = (0..trials)
        .into_par_iter()
        .map(|t| {
            let a0 = one_trial(problem.p(), &layout, channel, scheme, &mut trial_rng(seed, t)).0;
            let a1 = one_trial(problem.q(), &layout, channel, scheme, &mut trial_rng(seed, t)).0;
            (u64::from(!a0), u64::from(a1))
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let tr = trials as u64;
    let alpha = rejects as f64 / trials as f64;
    let beta = accepts as f64 / trials as f64;
    Ok(ErrorEstimate {
        n,
        estimator: Estimator::Direct,
        alpha,
        alpha_ci: wilson_interval(rejects, tr),
        beta,
        ln_beta: beta.ln(),
        beta_ci: wilson_interval(accepts, tr),
        beta_rel_se: None,
        trials,
    })
}

/// I-projection of `Q` onto the joints whose checked marginals equal those of
/// `P`: the dominant source type among accepted trials under the alternative.
pub fn default_tilt(problem: &TestProblem, scheme: &Scheme) -> Result<JointPmf, SimError> {
    let mut cs = MarginalConstraintSet::default();
    for &axis in scheme.checked_axes() {
        cs.push(axis.index(), problem.p().axis_marginal(axis)?)?;
    }
    Ok(min_kl_fixed_marginals(problem.q(), &cs, IpfOptions::default())?.argmin)
}

/// Importance-sampling estimate of the type-II error with sources drawn from
/// `tilt` and accepted trials weighted by `Π Q(cell) / tilt(cell)`.
pub fn importance_sample_beta(
    problem: &TestProblem,
    channel: &Channel,
    scheme: &Scheme,
    n: usize,
    trials: usize,
    tilt: &JointPmf,
    seed: u64,
) -> Result<IsEstimate, SimError> {
    if trials == 0 {
        return Err(SimError::ZeroTrials);
    }
    if scheme.n() != n {
        return Err(SimError::BlocklengthMismatch {
            scheme: scheme.n(),
            requested: n,
        });
    }
    check_compatible(problem, channel, scheme)?;
    let q = problem.q();
    if tilt.dims() != q.dims() {
        return Err(ProbError::ShapeMismatch {
            left: tilt.dims().to_vec(),
            right: q.dims().to_vec(),
        }
        .into());
    }
    let refs = scheme.references();
    for c in 0..q.num_cells() {
        if q.probs()[c] > 0.0 && tilt.probs()[c] == 0.0 {
            let cell = q.cell(c);
            let relevant = scheme
                .checked_axes()
                .iter()
                .all(|&a| refs.get(a).prob(cell[a.index()]) > 0.0);
            if relevant {
                return Err(SimError::ZeroTiltOnSupport { cell });
            }
        }
    }
    let log_ratio: Vec<f64> = q
        .probs()
        .iter()
        .zip(tilt.probs())
        .map(|(&qc, &tc)| if tc > 0.0 { qc.ln() - tc.ln() } else { 0.0 })
        .collect();
    let layout = Layout::new(q);
    // Collected in trial order so the reduction below is schedule-free.
    let log_w: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (accept, counts) = one_trial(tilt, &layout, channel, scheme, &mut trial_rng(seed, t));
            if !accept {
                return f64::NEG_INFINITY;
            }
            counts
                .iter()
                .zip(&log_ratio)
                .filter(|(&k, _)| k > 0)
                .map(|(&k, &lr)| k as f64 * lr)
                .sum()
        })
        .collect();
    Ok(summarize_log_weights(&log_w))
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn summarize_log_weights(log_w: &[f64]) -> IsEstimate {
    let n = log_w.len() as f64;
    let accepted = log_w.iter().filter(|w| w.is_finite()).count();
    let ln_sum = log_sum_exp(log_w.iter().copied());
    let ln_sq = log_sum_exp(log_w.iter().map(|w| 2.0 * w));
    let ln_beta = ln_sum - n.ln();
    if accepted == 0 {
        return IsEstimate {
            beta: 0.0,
            ln_beta: f64::NEG_INFINITY,
            variance: 0.0,
            rel_se: f64::INFINITY,
            accepted,
        };
    }
    // E[w²] / β² − 1, evaluated in logs.
    let ratio = (ln_sq - n.ln() - 2.0 * ln_beta).exp();
    let rel_var = ((ratio - 1.0) * n / (n - 1.0).max(1.0)).max(0.0) / n;
    IsEstimate {
        beta: ln_beta.exp(),
        ln_beta,
        variance: rel_var * (2.0 * ln_beta).exp(),
        rel_se: rel_var.sqrt(),
        accepted,
    }
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
        if r > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    r as u64
}

/// Calls `visit` with every vector of `cells` nonnegative counts summing to `n`.
fn for_each_composition<F: FnMut(&[u64])>(n: u64, cells: usize, visit: &mut F) {
    fn rec<F: FnMut(&[u64])>(buf: &mut Vec<u64>, i: usize, left: u64, visit: &mut F) {
        if i + 1 == buf.len() {
            buf[i] = left;
            visit(buf);
            return;
        }
        for c in 0..=left {
            buf[i] = c;
            rec(buf, i + 1, left - c, visit);
        }
    }
    let mut buf = vec![0u64; cells];
    if cells > 0 {
        rec(&mut buf, 0, n, visit);
    }
}

/// Log multinomial probability of a type under `probs`; `-inf` if impossible.
fn ln_type_prob(counts: &[u64], probs: &[f64], ln_n_fact: f64) -> f64 {
    let mut acc = ln_n_fact;
    for (&k, &p) in counts.iter().zip(probs) {
        if k == 0 {
            continue;
        }
        if p == 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += k as f64 * p.ln() - ln_factorial(k);
    }
    acc
}

/// Exact error probabilities of a marker or local scheme over a discrete
/// channel, by enumerating joint types of the sources.
pub fn exact_error_probs(
    problem: &TestProblem,
    ch: &Dmmac,
    scheme: &Scheme,
) -> Result<ExactErrors, SimError> {
    if scheme.kind() == SchemeKind::Local {
        return exact_local_errors(problem, scheme);
    }
    check_compatible(problem, &Channel::Discrete(ch.clone()), scheme)?;
    let n = scheme.n() as u64;
    let cells = problem.p().num_cells();
    let total = binomial(n + cells as u64 - 1, cells as u64 - 1);
    if total > MAX_COMPOSITIONS {
        return Err(SimError::InstanceTooLarge {
            compositions: total,
        });
    }
    let layout = Layout::new(problem.p());
    let ln_n_fact = ln_factorial(n);
    // Log mass of each (t1, t2, tv) combination under P and Q.
    let mut mass_p = [f64::NEG_INFINITY; 8];
    let mut mass_q = [f64::NEG_INFINITY; 8];
    for_each_composition(n, cells, &mut |counts| {
        let lp = ln_type_prob(counts, problem.p().probs(), ln_n_fact);
        let lq = ln_type_prob(counts, problem.q().probs(), ln_n_fact);
        if lp == f64::NEG_INFINITY && lq == f64::NEG_INFINITY {
            return;
        }
        let [t1, t2, tv] = flags(scheme, &layout, counts);
        let idx = usize::from(t1) * 4 + usize::from(t2) * 2 + usize::from(tv);
        mass_p[idx] = ln_add_exp(mass_p[idx], lp);
        mass_q[idx] = ln_add_exp(mass_q[idx], lq);
    });
    let mut alpha = 0.0;
    let mut ln_beta = f64::NEG_INFINITY;
    for idx in 0..8 {
        let (t1, t2, tv) = (idx & 4 != 0, idx & 2 != 0, idx & 1 != 0);
        let acc = if tv {
            scheme.acceptance_given_flags(ch, t1, t2)
        } else {
            0.0
        };
        alpha += mass_p[idx].exp() * (1.0 - acc);
        if acc > 0.0 {
            ln_beta = ln_add_exp(ln_beta, mass_q[idx] + acc.ln());
        }
    }
    Ok(ExactErrors {
        alpha: alpha.clamp(0.0, 1.0),
        beta: ln_beta.exp(),
        ln_beta,
    })
}

/// Exact errors of the local scheme from the distribution of the `V` type.
pub fn exact_local_errors(problem: &TestProblem, scheme: &Scheme) -> Result<ExactErrors, SimError> {
    if scheme.kind() != SchemeKind::Local {
        return Err(SimError::Unsupported(format!(
            "V-type enumeration only covers the local scheme, got {}",
            scheme.kind()
        )));
    }
    let pv = problem.p().axis_marginal(Axis::V)?;
    let qv = problem.q().axis_marginal(Axis::V)?;
    if scheme.references().v.alphabet_size() != pv.alphabet_size() {
        return Err(SimError::BadProblem("reference and problem |V| differ".into()));
    }
    let n = scheme.n() as u64;
    let m = pv.alphabet_size();
    let total = binomial(n + m as u64 - 1, m as u64 - 1);
    if total > MAX_COMPOSITIONS {
        return Err(SimError::InstanceTooLarge {
            compositions: total,
        });
    }
    let ln_n_fact = ln_factorial(n);
    let mut ln_reject_p = f64::NEG_INFINITY;
    let mut ln_accept_q = f64::NEG_INFINITY;
    for_each_composition(n, m, &mut |counts| {
        if counts_typical(counts, n, &scheme.references().v, scheme.mu()) {
            ln_accept_q = ln_add_exp(ln_accept_q, ln_type_prob(counts, qv.probs(), ln_n_fact));
        } else {
            ln_reject_p = ln_add_exp(ln_reject_p, ln_type_prob(counts, pv.probs(), ln_n_fact));
        }
    });
    Ok(ExactErrors {
        alpha: ln_reject_p.exp().clamp(0.0, 1.0),
        beta: ln_accept_q.exp(),
        ln_beta: ln_accept_q,
    })
}

/// Least-squares line `−ln β ≈ slope · n + intercept` with a 95% band on the
/// slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub half_width_95: f64,
}

/// Slope of `−ln β` against `n`.
pub fn fit_exponent(points: &[(usize, f64)]) -> Result<f64, SimError> {
    let logs: Vec<(usize, f64)> = points.iter().map(|&(n, b)| (n, b.ln())).collect();
    Ok(fit_exponent_ln(&logs)?.slope)
}

/// Same as [`fit_exponent`] from `(n, ln β)` pairs, with the regression band.
pub fn fit_exponent_ln(points: &[(usize, f64)]) -> Result<ExponentFit, SimError> {
    if points.len() < 3 {
        return Err(SimError::TooFewPoints(points.len()));
    }
    if let Some(&(n, _)) = points.iter().find(|(_, lb)| !lb.is_finite() || *lb > 0.0) {
        return Err(SimError::DegenerateFit { n });
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(n, _)| n as f64).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, lb)| -lb).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(SimError::BadLadder);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let df = m - 2.0;
    let se = (ssr / df / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Ok(ExponentFit {
        slope,
        intercept,
        half_width_95: t * se,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub ladder: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub mu: f64,
    pub estimator: Estimator,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.ladder.is_empty() || self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimError::BadLadder);
        }
        if self.trials == 0 {
            return Err(SimError::ZeroTrials);
        }
        Ok(())
    }
}

/// Seed of blocklength `n`, derived from the master seed.
pub fn seed_for(master: u64, n: usize) -> u64 {
    // SplitMix64 finalizer.
    let mut z = master ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderRecord {
    pub estimate: ErrorEstimate,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub records: Vec<LadderRecord>,
    /// `None` with fewer than three points or a zero beta.
    pub fit: Option<ExponentFit>,
    pub theoretical_exponent: f64,
}

impl SimReport {
    pub const CSV_HEADER: &'static str = "n,estimator,alpha_hat,alpha_lo,alpha_hi,beta_hat,beta_lo,beta_hi,fitted_exponent,theoretical_exponent,seed";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        let fitted = self
            .fit
            .map(|f| format!("{:.6e}", f.slope))
            .unwrap_or_default();
        for r in &self.records {
            let e = &r.estimate;
            writeln!(
                out,
                "{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{},{:.6e},{}",
                e.n,
                e.estimator.name(),
                e.alpha,
                e.alpha_ci.0,
                e.alpha_ci.1,
                e.beta,
                e.beta_ci.0,
                e.beta_ci.1,
                fitted,
                self.theoretical_exponent,
                r.seed
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Estimates errors at one blocklength with the configured estimator.
pub fn estimate_at(
    problem: &TestProblem,
    channel: &Channel,
    scheme: &Scheme,
    estimator: Estimator,
    trials: usize,
    seed: u64,
    tilt: Option<&JointPmf>,
) -> Result<ErrorEstimate, SimError> {
    let n = scheme.n();
    match estimator {
        Estimator::Direct => run_trials(problem, channel, scheme, n, trials, seed),
        Estimator::Importance => {
            let own;
            let tilt = match tilt {
                Some(t) => t,
                None => {
                    own = default_tilt(problem, scheme)?;
                    &own
                }
            };
            let direct = run_trials(problem, channel, scheme, n, trials, seed)?;
            let is = importance_sample_beta(problem, channel, scheme, n, trials, tilt, seed)?;
            Ok(ErrorEstimate {
                estimator: Estimator::Importance,
                beta: is.beta,
                ln_beta: is.ln_beta,
                beta_ci: is.ci95(),
                beta_rel_se: Some(is.rel_se),
                ..direct
            })
        }
        Estimator::Exact => {
            let ex = match channel {
                Channel::Discrete(ch) => exact_error_probs(problem, ch, scheme)?,
                Channel::Gg(_) => exact_local_errors(problem, scheme)?,
            };
            Ok(ErrorEstimate {
                n,
                estimator: Estimator::Exact,
                alpha: ex.alpha,
                alpha_ci: (ex.alpha, ex.alpha),
                beta: ex.beta,
                ln_beta: ex.ln_beta,
                beta_ci: (ex.beta, ex.beta),
                beta_rel_se: None,
                trials: 0,
            })
        }
    }
}

/// Runs the estimator along the blocklength ladder and fits the exponent.
pub fn run_ladder<B>(
    problem: &TestProblem,
    channel: &Channel,
    cfg: &SimConfig,
    build: B,
    theoretical_exponent: f64,
) -> Result<SimReport, SimError>
where
    B: Fn(usize) -> Result<Scheme, SimError> + Sync,
{
    cfg.validate()?;
    let body = || -> Result<SimReport, SimError> {
        let mut records = Vec::with_capacity(cfg.ladder.len());
        let mut tilt: Option<JointPmf> = None;
        for &n in &cfg.ladder {
            let scheme = build(n)?;
            if cfg.estimator == Estimator::Importance && tilt.is_none() {
                tilt = Some(default_tilt(problem, &scheme)?);
            }
            let seed = seed_for(cfg.master_seed, n);
            let estimate =
                estimate_at(problem, channel, &scheme, cfg.estimator, cfg.trials, seed, tilt.as_ref())?;
            records.push(LadderRecord { estimate, seed });
        }
        let pts: Vec<(usize, f64)> = records
            .iter()
            .map(|r| (r.estimate.n, r.estimate.ln_beta))
            .collect();
        let fit = fit_exponent_ln(&pts).ok();
        Ok(SimReport {
            records,
            fit,
            theoretical_exponent,
        })
    };
    match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?
            .install(body),
        None => body(),
    }
}
