use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use statrs::function::gamma::{gamma, ln_gamma};

use super::{BudgetLaw, ChannelError};

/// Additive MAC `Y = h1 X1 + h2 X2 + Z` with generalized-Gaussian noise of
/// shape `p` and scale `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgMac {
    pub h1: f64,
    pub h2: f64,
    pub p: f64,
    pub sigma: f64,
}

impl GgMac {
    pub fn new(h1: f64, h2: f64, p: f64, sigma: f64) -> Result<Self, ChannelError> {
        let finite = [h1, h2, p, sigma].iter().all(|v| v.is_finite());
        if !finite || h1 == 0.0 || h2 == 0.0 || p <= 0.0 || sigma <= 0.0 {
            return Err(ChannelError::BadGgParams(format!(
                "need nonzero h1, h2 and positive p, sigma; got h1={h1} h2={h2} p={p} sigma={sigma}"
            )));
        }
        Ok(Self { h1, h2, p, sigma })
    }

    /// `E|Z|^p = 2σ^p/p`.
    pub fn noise_moment(&self) -> f64 {
        2.0 * self.sigma.powf(self.p) / self.p
    }

    /// `|h1|^p Γ1(n) + |h2|^p Γ2(n)`.
    fn weighted_budget(&self, laws: &[BudgetLaw; 2], n: usize) -> f64 {
        self.h1.abs().powf(self.p) * laws[0].gamma(n) + self.h2.abs().powf(self.p) * laws[1].gamma(n)
    }
}

/// Normalizer `c_p = p / (2^{(p+1)/p} Γ(1/p))`.
pub fn gg_constant(p: f64) -> f64 {
    p / (2f64.powf((p + 1.0) / p) * gamma(1.0 / p))
}

fn ln_gg_constant(p: f64) -> f64 {
    p.ln() - (p + 1.0) / p * std::f64::consts::LN_2 - ln_gamma(1.0 / p)
}

pub fn gg_log_density(z: f64, p: f64, sigma: f64) -> f64 {
    ln_gg_constant(p) - sigma.ln() - z.abs().powf(p) / (2.0 * sigma.powf(p))
}

/// I.i.d. noise via `|Z|^p / (2σ^p) ~ Gamma(1/p, 1)` and a fair sign.
pub fn gg_sample<R: Rng + ?Sized>(p: f64, sigma: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(1.0 / p, 1.0).expect("positive shape");
    let scale = 2.0 * sigma.powf(p);
    (0..n)
        .map(|_| {
            let mag = (scale * g.sample(rng)).powf(1.0 / p);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

pub fn gg_channel_output<R: Rng + ?Sized>(
    mac: &GgMac,
    x1: &[f64],
    x2: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>, ChannelError> {
    if x1.len() != x2.len() {
        return Err(ChannelError::LengthMismatch(x1.len(), x2.len()));
    }
    let z = gg_sample(mac.p, mac.sigma, x1.len(), rng);
    Ok(x1
        .iter()
        .zip(x2)
        .zip(z)
        .map(|((a, b), z)| mac.h1 * a + mac.h2 * b + z)
        .collect())
}

/// `ln p(y | x1, x2) − ln p(y | x̃1, x̃2)` for the memoryless extension.
pub fn gg_log_ratio(mac: &GgMac, y: &[f64], x: (&[f64], &[f64]), x_alt: (&[f64], &[f64])) -> f64 {
    let p = mac.p;
    let mut acc = 0.0;
    for i in 0..y.len() {
        let b = mac.h1 * x.0[i] + mac.h2 * x.1[i];
        let bt = mac.h1 * x_alt.0[i] + mac.h2 * x_alt.1[i];
        acc += (y[i] - bt).abs().powf(p) - (y[i] - b).abs().powf(p);
    }
    acc / (2.0 * mac.sigma.powf(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgRatioBound {
    /// Radius of the output set `{‖y‖_p^p ≤ ν}`; infinite for `p ≤ 1`.
    pub nu: f64,
    /// Lower bound on [`gg_log_ratio`] over admissible inputs and outputs in
    /// the set.
    pub log_ratio_lower_bound: f64,
}

/// Closed-form lower bound on the output log-likelihood ratio between any two
/// admissible input pairs, where admissible means `Σ|x_ℓ,i|^p ≤ Γ_ℓ(n)`.
pub fn gg_ratio_bound(mac: &GgMac, laws: &[BudgetLaw; 2], n: usize, delta: f64) -> GgRatioBound {
    let p = mac.p;
    let s = mac.weighted_budget(laws, n);
    let sp = mac.sigma.powf(p);
    if p <= 1.0 {
        return GgRatioBound {
            nu: f64::INFINITY,
            log_ratio_lower_bound: -2f64.powf(p) * s / sp,
        };
    }
    let nf = n as f64;
    let nu = 2f64.powf(2.0 * p - 2.0) * s + 2f64.powf(p - 1.0) * (nf * 2.0 * sp / p + delta * nf);
    let bound = -(2f64.powf(p - 2.0) * p / sp)
        * (4.0 * 2f64.powf(p) * s + 2.0 * s.powf(1.0 / p) * nu.powf((p - 1.0) / p));
    GgRatioBound {
        nu,
        log_ratio_lower_bound: bound,
    }
}

/// Monte-Carlo estimate of `P[‖Y^n‖_p^p > ν]` with all-zero inputs.
pub fn gg_dn_tail(
    mac: &GgMac,
    laws: &[BudgetLaw; 2],
    n: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> f64 {
    let zeros = vec![0.0; n];
    gg_dn_tail_with_inputs(mac, laws, &zeros, &zeros, delta, trials, seed)
}

/// Same as [`gg_dn_tail`] with fixed input sequences.
pub fn gg_dn_tail_with_inputs(
    mac: &GgMac,
    laws: &[BudgetLaw; 2],
    x1: &[f64],
    x2: &[f64],
    delta: f64,
    trials: usize,
    seed: u64,
) -> f64 {
    if mac.p <= 1.0 || trials == 0 {
        return 0.0;
    }
    let n = x1.len();
    let nu = gg_ratio_bound(mac, laws, n, delta).nu;
    let hits = count_hits(trials, seed, |rng| {
        let y = gg_channel_output(mac, x1, x2, rng).expect("equal lengths");
        y.iter().map(|v| v.abs().powf(mac.p)).sum::<f64>() > nu
    });
    hits as f64 / trials as f64
}

/// Monte-Carlo estimate of `P[(1/n) Σ|Z_i|^p − E|Z|^p ≥ δ]`, the weak-law
/// term that dominates the output-set tail.
pub fn gg_weak_law_tail(p: f64, sigma: f64, n: usize, delta: f64, trials: usize, seed: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let mean = 2.0 * sigma.powf(p) / p;
    let hits = count_hits(trials, seed, |rng| {
        let z = gg_sample(p, sigma, n, rng);
        z.iter().map(|v| v.abs().powf(p)).sum::<f64>() / n as f64 - mean >= delta
    });
    hits as f64 / trials as f64
}

fn count_hits<F>(trials: usize, seed: u64, event: F) -> usize
where
    F: Fn(&mut ChaCha8Rng) -> bool + Sync,
{
    (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            event(&mut rng)
        })
        .count()
}
