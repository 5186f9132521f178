mod common;

use common::{binary_adder, brute_force_errors, generic_problem, pinned_problem};
use stein_mac::channels::{BudgetLaw, ChannelClass, CostModel};
use stein_mac::prob::{Axis, Pmf};
use stein_mac::schemes::{build_local_scheme, build_sparse_scheme, Scheme};
use stein_mac::simulator::{
    default_tilt, exact_error_probs, importance_sample_beta, run_ladder, run_trials, Channel,
    Estimator, SimConfig, SimError, TestProblem,
};

fn sparse(problem: &TestProblem, n: usize, mu: f64) -> Scheme {
    let ch = binary_adder();
    let markers = ch.find_markers(ChannelClass::Sparse).unwrap();
    let cm = CostModel::unit([2, 2], BudgetLaw::sqrt()).unwrap();
    let m = |a| problem.p().axis_marginal(a).unwrap();
    build_sparse_scheme(&ch, &markers, &cm, n, mu, &m(Axis::U1), &m(Axis::U2), &m(Axis::V)).unwrap()
}

#[test]
fn composition_oracle_matches_raw_enumeration() {
    let ch = binary_adder();
    for problem in [generic_problem(), pinned_problem()] {
        for mu in [0.1, 0.3] {
            let s = sparse(&problem, 4, mu);
            let (alpha, beta) = brute_force_errors(&problem, &ch, &s);
            let ex = exact_error_probs(&problem, &ch, &s).unwrap();
            assert!((ex.alpha - alpha).abs() < 1e-12, "{} vs {alpha}", ex.alpha);
            assert!((ex.beta - beta).abs() < 1e-12, "{} vs {beta}", ex.beta);
        }
    }
}

#[test]
fn local_scheme_oracle_matches_raw_enumeration() {
    let ch = binary_adder();
    let problem = generic_problem();
    let s = build_local_scheme(&Pmf::uniform(2), 0.2, 5).unwrap();
    let (alpha, beta) = brute_force_errors(&problem, &ch, &s);
    let ex = exact_error_probs(&problem, &ch, &s).unwrap();
    assert!((ex.alpha - alpha).abs() < 1e-12 && (ex.beta - beta).abs() < 1e-12);
}

#[test]
fn direct_mc_within_binomial_error() {
    let problem = generic_problem();
    let ch = binary_adder();
    let s = sparse(&problem, 8, 0.15);
    let ex = exact_error_probs(&problem, &ch, &s).unwrap();
    let trials = 20_000;
    let e = run_trials(&problem, &Channel::Discrete(ch), &s, 8, trials, 11).unwrap();
    for (hat, truth) in [(e.alpha, ex.alpha), (e.beta, ex.beta)] {
        let se = (truth * (1.0 - truth) / trials as f64).sqrt();
        assert!((hat - truth).abs() <= 3.0 * se, "{hat} vs {truth}");
    }
}

#[test]
fn importance_sampling_is_unbiased() {
    let problem = generic_problem();
    let ch = binary_adder();
    let s = sparse(&problem, 8, 0.15);
    let exact = exact_error_probs(&problem, &ch, &s).unwrap().beta;
    let tilt = default_tilt(&problem, &s).unwrap();
    let chan = Channel::Discrete(ch);
    let reps = 50;
    let est: Vec<f64> = (0..reps)
        .map(|r| importance_sample_beta(&problem, &chan, &s, 8, 2000, &tilt, 1000 + r).unwrap().beta)
        .collect();
    let mean = est.iter().sum::<f64>() / reps as f64;
    let var = est.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
}

#[test]
fn alpha_falls_along_the_ladder() {
    let problem = generic_problem();
    let chan = Channel::Discrete(binary_adder());
    let trials = 20_000;
    let alphas: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&n| run_trials(&problem, &chan, &sparse(&problem, n, 0.1), n, trials, 5).unwrap().alpha)
        .collect();
    for w in alphas.windows(2) {
        let sd = ((w[0] * (1.0 - w[0]) + w[1] * (1.0 - w[1])) / trials as f64).sqrt();
        assert!(w[1] <= w[0] + 3.0 * sd, "{alphas:?}");
    }
}

#[test]
fn ladder_is_thread_count_invariant() {
    let problem = pinned_problem();
    let chan = Channel::Discrete(binary_adder());
    let run = |threads| {
        let cfg = SimConfig {
            ladder: vec![40, 60, 80],
            trials: 3000,
            master_seed: 99,
            mu: 0.1,
            estimator: Estimator::Importance,
            threads,
        };
        run_ladder(&problem, &chan, &cfg, |n| Ok(sparse(&problem, n, 0.1)), 0.8).unwrap()
    };
    let one = run(Some(1));
    assert_eq!(one, run(Some(3)));
    assert_eq!(one, run(Some(8)));
    assert_eq!(one.to_csv(), run(None).to_csv());
}

#[test]
fn scheme_length_must_match() {
    let problem = generic_problem();
    let chan = Channel::Discrete(binary_adder());
    assert!(matches!(
        run_trials(&problem, &chan, &sparse(&problem, 20, 0.1), 21, 10, 0),
        Err(SimError::BlocklengthMismatch { .. })
    ));
}
