#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use stein_mac::channels::Dmmac;
use stein_mac::prob::{JointPmf, Pmf};
use stein_mac::schemes::Scheme;
use stein_mac::simulator::TestProblem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `Y = x1 + x2 + Z` over binary inputs, `Z` uniform on {0, 1}.
pub fn binary_adder() -> Dmmac {
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

/// `Y = S1 x1 + S2 x2 + Z` with inputs in {-1, 1}, `Z` uniform on {0, 1},
/// and `P(S_l = 1) = s_l`, `S_l` in {-1, 1}. Outputs -2..=3 map to 0..=5.
pub fn random_sign_adder(s1: f64, s2: f64) -> Dmmac {
    let xs = [-1i32, 1];
    Dmmac::from_fn([2, 2, 6], |a, b, y| {
        let target = y as i32 - 2;
        let mut p = 0.0;
        for (sa, pa) in [(1, s1), (-1, 1.0 - s1)] {
            for (sb, pb) in [(1, s2), (-1, 1.0 - s2)] {
                for z in [0, 1] {
                    if sa * xs[a] + sb * xs[b] + z == target {
                        p += pa * pb * 0.5;
                    }
                }
            }
        }
        p
    })
    .unwrap()
}

/// Uniform draw from the simplex.
pub fn dirichlet(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

pub fn random_pmf(rng: &mut ChaCha8Rng, k: usize) -> Pmf {
    Pmf::new(dirichlet(rng, k)).unwrap()
}

pub fn random_joint(rng: &mut ChaCha8Rng, dims: &[usize]) -> JointPmf {
    JointPmf::new(dims.to_vec(), dirichlet(rng, dims.iter().product())).unwrap()
}

/// Random `P ≪ Q` on 2×2×2; `P` has each cell zeroed with probability 1/4.
pub fn random_problem(rng: &mut ChaCha8Rng) -> (JointPmf, JointPmf) {
    let q = random_joint(rng, &[2, 2, 2]);
    loop {
        let w: Vec<f64> = (0..8)
            .map(|_| if rng.random_bool(0.25) { 0.0 } else { Exp1.sample(rng) })
            .collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            let p = JointPmf::new(vec![2, 2, 2], w.iter().map(|x| x / s).collect()).unwrap();
            return (p, q);
        }
    }
}

/// Correlated binary instance: under `P`, `U1 = V = 0` and `U2` is a fair
/// coin; flat index is `(u1 * 2 + u2) * 2 + v`.
pub fn pinned_problem() -> TestProblem {
    let q = JointPmf::new(
        vec![2, 2, 2],
        vec![0.2025, 0.05, 0.2475, 0.05, 0.15, 0.1, 0.15, 0.05],
    )
    .unwrap();
    let mut p = vec![0.0; 8];
    p[0] = 0.5;
    p[2] = 0.5;
    TestProblem::new(JointPmf::new(vec![2, 2, 2], p).unwrap(), q).unwrap()
}

/// Generic binary instance with fair marginals under `P`.
pub fn generic_problem() -> TestProblem {
    let p = JointPmf::new(
        vec![2, 2, 2],
        vec![0.15, 0.1, 0.12, 0.13, 0.1, 0.15, 0.13, 0.12],
    )
    .unwrap();
    let q = JointPmf::new(
        vec![2, 2, 2],
        vec![0.2025, 0.05, 0.2475, 0.05, 0.15, 0.1, 0.15, 0.05],
    )
    .unwrap();
    TestProblem::new(p, q).unwrap()
}

/// Calls `f` with every length-`n` sequence over `m` symbols.
pub fn for_each_sequence(m: usize, n: usize, mut f: impl FnMut(&[usize])) {
    let mut seq = vec![0usize; n];
    loop {
        f(&seq);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            seq[i] += 1;
            if seq[i] < m {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
    }
}

pub fn seq_index(seq: &[usize], m: usize) -> usize {
    seq.iter().rev().fold(0, |acc, &s| acc * m + s)
}

/// Joint laws of `(V^n, Y^n)` under both hypotheses, by enumerating raw
/// source and output sequences. Index is `v_index * |Y|^n + y_index`.
pub fn v_y_laws(problem: &TestProblem, ch: &Dmmac, scheme: &Scheme) -> (Vec<f64>, Vec<f64>) {
    let n = scheme.n();
    let [_, _, nv] = problem.dims();
    let ny = ch.dims()[2];
    let ycount = ny.pow(n as u32);
    let mut laws = (vec![0.0; nv.pow(n as u32) * ycount], vec![0.0; nv.pow(n as u32) * ycount]);
    let cells = problem.p().num_cells();
    for_each_sequence(cells, n, |src| {
        let split = problem.p().split_axes(src);
        let pp: f64 = src.iter().map(|&c| problem.p().probs()[c]).product();
        let pq: f64 = src.iter().map(|&c| problem.q().probs()[c]).product();
        if pp == 0.0 && pq == 0.0 {
            return;
        }
        let x1 = scheme.encode1(&split[0]);
        let x2 = scheme.encode2(&split[1]);
        let vi = seq_index(&split[2], nv);
        for_each_sequence(ny, n, |y| {
            let py: f64 = (0..n).map(|i| ch.prob(y[i], x1[i], x2[i])).product();
            if py > 0.0 {
                let idx = vi * ycount + seq_index(y, ny);
                laws.0[idx] += pp * py;
                laws.1[idx] += pq * py;
            }
        });
    });
    laws
}

/// Error probabilities of `scheme` by raw enumeration.
pub fn brute_force_errors(problem: &TestProblem, ch: &Dmmac, scheme: &Scheme) -> (f64, f64) {
    let n = scheme.n();
    let nv = problem.dims()[2];
    let ny = ch.dims()[2];
    let ycount = ny.pow(n as u32);
    let (l0, l1) = v_y_laws(problem, ch, scheme);
    let mut alpha = 0.0;
    let mut beta = 0.0;
    for_each_sequence(nv, n, |v| {
        for_each_sequence(ny, n, |y| {
            let idx = seq_index(v, nv) * ycount + seq_index(y, ny);
            if scheme.decide(y, v) == 0 {
                beta += l1[idx];
            } else {
                alpha += l0[idx];
            }
        });
    });
    (alpha, beta)
}
