//! Stein-exponents of the local test and of the marginal-constrained
//! KL minimizations that govern partially connected channels.
//!
//! The minimizations are I-projections of `Q` onto a family of joints with
//! prescribed single-axis marginals. Each constraint is a linear family, so
//! cyclic iterative proportional fitting started at `Q` converges to the
//! projection. [`brute_force_min_kl`] is an independent grid search used to
//! validate the solver on small alphabets.

use thiserror::Error;

use crate::channels::ChannelClass;
use crate::prob::{kl_divergence, JointPmf, Pmf, ProbError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExponentError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("no feasible point: target marginal on axis {axis} puts mass on symbol {symbol} which the reference cannot reach")]
    NoFeasiblePoint { axis: usize, symbol: usize },
    #[error("did not converge after {iterations} sweeps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("brute force supports at most 8 cells, got {cells}")]
    DimensionTooLarge { cells: usize },
    #[error("grid step must lie in (0, 0.1], got {0}")]
    BadGridStep(f64),
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
}

/// Single-axis marginal constraints, at most one per axis.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarginalConstraintSet {
    constraints: Vec<(usize, Pmf)>,
}

impl MarginalConstraintSet {
    pub fn new(constraints: Vec<(usize, Pmf)>) -> Result<Self, ExponentError> {
        let mut set = Self::default();
        for (axis, target) in constraints {
            set.push(axis, target)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, axis: usize, target: Pmf) -> Result<(), ExponentError> {
        if self.constraints.iter().any(|(a, _)| *a == axis) {
            return Err(ExponentError::InvalidConstraint(format!(
                "axis {axis} constrained twice"
            )));
        }
        self.constraints.push((axis, target));
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, Pmf)> {
        self.constraints.iter()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    fn check_against(&self, q: &JointPmf) -> Result<(), ExponentError> {
        for (axis, target) in &self.constraints {
            let Some(&dim) = q.dims().get(*axis) else {
                return Err(ExponentError::InvalidConstraint(format!(
                    "axis {axis} out of range for rank {}",
                    q.rank()
                )));
            };
            if target.alphabet_size() != dim {
                return Err(ExponentError::InvalidConstraint(format!(
                    "target on axis {axis} has {} symbols, axis has {dim}",
                    target.alphabet_size()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpfOptions {
    /// Stop once the largest L1 gap between a constrained marginal and its
    /// target falls to this value.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for IpfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IProjectionResult {
    /// `D(argmin || Q)` in nats.
    pub value: f64,
    pub argmin: JointPmf,
    /// Completed sweeps over the constraint set.
    pub iterations: usize,
    /// Largest L1 gap between a constrained marginal and its target.
    pub residual: f64,
}

/// `D(P_V || Q_V)`: the exponent of the test that ignores the channel.
pub fn local_stein_exponent(p_v: &Pmf, q_v: &Pmf) -> Result<f64, ExponentError> {
    Ok(kl_divergence(p_v, q_v)?)
}

/// Minimizes `D(P || Q)` over joints `P` whose constrained marginals equal the
/// targets, by cyclic iterative proportional fitting.
pub fn min_kl_fixed_marginals(
    q: &JointPmf,
    constraints: &MarginalConstraintSet,
    opts: IpfOptions,
) -> Result<IProjectionResult, ExponentError> {
    min_kl_fixed_marginals_traced(q, constraints, opts, |_| {})
}

/// Same as [`min_kl_fixed_marginals`], calling `on_sweep` with the iterate
/// after every completed sweep.
pub fn min_kl_fixed_marginals_traced<F>(
    q: &JointPmf,
    constraints: &MarginalConstraintSet,
    opts: IpfOptions,
    mut on_sweep: F,
) -> Result<IProjectionResult, ExponentError>
where
    F: FnMut(&JointPmf),
{
    constraints.check_against(q)?;
    if !(opts.tol > 0.0) {
        return Err(ExponentError::InvalidConstraint(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let dims = q.dims().to_vec();
    let mut cells = q.probs().to_vec();
    let mut scratch = q.clone();

    let mut residual = marginal_gap(&scratch, constraints);
    let mut iterations = 0;
    while residual > opts.tol {
        if iterations == opts.max_iters {
            return Err(ExponentError::NonConvergence {
                iterations,
                residual,
            });
        }
        for (axis, target) in constraints.iter() {
            let current = axis_sums(&scratch, *axis);
            let factors: Vec<f64> = current
                .iter()
                .zip(target.probs())
                .enumerate()
                .map(|(symbol, (&cur, &t))| {
                    if t == 0.0 {
                        Ok(0.0)
                    } else if cur <= 0.0 {
                        Err(ExponentError::NoFeasiblePoint {
                            axis: *axis,
                            symbol,
                        })
                    } else {
                        Ok(t / cur)
                    }
                })
                .collect::<Result<_, _>>()?;
            for (flat, cell) in cells.iter_mut().enumerate() {
                *cell *= factors[scratch.axis_coord(flat, *axis)];
            }
            scratch = JointPmf::from_raw(dims.clone(), cells.clone());
        }
        iterations += 1;
        residual = marginal_gap(&scratch, constraints);
        on_sweep(&scratch);
    }

    let total: f64 = cells.iter().sum();
    cells.iter_mut().for_each(|c| *c /= total);
    let argmin = JointPmf::new(dims, cells)?;
    let value = kl_divergence(&argmin, q)?;
    Ok(IProjectionResult {
        value,
        argmin,
        iterations,
        residual,
    })
}

// Unnormalized marginal sums; iterates may drift slightly off the simplex.
fn axis_sums(joint: &JointPmf, axis: usize) -> Vec<f64> {
    let mut out = vec![0.0; joint.dims()[axis]];
    for (flat, &p) in joint.probs().iter().enumerate() {
        out[joint.axis_coord(flat, axis)] += p;
    }
    out
}

fn marginal_gap(joint: &JointPmf, constraints: &MarginalConstraintSet) -> f64 {
    constraints
        .iter()
        .map(|(axis, target)| {
            axis_sums(joint, *axis)
                .iter()
                .zip(target.probs())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Exhaustive grid search for `min D(P || Q)` under marginal constraints.
///
/// Cells where `Q = 0` are pinned to zero. The remaining cells are split into
/// free and dependent coordinates by Gauss-Jordan elimination on the marginal
/// equations (plus total mass); free coordinates range over a grid of step
/// `grid_step` in `[0, 1]` and dependent ones are solved exactly.
pub fn brute_force_min_kl(
    q: &JointPmf,
    constraints: &MarginalConstraintSet,
    grid_step: f64,
) -> Result<f64, ExponentError> {
    brute_force_min_kl_refined(q, constraints, grid_step, 0)
}

/// [`brute_force_min_kl`] followed by `refine_levels` rounds of local grid
/// search, each shrinking the step fivefold inside a window of one previous
/// step around the incumbent.
pub fn brute_force_min_kl_refined(
    q: &JointPmf,
    constraints: &MarginalConstraintSet,
    grid_step: f64,
    refine_levels: usize,
) -> Result<f64, ExponentError> {
    if q.num_cells() > 8 {
        return Err(ExponentError::DimensionTooLarge {
            cells: q.num_cells(),
        });
    }
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(ExponentError::BadGridStep(grid_step));
    }
    constraints.check_against(q)?;
    let system = AffineParam::eliminate(q, constraints)?;
    let nfree = system.free.len();

    // A free cell can hold no more than the smallest target mass covering it.
    let ranges: Vec<(f64, f64)> = system
        .free
        .iter()
        .map(|&cell| {
            let ub = constraints
                .iter()
                .map(|(axis, t)| t.prob(q.axis_coord(cell, *axis)))
                .fold(1.0, f64::min);
            (0.0, ub)
        })
        .collect();
    let mut steps = vec![grid_step; nfree];
    let mut best = system.search(&ranges, &mut steps, q);
    for _ in 0..refine_levels {
        let Some((_, center)) = best.clone() else {
            break;
        };
        let ranges: Vec<(f64, f64)> = center
            .iter()
            .zip(&steps)
            .map(|(&c, &h)| ((c - h).max(0.0), (c + h).min(1.0)))
            .collect();
        let mut finer: Vec<f64> = steps.iter().map(|h| h / 5.0).collect();
        if let Some(found) = system.search(&ranges, &mut finer, q) {
            if best.as_ref().is_none_or(|(v, _)| found.0 < *v) {
                best = Some(found);
            }
        }
        steps = finer;
    }
    match best {
        Some((value, _)) => Ok(value.max(0.0)),
        None => Err(ExponentError::NoFeasiblePoint { axis: 0, symbol: 0 }),
    }
}

/// Feasible joints written as `x_dep = offset - coeffs * x_free`.
struct AffineParam {
    /// Cell index of each free coordinate.
    free: Vec<usize>,
    /// (cell index, offset, coefficient per free coordinate).
    dependent: Vec<(usize, f64, Vec<f64>)>,
    ncells: usize,
}

impl AffineParam {
    fn eliminate(q: &JointPmf, constraints: &MarginalConstraintSet) -> Result<Self, ExponentError> {
        // Cells with the most room become dependent; thin cells stay free so
        // their grid is scaled to their own range.
        let room = |c: usize| {
            constraints
                .iter()
                .map(|(axis, t)| t.prob(q.axis_coord(c, *axis)))
                .fold(1.0, f64::min)
        };
        let mut support: Vec<usize> = (0..q.num_cells()).filter(|&c| q.probs()[c] > 0.0).collect();
        support.sort_by(|&a, &b| room(b).total_cmp(&room(a)));
        let nvars = support.len();

        // Rows: [coefficients | rhs].
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut total = vec![1.0; nvars];
        total.push(1.0);
        rows.push(total);
        for (axis, target) in constraints.iter() {
            for (symbol, &t) in target.probs().iter().enumerate() {
                let mut row: Vec<f64> = support
                    .iter()
                    .map(|&c| f64::from(u8::from(q.axis_coord(c, *axis) == symbol)))
                    .collect();
                if row.iter().all(|&x| x == 0.0) && t > 0.0 {
                    return Err(ExponentError::NoFeasiblePoint {
                        axis: *axis,
                        symbol,
                    });
                }
                row.push(t);
                rows.push(row);
            }
        }

        let mut pivots = Vec::new();
        let mut r = 0;
        for col in 0..nvars {
            let Some(pr) = (r..rows.len()).max_by(|&a, &b| {
                rows[a][col].abs().total_cmp(&rows[b][col].abs())
            }) else {
                break;
            };
            if rows[pr][col].abs() < 1e-12 {
                continue;
            }
            rows.swap(r, pr);
            let lead = rows[r][col];
            rows[r].iter_mut().for_each(|x| *x /= lead);
            for i in 0..rows.len() {
                if i != r && rows[i][col] != 0.0 {
                    let f = rows[i][col];
                    let pivot_row = rows[r].clone();
                    rows[i]
                        .iter_mut()
                        .zip(&pivot_row)
                        .for_each(|(x, p)| *x -= f * p);
                }
            }
            pivots.push(col);
            r += 1;
            if r == rows.len() {
                break;
            }
        }
        // Leftover rows must read 0 = 0.
        for row in &rows[r..] {
            if row[nvars].abs() > 1e-9 {
                return Err(ExponentError::NoFeasiblePoint { axis: 0, symbol: 0 });
            }
        }

        let free_cols: Vec<usize> = (0..nvars).filter(|c| !pivots.contains(c)).collect();
        let dependent = pivots
            .iter()
            .enumerate()
            .map(|(ri, &col)| {
                let coeffs = free_cols.iter().map(|&f| rows[ri][f]).collect();
                (support[col], rows[ri][nvars], coeffs)
            })
            .collect();
        Ok(Self {
            free: free_cols.iter().map(|&c| support[c]).collect(),
            dependent,
            ncells: q.num_cells(),
        })
    }

    /// Grid search over the box `ranges` with both ends of every side on the
    /// grid; `steps` is shrunk to the spacing actually used. Returns the best
    /// value and free point.
    fn search(&self, ranges: &[(f64, f64)], steps: &mut [f64], q: &JointPmf) -> Option<(f64, Vec<f64>)> {
        let axes: Vec<Vec<f64>> = ranges
            .iter()
            .zip(steps.iter_mut())
            .map(|(&(lo, hi), step)| {
                let count = ((hi - lo) / *step - 1e-9).ceil().max(1.0) as usize;
                *step = (hi - lo) / count as f64;
                (0..=count).map(|i| lo + i as f64 * *step).collect()
            })
            .collect();
        let mut idx = vec![0usize; axes.len()];
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut cells = vec![0.0; self.ncells];
        let mut point = vec![0.0; axes.len()];
        loop {
            for (k, p) in point.iter_mut().enumerate() {
                *p = axes[k][idx[k]];
            }
            if let Some(v) = self.evaluate(&point, &mut cells, q) {
                if best.as_ref().is_none_or(|(b, _)| v < *b) {
                    best = Some((v, point.clone()));
                }
            }
            // Odometer increment.
            let mut k = 0;
            loop {
                if k == axes.len() {
                    return best;
                }
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    fn evaluate(&self, point: &[f64], cells: &mut [f64], q: &JointPmf) -> Option<f64> {
        cells.iter_mut().for_each(|c| *c = 0.0);
        for (&cell, &x) in self.free.iter().zip(point) {
            cells[cell] = x;
        }
        for (cell, offset, coeffs) in &self.dependent {
            let x = offset - coeffs.iter().zip(point).map(|(a, b)| a * b).sum::<f64>();
            if x < -1e-12 {
                return None;
            }
            cells[*cell] = x.max(0.0);
        }
        let mut value = 0.0;
        for (&p, &qc) in cells.iter().zip(q.probs()) {
            if p > 0.0 {
                value += p * (p / qc).ln();
            }
        }
        Some(value)
    }
}

/// Theoretical exponent together with the minimizing distribution (when the
/// exponent is a constrained minimization).
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentReport {
    pub class: ChannelClass,
    pub value: f64,
    /// Minimizer over the axes that enter the exponent: `(U1, U2, V)` for
    /// sparse channels, `(V, U1)` / `(V, U2)` for the mixed classes, `V` only
    /// (as a one-axis joint) for fully connected ones.
    pub minimizer: JointPmf,
}

/// Three-marginal exponent on `Q_{U1 U2 V}`.
pub fn sparse_exponent(
    p: &JointPmf,
    q: &JointPmf,
    opts: IpfOptions,
) -> Result<IProjectionResult, ExponentError> {
    let constraints = MarginalConstraintSet::new(
        (0..3)
            .map(|axis| Ok((axis, p.marginal(axis)?)))
            .collect::<Result<_, ProbError>>()?,
    )?;
    min_kl_fixed_marginals(q, &constraints, opts)
}

/// Two-marginal exponent on `Q_{V, U_sensor}` (`sensor_axis` is 0 for U1, 1
/// for U2).
pub fn mixed_exponent(
    p: &JointPmf,
    q: &JointPmf,
    sensor_axis: usize,
    opts: IpfOptions,
) -> Result<IProjectionResult, ExponentError> {
    let q_pair = q.marginal_joint(&[2, sensor_axis])?;
    let constraints = MarginalConstraintSet::new(vec![
        (0, p.marginal(2)?),
        (1, p.marginal(sensor_axis)?),
    ])?;
    min_kl_fixed_marginals(&q_pair, &constraints, opts)
}

/// Dispatches a channel class to its optimal exponent.
pub fn class_exponent(
    class: ChannelClass,
    p: &JointPmf,
    q: &JointPmf,
    opts: IpfOptions,
) -> Result<ExponentReport, ExponentError> {
    // Surfaces the offending cell before any minimization runs.
    kl_divergence(p, q)?;
    let (value, minimizer) = match class {
        ChannelClass::Full => {
            let pv = p.marginal(2)?;
            let value = local_stein_exponent(&pv, &q.marginal(2)?)?;
            let dims = vec![pv.alphabet_size()];
            (value, JointPmf::new(dims, pv.probs().to_vec())?)
        }
        ChannelClass::Sparse => {
            let r = sparse_exponent(p, q, opts)?;
            (r.value, r.argmin)
        }
        ChannelClass::SparseFull => {
            let r = mixed_exponent(p, q, 0, opts)?;
            (r.value, r.argmin)
        }
        ChannelClass::FullSparse => {
            let r = mixed_exponent(p, q, 1, opts)?;
            (r.value, r.argmin)
        }
    };
    Ok(ExponentReport {
        class,
        value,
        minimizer,
    })
}
