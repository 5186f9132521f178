//! Channel models: discrete memoryless MACs and their connectivity classes,
//! input cost budgets, and the additive generalized-Gaussian MAC.

mod cost;
mod dmmac;
mod gaussian;

pub use cost::{admissible, cost_budget, BudgetLaw, CostBudget, CostModel};
pub use dmmac::{ChannelClass, Dmmac, MarkerSet, Sensor, ToggleWitness};
pub use gaussian::{
    gg_channel_output, gg_constant, gg_dn_tail, gg_dn_tail_with_inputs, gg_log_density,
    gg_log_ratio, gg_ratio_bound, gg_sample, gg_weak_law_tail, GgMac, GgRatioBound,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("kernel dimensions must be positive, got {0:?}")]
    BadDims([usize; 3]),
    #[error("kernel has {got} entries, expected {expected}")]
    WrongSize { expected: usize, got: usize },
    #[error("row (x1={x1}, x2={x2}) is not a pmf (sum {sum})")]
    BadRow { x1: usize, x2: usize, sum: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("every output is unreachable")]
    EmptyOutputAlphabet,
    #[error("a fully connected channel has no marker symbols")]
    NoMarkers,
    #[error("cost model: {0}")]
    BadCostModel(String),
    #[error("blocklength {n} too small: k = {k}, need k >= 1 and 2k < n")]
    BlocklengthTooSmall { n: usize, k: usize },
    #[error("generalized-Gaussian parameters: {0}")]
    BadGgParams(String),
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}
