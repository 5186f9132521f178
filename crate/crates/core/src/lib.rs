//! Stein-exponents of two-sensor distributed hypothesis testing over
//! memoryless multiple-access channels whose input cost budgets grow
//! sublinearly in the blocklength.
//!
//! - [`prob`]: pmfs, joint pmfs, KL divergence, types and strong typicality.
//! - [`exponents`]: the local exponent and marginal-constrained I-projections.
//! - [`channels`]: discrete MACs and their connectivity classes, cost
//!   budgets, and the additive generalized-Gaussian MAC.
//! - [`schemes`]: local and marker-symbol encoders/deciders, derandomization.
//! - [`simulator`]: Monte-Carlo, exact and importance-sampling error estimates.
//! - [`cli`]: file formats and the subcommands of the `stein-mac` binary.

pub mod channels;
pub mod cli;
pub mod exponents;
pub mod prob;
pub mod schemes;
pub mod simulator;
