//! Kelly portfolio optimization over many independent binary bets.
//!
//! Two solvers share one damped Newton–CG driver in softmax-logit space:
//! [`exhaustive`] enumerates all `2^N` outcomes and serves as the oracle for
//! small `N`, while [`transform`] evaluates expected log wealth as a
//! one-dimensional integral and scales to hundreds of bets.

pub mod bounds;
pub mod datagen;
pub mod error;
pub mod exhaustive;
pub mod kelly;
pub mod math;
pub mod newton;
pub mod par;
pub mod scaling;
pub mod simplex;
pub mod solver;
pub mod transform;
pub mod types;

#[cfg(test)]
mod testutil;

pub use error::{KellyError, Result};
pub use kelly::{bet_from_contract, single_bet_kelly};
pub use solver::{solve, Method, SolveResult, SolverOptions};
pub use types::{Bet, Calibration, Contract, Logits, Portfolio, ProblemInstance, Regime, VarianceLevel};
