//! Integral-transform evaluation of expected log wealth for many independent
//! bets, and the Newton solver built on it.

mod eval;
mod grid;
mod solver;

use serde::{Deserialize, Serialize};

use crate::newton::NewtonOptions;
use crate::solver::SolveResult;

pub use eval::{
    all_loss_probability, eval_f_itm, grad_rem, grad_theta, hvp_theta, laplace_q, log_a, TransformState,
};
pub use grid::{build_grid, refine_grid, GridOptions, QuadratureGrid, Refined};
pub use solver::{eval_f_itm_adaptive, solve_itm, solve_itm_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformOptions {
    pub grid: GridOptions,
    pub newton: NewtonOptions,
}

impl Default for TransformOptions {
    fn default() -> Self {
        Self { grid: GridOptions::default(), newton: NewtonOptions { grad_tol: 1e-9, ..NewtonOptions::default() } }
    }
}

/// Grid actually used for a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureDiagnostics {
    /// Half-width node count above `u = 0`.
    pub m: usize,
    pub h: f64,
    pub nodes: usize,
    /// Change in the objective under one further halving of `h`.
    pub est_error: f64,
    pub refinements: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItmSolveResult {
    pub result: SolveResult,
    pub quadrature: QuadratureDiagnostics,
}

#[cfg(test)]
mod tests;
