use std::path::Path;

use kelly_core::solver::{evaluate, solve, Solved};
use kelly_core::transform::QuadratureDiagnostics;
use kelly_core::{Method, Portfolio, SolverOptions};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::files::{load_instance, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub schema_version: u32,
    pub method: Method,
    #[serde(rename = "N")]
    pub n: usize,
    pub f_star: f64,
    pub weights: Portfolio,
    pub leverage: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub grad_norm: f64,
    /// Objective re-evaluated at the returned weights by an independent evaluator.
    pub f_reevaluated: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureDiagnostics>,
}

pub fn run(instance: &Path, method: Method, opts: &SolverOptions) -> Result<SolveOutput> {
    let inst = load_instance(instance)?;
    let Solved { result, method, quadrature } = solve(&inst.bets, method, opts, None)?;
    let f_reevaluated = evaluate(&inst.bets, &result.portfolio, opts)?;
    Ok(SolveOutput {
        schema_version: SCHEMA_VERSION,
        method,
        n: inst.n(),
        f_star: result.f_star,
        leverage: result.leverage(),
        weights: result.portfolio,
        iterations: result.iterations,
        converged: result.converged,
        diagnostics: Diagnostics { grad_norm: result.grad_norm, f_reevaluated, quadrature },
    })
}
