//! Solver results and the method switch used by the bound constructors and CLI.

use serde::{Deserialize, Serialize};

use crate::error::{KellyError, Result};
use crate::exhaustive::{self, ExhaustiveOptions};
use crate::transform::{self, QuadratureDiagnostics, TransformOptions};
use crate::types::{Bet, Portfolio};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    /// Optimal expected log wealth in nats.
    pub f_star: f64,
    pub portfolio: Portfolio,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

impl SolveResult {
    pub fn leverage(&self) -> f64 {
        self.portfolio.leverage()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exhaustive,
    Itm,
    /// Exhaustive up to `auto_threshold` bets, transform beyond.
    Auto,
}

impl std::str::FromStr for Method {
    type Err = KellyError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Method::Exhaustive),
            "itm" | "transform" => Ok(Method::Itm),
            "auto" => Ok(Method::Auto),
            _ => Err(KellyError::Input(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub exhaustive: ExhaustiveOptions,
    pub transform: TransformOptions,
    pub auto_threshold: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            exhaustive: ExhaustiveOptions::default(),
            transform: TransformOptions::default(),
            auto_threshold: 12,
        }
    }
}

/// Outcome of [`solve`], with quadrature diagnostics when the transform ran.
#[derive(Debug, Clone, PartialEq)]
pub struct Solved {
    pub result: SolveResult,
    pub method: Method,
    pub quadrature: Option<QuadratureDiagnostics>,
}

impl SolverOptions {
    pub fn resolve(&self, method: Method, n: usize) -> Method {
        match method {
            Method::Auto if n <= self.auto_threshold => Method::Exhaustive,
            Method::Auto => Method::Itm,
            m => m,
        }
    }
}

/// Solve with the requested method, optionally warm-started from `start`.
pub fn solve(bets: &[Bet], method: Method, opts: &SolverOptions, start: Option<&Portfolio>) -> Result<Solved> {
    match opts.resolve(method, bets.len()) {
        Method::Exhaustive => {
            let result = exhaustive::solve_exhaustive_from(bets, &opts.exhaustive, start)?;
            Ok(Solved { result, method: Method::Exhaustive, quadrature: None })
        }
        _ => {
            let r = transform::solve_itm_from(bets, &opts.transform, start)?;
            Ok(Solved { result: r.result, method: Method::Itm, quadrature: Some(r.quadrature) })
        }
    }
}

/// Re-evaluate a portfolio's expected log wealth independently of the solver.
pub fn evaluate(bets: &[Bet], portfolio: &Portfolio, opts: &SolverOptions) -> Result<f64> {
    if bets.len() <= opts.auto_threshold {
        let table = exhaustive::enumerate_scenarios(bets, opts.exhaustive.cap)?;
        exhaustive::eval_f_exhaustive(&table, portfolio)
    } else {
        transform::eval_f_itm_adaptive(portfolio, bets, &opts.transform).map(|(f, _)| f)
    }
}
