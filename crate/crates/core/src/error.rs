use thiserror::Error;

/// Errors raised by the solvers, bound constructors and data pipeline.
#[derive(Debug, Clone, Error)]
pub enum KellyError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The exhaustive solver was asked for more bets than it can enumerate.
    #[error("capacity error: {n} bets exceeds the enumeration cap of {cap}")]
    Capacity { n: usize, cap: usize },

    /// An iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        last_theta: Vec<f64>,
        last_f: f64,
    },

    /// The quadrature grid could not be refined to the requested accuracy.
    #[error("quadrature did not reach {tolerance:e} after refining to M={m} (last change {change:e})")]
    Quadrature { m: usize, change: f64, tolerance: f64 },

    /// Invalid experiment or generator configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),

    /// A bound subproblem failed; `indices` names the bets it contained.
    #[error("subproblem on bets {indices:?} failed: {source}")]
    Subproblem { indices: Vec<usize>, source: Box<KellyError> },

    /// Curve fitting failed.
    #[error("fit error: {0}")]
    Fit(String),

    /// Parameter-model training failed.
    #[error("training error: {0}")]
    Training(String),
}

impl KellyError {
    /// The underlying error once subproblem context is peeled off.
    pub fn root(&self) -> &KellyError {
        match self {
            KellyError::Subproblem { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, KellyError>;
