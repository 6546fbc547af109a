use serde::{Deserialize, Serialize};

use crate::error::{KellyError, Result};
use crate::math::{logistic, logit, softplus};

/// Generalized sigmoid `y = (1 + Q e^{-B z})^{-1/v}` in `z = logit(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidParams {
    #[serde(rename = "Q")]
    pub q: f64,
    pub v: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

impl SigmoidParams {
    pub fn new(q: f64, v: f64, b: f64) -> Result<Self> {
        if !(q > 0.0 && v > 0.0 && b > 0.0) || !(q.is_finite() && v.is_finite() && b.is_finite()) {
            return Err(KellyError::Domain(format!("sigmoid parameters must be positive, got Q={q}, v={v}, B={b}")));
        }
        Ok(Self { q, v, b })
    }

    /// `log y` at `z`, computed as `-softplus(ln Q - B z) / v`.
    pub fn log_y_at(&self, z: f64) -> f64 {
        -softplus(self.q.ln() - self.b * z) / self.v
    }
}

fn check_x(x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(KellyError::Domain(format!("relative size {x} outside (0, 1)")))
    }
}

pub fn sigmoid_eval(x: f64, params: &SigmoidParams) -> Result<f64> {
    Ok(log_sigmoid_eval(x, params)?.exp())
}

pub fn log_sigmoid_eval(x: f64, params: &SigmoidParams) -> Result<f64> {
    check_x(x)?;
    Ok(params.log_y_at(logit(x)))
}

/// Map a curve onto collapsed coordinates `(B logit(x) - ln Q, y^v)`.
/// Exact sigmoid curves land on the standard logistic.
pub fn collapse_transform(curve: &[(f64, f64)], params: &SigmoidParams) -> Result<Vec<(f64, f64)>> {
    curve
        .iter()
        .map(|&(x, y)| {
            check_x(x)?;
            Ok((params.b * logit(x) - params.q.ln(), y.powf(params.v)))
        })
        .collect()
}

/// Absolute deviations of a collapsed curve from the standard logistic.
pub fn collapse_deviations(collapsed: &[(f64, f64)]) -> Vec<f64> {
    collapsed.iter().map(|&(z, yt)| (yt - logistic(z)).abs()).collect()
}
