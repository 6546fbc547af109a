use crate::error::{KellyError, Result};
use crate::math::logit;
use crate::types::ProblemInstance;

pub const N_FEATURES: usize = 14;
pub type FeatureVector = [f64; N_FEATURES];

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "N",
    "log_N",
    "dp_mean",
    "dp_var",
    "dp_log_var",
    "dp_skew",
    "dp_kurt",
    "dp_log_kurt",
    "dl_mean",
    "dl_var",
    "dl_log_var",
    "dl_skew",
    "dl_kurt",
    "dl_log_kurt",
];

const LOG_FLOOR: f64 = 1e-12;

/// Population mean, variance, log variance, skewness, kurtosis and log kurtosis.
fn summary(xs: &[f64]) -> [f64; 6] {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let scale = xs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    // spread at rounding level counts as constant
    if !(m2 > (1e-10 * scale).powi(2)) {
        return [mean, 0.0, LOG_FLOOR.ln(), 0.0, 0.0, LOG_FLOOR.ln()];
    }
    let (skew, kurt) = (m3 / m2.powf(1.5), m4 / (m2 * m2));
    [mean, m2, m2.max(LOG_FLOOR).ln(), skew, kurt, kurt.max(LOG_FLOOR).ln()]
}

/// Summary features of the disagreement between subjective and market probabilities.
pub fn compute_features(instance: &ProblemInstance) -> Result<FeatureVector> {
    let contracts = instance
        .contracts
        .as_ref()
        .ok_or_else(|| KellyError::Input("instance carries no contracts; features need (p, q)".into()))?;
    if contracts.is_empty() {
        return Err(KellyError::Input("instance has no contracts".into()));
    }
    let dp: Vec<f64> = contracts.iter().map(|c| c.p - c.q).collect();
    let dl: Vec<f64> = contracts.iter().map(|c| logit(c.p) - logit(c.q)).collect();
    let n = contracts.len() as f64;
    let mut out = [0.0; N_FEATURES];
    out[0] = n;
    out[1] = n.ln();
    out[2..8].copy_from_slice(&summary(&dp));
    out[8..14].copy_from_slice(&summary(&dl));
    Ok(out)
}
