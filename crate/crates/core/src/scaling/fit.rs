use argmin::core::{CostFunction, Error as ArgminError, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KellyError, Result};
use crate::math::{logistic, logit, softplus};

use super::sigmoid::SigmoidParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: u64,
    pub memory: usize,
    pub grad_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { starts: 5, seed: 0, max_iter: 500, memory: 7, grad_tol: 1e-12 }
    }
}

/// Goodness of fit on `log y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
}

impl FitMetrics {
    pub fn from_log_residuals(log_y: &[f64], log_pred: &[f64]) -> Self {
        let m = log_y.len() as f64;
        let mean = log_y.iter().sum::<f64>() / m;
        let ss_tot: f64 = log_y.iter().map(|l| (l - mean).powi(2)).sum();
        let res: Vec<f64> = log_y.iter().zip(log_pred).map(|(a, b)| a - b).collect();
        let ss_res: f64 = res.iter().map(|r| r * r).sum();
        let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
        Self { mse: ss_res / m, mae: res.iter().map(|r| r.abs()).sum::<f64>() / m, r2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidFit {
    pub params: SigmoidParams,
    pub metrics: FitMetrics,
    /// Loss at each start, then at the returned parameters.
    pub start_losses: Vec<f64>,
    pub loss: f64,
}

/// Mean squared `log y` error in log-parameter coordinates `(ln Q, ln v, ln B)`.
struct LogCurve {
    z: Vec<f64>,
    log_y: Vec<f64>,
}

impl LogCurve {
    fn params(theta: &[f64]) -> SigmoidParams {
        SigmoidParams { q: theta[0].exp(), v: theta[1].exp(), b: theta[2].exp() }
    }

    fn loss_grad(&self, theta: &[f64]) -> (f64, [f64; 3]) {
        let (v, b) = (theta[1].exp(), theta[2].exp());
        let m = self.z.len() as f64;
        let mut loss = 0.0;
        let mut g = [0.0; 3];
        for (&z, &ly) in self.z.iter().zip(&self.log_y) {
            let s = theta[0] - b * z;
            let (sp, sig) = (softplus(s), logistic(s));
            let r = ly + sp / v;
            loss += r * r;
            // d(log ŷ)/dθ for θ = (ln Q, ln v, ln B)
            let d = [-sig / v, sp / v, sig * z * b / v];
            for k in 0..3 {
                g[k] -= 2.0 * r * d[k];
            }
        }
        (loss / m, g.map(|x| x / m))
    }
}

impl CostFunction for LogCurve {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, theta: &Vec<f64>) -> std::result::Result<f64, ArgminError> {
        let l = self.loss_grad(theta).0;
        Ok(if l.is_finite() { l } else { f64::INFINITY })
    }
}

impl Gradient for LogCurve {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;
    fn gradient(&self, theta: &Vec<f64>) -> std::result::Result<Vec<f64>, ArgminError> {
        Ok(self.loss_grad(theta).1.to_vec())
    }
}

/// The multi-start initializations for a given seed.
pub fn start_points(opts: &FitOptions) -> Vec<SigmoidParams> {
    let mut grid = Vec::with_capacity(27);
    for q in [0.5, 1.0, 2.0] {
        for v in [0.5, 1.0, 2.0] {
            for b in [0.5, 1.0, 3.0] {
                grid.push(SigmoidParams { q, v, b });
            }
        }
    }
    grid.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    grid.truncate(opts.starts.clamp(1, grid.len()));
    grid
}

/// Fit the generalized sigmoid to a shortfall curve by L-BFGS on the `log y` MSE.
pub fn fit_sigmoid(curve: &[(f64, f64)], opts: &FitOptions) -> Result<SigmoidFit> {
    if curve.len() < 4 {
        return Err(KellyError::Fit(format!("need at least 4 points, got {}", curve.len())));
    }
    for &(x, y) in curve {
        if !(x > 0.0 && x < 1.0) || !(y > 0.0 && y <= 1.0) {
            return Err(KellyError::Fit(format!("point ({x}, {y}) outside (0,1) x (0,1]")));
        }
    }
    let obj = LogCurve { z: curve.iter().map(|&(x, _)| logit(x)).collect(), log_y: curve.iter().map(|&(_, y)| y.ln()).collect() };
    let mean = obj.log_y.iter().sum::<f64>() / obj.log_y.len() as f64;
    if obj.log_y.iter().all(|&l| (l - mean).abs() <= 1e-15 * (1.0 + mean.abs())) {
        return Err(KellyError::Fit(format!("curve is constant at y = {:.6}; sigmoid parameters are not identified", mean.exp())));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut start_losses = Vec::new();
    let mut failures = Vec::new();
    for s in start_points(opts) {
        let theta0 = vec![s.q.ln(), s.v.ln(), s.b.ln()];
        let l0 = obj.loss_grad(&theta0).0;
        start_losses.push(l0);
        let mut candidate = (l0, theta0.clone());
        match run_lbfgs(&obj, theta0, opts) {
            Ok((l, theta)) if l.is_finite() && l <= l0 => candidate = (l, theta),
            Ok((l, _)) => failures.push(format!("start {s:?} ended at loss {l:e}")),
            Err(e) => failures.push(format!("start {s:?}: {e}")),
        }
        if candidate.0.is_finite() && best.as_ref().is_none_or(|b| candidate.0 < b.0) {
            best = Some(candidate);
        }
    }
    let (loss, theta) = best.ok_or_else(|| KellyError::Fit(format!("all starts diverged: {}", failures.join("; "))))?;
    let params = LogCurve::params(&theta);
    if !(params.q.is_finite() && params.v.is_finite() && params.b.is_finite())
        || !(params.q > 0.0 && params.v > 0.0 && params.b > 0.0)
    {
        return Err(KellyError::Fit(format!("fit left the positive orthant: {params:?}")));
    }
    let pred: Vec<f64> = obj.z.iter().map(|&z| params.log_y_at(z)).collect();
    Ok(SigmoidFit { params, metrics: FitMetrics::from_log_residuals(&obj.log_y, &pred), start_losses, loss })
}

fn run_lbfgs(obj: &LogCurve, theta0: Vec<f64>, opts: &FitOptions) -> std::result::Result<(f64, Vec<f64>), ArgminError> {
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), opts.memory)
        .with_tolerance_grad(opts.grad_tol)?
        .with_tolerance_cost(0.0)?;
    let res = Executor::new(LogCurve { z: obj.z.clone(), log_y: obj.log_y.clone() }, solver)
        .configure(|st| st.param(theta0).max_iters(opts.max_iter))
        .run()?;
    let st = res.state();
    let theta = st.get_best_param().cloned().unwrap_or_default();
    Ok((st.get_best_cost(), theta))
}
