use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{KellyError, Result};
use crate::math::{logistic, logit, softplus, softplus_inv};

use super::dataset::{ScalingDataset, ScalingRecord, Split};
use super::features::{FeatureVector, N_FEATURES};
use super::sigmoid::SigmoidParams;

const WIDTH: usize = N_FEATURES + 1;
const N_PARAMS: usize = 3 * WIDTH;

/// Linear predictor for `(ln Q, v', B')` with `v = softplus(v')`, `B = softplus(B')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParamModel {
    /// Intercepts for `ln Q`, `v'`, `B'`.
    pub intercepts: [f64; 3],
    pub coefs: [[f64; N_FEATURES]; 3],
    pub feature_mean: FeatureVector,
    pub feature_scale: FeatureVector,
    pub lambda: f64,
    pub train_loss: f64,
    pub val_mse: f64,
}

impl LinearParamModel {
    pub fn normalize(&self, f: &FeatureVector) -> FeatureVector {
        std::array::from_fn(|j| (f[j] - self.feature_mean[j]) / self.feature_scale[j])
    }

    pub fn predict(&self, f: &FeatureVector) -> SigmoidParams {
        link(&self.raw(&self.normalize(f)))
    }

    fn raw(&self, x: &FeatureVector) -> [f64; 3] {
        std::array::from_fn(|k| self.intercepts[k] + self.coefs[k].iter().zip(x).map(|(b, x)| b * x).sum::<f64>())
    }

    fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(N_PARAMS);
        for k in 0..3 {
            out.push(self.intercepts[k]);
            out.extend_from_slice(&self.coefs[k]);
        }
        out
    }

    fn set_flat(&mut self, theta: &[f64]) {
        for k in 0..3 {
            self.intercepts[k] = theta[k * WIDTH];
            self.coefs[k].copy_from_slice(&theta[k * WIDTH + 1..(k + 1) * WIDTH]);
        }
    }

    pub fn coef_norm2(&self) -> f64 {
        self.coefs.iter().flatten().map(|b| b * b).sum()
    }
}

fn link(raw: &[f64; 3]) -> SigmoidParams {
    SigmoidParams { q: raw[0].exp(), v: softplus(raw[1]), b: softplus(raw[2]) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub lambda_grid: Vec<f64>,
    pub max_iter: usize,
    /// Stop once the relative loss decrease per accepted step falls below this.
    pub tol: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { lambda_grid: vec![0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1], max_iter: 3000, tol: 1e-12 }
    }
}

/// Normalized features and `(logit x, log y)` points for one curve.
struct Sample {
    x: FeatureVector,
    z: Vec<f64>,
    log_y: Vec<f64>,
}

fn samples(model: &LinearParamModel, records: &[&ScalingRecord]) -> Result<Vec<Sample>> {
    records
        .iter()
        .map(|r| {
            if r.curve.is_empty() {
                return Err(KellyError::Training(format!("record {}/{}/N={} #{} has an empty curve", r.regime, r.variance_level, r.n_total, r.index)));
            }
            Ok(Sample {
                x: model.normalize(&r.features),
                z: r.curve.iter().map(|&(x, _)| logit(x)).collect(),
                log_y: r.curve.iter().map(|&(_, y)| y.ln()).collect(),
            })
        })
        .collect()
}

/// Mean over curves of the per-curve `log y` MSE.
fn data_loss_grad(model: &LinearParamModel, data: &[Sample], grad: Option<&mut [f64]>) -> f64 {
    let mut g_local = grad;
    let mut total = 0.0;
    for s in data {
        let raw = model.raw(&s.x);
        let (v, b) = (softplus(raw[1]), softplus(raw[2]));
        let m = s.z.len() as f64;
        let mut loss = 0.0;
        let mut d_raw = [0.0; 3];
        for (&z, &ly) in s.z.iter().zip(&s.log_y) {
            let u = raw[0] - b * z;
            let (sp, sig) = (softplus(u), logistic(u));
            let r = ly + sp / v;
            loss += r * r;
            let d = [-sig / v, sp / (v * v) * logistic(raw[1]), sig * z / v * logistic(raw[2])];
            for k in 0..3 {
                d_raw[k] -= 2.0 * r * d[k] / m;
            }
        }
        total += loss / m;
        if let Some(g) = g_local.as_deref_mut() {
            for k in 0..3 {
                g[k * WIDTH] += d_raw[k];
                for j in 0..N_FEATURES {
                    g[k * WIDTH + 1 + j] += d_raw[k] * s.x[j];
                }
            }
        }
    }
    let n = data.len() as f64;
    if let Some(g) = g_local {
        g.iter_mut().for_each(|x| *x /= n);
    }
    total / n
}

fn objective(model: &LinearParamModel, data: &[Sample], lambda: f64, grad: Option<&mut [f64]>) -> f64 {
    let has_grad = grad.is_some();
    let mut g_buf = grad;
    if let Some(g) = g_buf.as_deref_mut() {
        g.fill(0.0);
    }
    let loss = data_loss_grad(model, data, g_buf.as_deref_mut()) + lambda * model.coef_norm2();
    if has_grad {
        let g = g_buf.unwrap();
        for k in 0..3 {
            for j in 0..N_FEATURES {
                g[k * WIDTH + 1 + j] += 2.0 * lambda * model.coefs[k][j];
            }
        }
    }
    loss
}

fn normalizers(train: &[&ScalingRecord]) -> (FeatureVector, FeatureVector) {
    let n = train.len() as f64;
    let mean: FeatureVector = std::array::from_fn(|j| train.iter().map(|r| r.features[j]).sum::<f64>() / n);
    let scale = std::array::from_fn(|j| {
        let var = train.iter().map(|r| (r.features[j] - mean[j]).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 1e-12 * (1.0 + mean[j].abs()) { sd } else { 1.0 }
    });
    (mean, scale)
}

/// Ridge regression of the per-curve best-fit parameters, used as the starting point.
fn ridge_init(model: &mut LinearParamModel, train: &[&ScalingRecord], data: &[Sample], lambda: f64) -> Result<()> {
    let m = data.len();
    let x = DMatrix::from_fn(m, N_FEATURES, |i, j| data[i].x[j]);
    let mut gram = x.transpose() * &x / m as f64;
    for j in 0..N_FEATURES {
        gram[(j, j)] += lambda.max(1e-10);
    }
    let chol = gram.cholesky().ok_or_else(|| KellyError::Training("ridge Gram matrix is not positive definite".into()))?;
    for k in 0..3 {
        let t = DVector::from_iterator(
            m,
            train.iter().map(|r| {
                let p = r.fit.params;
                match k {
                    0 => p.q.ln(),
                    1 => softplus_inv(p.v),
                    _ => softplus_inv(p.b),
                }
            }),
        );
        let mean = t.mean();
        let centered = t.add_scalar(-mean);
        let beta = chol.solve(&(x.transpose() * centered / m as f64));
        model.intercepts[k] = mean;
        model.coefs[k].copy_from_slice(beta.as_slice());
    }
    Ok(())
}

/// Full-batch gradient descent with step doubling on success and halving on failure.
fn descend(model: &mut LinearParamModel, data: &[Sample], lambda: f64, opts: &TrainOptions) -> Result<f64> {
    let mut grad = vec![0.0; N_PARAMS];
    let mut trial = vec![0.0; N_PARAMS];
    let mut loss = objective(model, data, lambda, Some(&mut grad));
    let mut step = 1.0;
    let mut theta = model.flat();
    let mut probe = model.clone();
    for _ in 0..opts.max_iter {
        if !loss.is_finite() {
            return Err(KellyError::Training(format!("loss became {loss} at lambda {lambda}")));
        }
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if g2 == 0.0 {
            break;
        }
        let mut accepted = false;
        while step > 1e-20 {
            for i in 0..N_PARAMS {
                trial[i] = theta[i] - step * grad[i];
            }
            probe.set_flat(&trial);
            let l = objective(&probe, data, lambda, None);
            if l.is_finite() && l <= loss - 1e-4 * step * g2 {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        theta.copy_from_slice(&trial);
        model.set_flat(&theta);
        let prev = loss;
        loss = objective(model, data, lambda, Some(&mut grad));
        step *= 2.0;
        if prev - loss <= opts.tol * (1.0 + loss) {
            break;
        }
    }
    Ok(loss)
}

fn mse(model: &LinearParamModel, data: &[Sample]) -> f64 {
    data_loss_grad(model, data, None)
}

/// Fit the model on the training split, choosing `λ` by validation MSE.
pub fn train_param_model(dataset: &ScalingDataset, opts: &TrainOptions) -> Result<LinearParamModel> {
    let train = dataset.part(Split::Train);
    let val = dataset.part(Split::Val);
    if train.is_empty() || val.is_empty() {
        return Err(KellyError::Training(format!("need nonempty train and val splits, got {} and {}", train.len(), val.len())));
    }
    if opts.lambda_grid.is_empty() || opts.lambda_grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(KellyError::Config(format!("lambda grid {:?} must be nonempty and nonnegative", opts.lambda_grid)));
    }
    let (feature_mean, feature_scale) = normalizers(&train);
    let blank = LinearParamModel {
        intercepts: [0.0; 3],
        coefs: [[0.0; N_FEATURES]; 3],
        feature_mean,
        feature_scale,
        lambda: 0.0,
        train_loss: f64::NAN,
        val_mse: f64::NAN,
    };
    let train_data = samples(&blank, &train)?;
    let val_data = samples(&blank, &val)?;
    let mut best: Option<LinearParamModel> = None;
    for &lambda in &opts.lambda_grid {
        let mut model = LinearParamModel { lambda, ..blank.clone() };
        ridge_init(&mut model, &train, &train_data, lambda)?;
        model.train_loss = descend(&mut model, &train_data, lambda, opts)?;
        model.val_mse = mse(&model, &val_data);
        if !model.val_mse.is_finite() {
            return Err(KellyError::Training(format!("validation MSE is {} at lambda {lambda}", model.val_mse)));
        }
        log::debug!("lambda {lambda:e}: train loss {:e}, val mse {:e}", model.train_loss, model.val_mse);
        if best.as_ref().is_none_or(|b| model.val_mse < b.val_mse) {
            best = Some(model);
        }
    }
    Ok(best.expect("nonempty lambda grid"))
}
