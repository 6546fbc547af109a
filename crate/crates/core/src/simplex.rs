//! Chain rule from bet-weight space to softmax logits, written in the
//! tail-subtracted form that never materializes the `q0 / w0` terms.
//!
//! Inputs are the cash weight `w0`, bet weights `w`, all-loss probability `q0`
//! and the remainder gradient `g_rem = ∂f/∂w + q0/w0`. The Hessian-vector part
//! takes the remainder Hessian `H_rem = H + (q0/w0²)·11ᵀ` as a closure.

use crate::math::dot;

/// Logit gradient (length `N+1`, index 0 = cash).
pub fn logit_gradient(w0: f64, w: &[f64], q0: f64, g_rem: &[f64]) -> Vec<f64> {
    let m_hat = dot(w, g_rem);
    let leverage: f64 = w.iter().sum();
    let mut out = Vec::with_capacity(w.len() + 1);
    out.push(q0 * leverage - w0 * m_hat);
    out.extend(w.iter().zip(g_rem).map(|(wi, gi)| wi * (gi - (m_hat + q0))));
    out
}

/// `δw = J v` for the softmax Jacobian `J = diag(w) - w wᵀ` over cash + bets.
pub fn softmax_jvp(w0: f64, w: &[f64], v: &[f64]) -> Vec<f64> {
    let wv = w0 * v[0] + dot(w, &v[1..]);
    let mut out = Vec::with_capacity(v.len());
    out.push(w0 * (v[0] - wv));
    out.extend(w.iter().zip(&v[1..]).map(|(wi, vi)| wi * (vi - wv)));
    out
}

/// Logit Hessian-vector product `H^(θ) v`.
pub fn logit_hvp<F>(w0: f64, w: &[f64], q0: f64, g_rem: &[f64], v: &[f64], h_rem: F) -> Vec<f64>
where
    F: FnOnce(&[f64]) -> Vec<f64>,
{
    let wv = w0 * v[0] + dot(w, &v[1..]);
    // δw_0 = w0·κ and Σ_i δw_i = -w0·κ.
    let kappa = v[0] - wv;
    let delta: Vec<f64> = w.iter().zip(&v[1..]).map(|(wi, vi)| wi * (vi - wv)).collect();
    let y_rem = h_rem(&delta);
    let wy = dot(w, &y_rem);
    let m_hat = dot(w, g_rem);
    let rho = q0 * kappa + dot(&delta, g_rem);

    let mut out = Vec::with_capacity(v.len());
    out.push(-w0 * (wy + kappa * m_hat + rho));
    for i in 0..w.len() {
        out.push(
            w[i] * (y_rem[i] - wy) + w[i] * (q0 * kappa - rho) + delta[i] * (g_rem[i] - q0 - m_hat),
        );
    }
    out
}

/// Diagonal of the logit Hessian, from the remainder-Hessian diagonal and
/// `H_rem w`. Used to precondition CG.
pub fn logit_hess_diag(w0: f64, w: &[f64], q0: f64, g_rem: &[f64], h_rem_diag: &[f64], h_rem_w: &[f64]) -> Vec<f64> {
    let gamma = logit_gradient(w0, w, q0, g_rem);
    let leverage: f64 = w.iter().sum();
    let whw = dot(w, h_rem_w);
    let mut out = Vec::with_capacity(w.len() + 1);
    out.push(w0 * w0 * whw - q0 * leverage * leverage + gamma[0] * (1.0 - 2.0 * w0));
    for i in 0..w.len() {
        let curv = h_rem_diag[i] - 2.0 * h_rem_w[i] + whw - q0;
        out.push(w[i] * w[i] * curv + gamma[i + 1] * (1.0 - 2.0 * w[i]));
    }
    out
}
