//! Objective, gradient and Hessian-vector product evaluated on a quadrature grid.
//!
//! With `c_i = w_i (b_i + 1)`, `F_i(t) = 1 - p_i + p_i e^{-t c_i}` and
//! `A(t) = Π F_i(t)`, the expected log wealth is
//!
//! ```text
//! f = q0 log w0 + ∫ [(1 - q0) e^{-t} + e^{-t w0} (q0 - A(t))] / t dt
//! ```
//!
//! where `q0 = A(∞)` is the all-loss probability. The `q0 log w0` term carries
//! the ruin singularity in closed form, so every integrand stays bounded.

use crate::error::{KellyError, Result};
use crate::math::KahanSum;
use crate::simplex;
use crate::types::{Bet, Logits, Portfolio};

use super::grid::QuadratureGrid;

/// `log A(t) = Σ log(1 - p_i + p_i e^{-t c_i})`.
pub fn log_a(t: f64, c: &[f64], p: &[f64]) -> f64 {
    c.iter().zip(p).map(|(&ci, &pi)| (pi * (-t * ci).exp_m1()).ln_1p()).sum()
}

/// Laplace transform `E[e^{-t X}] = e^{-t w0} A(t)` of terminal wealth.
pub fn laplace_q(t: f64, w0: f64, c: &[f64], p: &[f64]) -> f64 {
    (-t * w0 + log_a(t, c, p)).exp()
}

/// All-loss probability `Π (1 - p_i)`.
pub fn all_loss_probability(bets: &[Bet]) -> f64 {
    bets.iter().map(|b| (-b.p).ln_1p()).sum::<f64>().exp()
}

struct Inputs {
    w0: f64,
    leverage: f64,
    c: Vec<f64>,
    p: Vec<f64>,
    bp1: Vec<f64>,
    q0: f64,
}

fn inputs(portfolio: &Portfolio, bets: &[Bet]) -> Result<Inputs> {
    if portfolio.n() != bets.len() {
        return Err(KellyError::Input(format!(
            "portfolio has {} weights for {} bets",
            portfolio.n(),
            bets.len()
        )));
    }
    if !(portfolio.w0 > 0.0) || !portfolio.w0.is_finite() {
        return Err(KellyError::Domain(format!("cash weight {} must be positive", portfolio.w0)));
    }
    if portfolio.w.iter().any(|&x| !(x >= 0.0)) {
        return Err(KellyError::Domain("negative bet weight".into()));
    }
    Ok(Inputs {
        w0: portfolio.w0,
        leverage: portfolio.leverage(),
        c: portfolio.c(bets),
        p: bets.iter().map(|b| b.p).collect(),
        bp1: bets.iter().map(|b| b.b + 1.0).collect(),
        q0: all_loss_probability(bets),
    })
}

/// Smallest positive win contribution, used to size the grid.
pub(crate) fn min_positive_c(portfolio: &Portfolio, bets: &[Bet]) -> f64 {
    portfolio
        .c(bets)
        .into_iter()
        .filter(|&c| c > 0.0)
        .fold(f64::INFINITY, f64::min)
        .min(1.0)
}

/// `t · (objective integrand)`, computed without cancellation at small `t`.
#[inline]
fn numerator(t: f64, emw: f64, log_a: f64, inp: &Inputs) -> f64 {
    if log_a > -0.5 {
        // (1 - q0)(e^{-t} - e^{-t w0}) + e^{-t w0}(1 - A)
        emw * ((1.0 - inp.q0) * (-t * inp.leverage).exp_m1() - log_a.exp_m1())
    } else {
        (1.0 - inp.q0) * (-t).exp() + emw * (inp.q0 - log_a.exp())
    }
}

/// Expected log wealth on a fixed grid.
pub fn eval_f_itm(portfolio: &Portfolio, bets: &[Bet], grid: &QuadratureGrid) -> Result<f64> {
    let inp = inputs(portfolio, bets)?;
    Ok(eval_inputs(&inp, grid))
}

fn eval_inputs(inp: &Inputs, grid: &QuadratureGrid) -> f64 {
    let mut acc = KahanSum::new();
    for (&t, &wdt) in grid.nodes.iter().zip(&grid.weights_over_t) {
        let emw = (-t * inp.w0).exp();
        let tail = (-t).exp();
        if emw == 0.0 && tail == 0.0 {
            break;
        }
        let la = log_a(t, &inp.c, &inp.p);
        acc.add(wdt * numerator(t, emw, la, inp));
    }
    if inp.q0 > 0.0 {
        acc.add(inp.q0 * inp.w0.ln());
    }
    acc.value()
}

/// Objective, remainder gradient and the per-node data behind the
/// Hessian-vector product at one portfolio.
///
/// The remainder gradient is `g_rem = ∂f/∂w + q0/w0`; the full Hessian is
/// `H_rem - (q0/w0²) 11ᵀ`.
#[derive(Debug, Clone)]
pub struct TransformState {
    pub w0: f64,
    pub w: Vec<f64>,
    pub q0: f64,
    pub f: f64,
    pub g_rem: Vec<f64>,
    /// Diagonal of `H_rem`.
    pub h_rem_diag: Vec<f64>,
    n: usize,
    /// `W_k t_k e^{-t_k w0}` per retained node.
    wte: Vec<f64>,
    a: Vec<f64>,
    a_minus_q0: Vec<f64>,
    /// `u_ki = p_i (b_i+1) e^{-t c_i} / F_i`, row-major by node.
    pub(crate) u: Vec<f64>,
    /// `d_ki = p_i (1-p_i) (b_i+1)² e^{-t c_i} / F_i²`.
    d: Vec<f64>,
}

impl TransformState {
    pub fn new(portfolio: &Portfolio, bets: &[Bet], grid: &QuadratureGrid) -> Result<Self> {
        let inp = inputs(portfolio, bets)?;
        let n = bets.len();
        let mut f_acc = KahanSum::new();
        let mut g_common = KahanSum::new();
        let mut g_acc = vec![KahanSum::new(); n];
        let mut h_diag = vec![0.0; n];
        let cap = grid.len();
        let mut wte = Vec::with_capacity(cap);
        let mut a_v = Vec::with_capacity(cap);
        let mut amq_v = Vec::with_capacity(cap);
        let mut u = Vec::with_capacity(cap * n);
        let mut d = Vec::with_capacity(cap * n);
        let mut z = vec![0.0; n];
        let mut fi = vec![0.0; n];

        for k in 0..grid.len() {
            let t = grid.nodes[k];
            let emw = (-t * inp.w0).exp();
            if emw == 0.0 {
                // e^{-t} <= e^{-t w0}, so every later node vanishes too.
                break;
            }
            let mut la = 0.0;
            for i in 0..n {
                let em = (-t * inp.c[i]).exp_m1();
                z[i] = 1.0 + em;
                let pe = inp.p[i] * em;
                fi[i] = 1.0 + pe;
                la += pe.ln_1p();
            }
            let a = la.exp();
            let amq = a - inp.q0;
            f_acc.add(grid.weights_over_t[k] * numerator(t, emw, la, &inp));

            let we = grid.weights[k] * emw;
            let wt = we * t;
            g_common.add(-we * amq);
            for i in 0..n {
                let ui = inp.p[i] * inp.bp1[i] * z[i] / fi[i];
                let di = ui * (1.0 - inp.p[i]) * inp.bp1[i] / fi[i];
                g_acc[i].add(we * a * ui);
                h_diag[i] += wt * (a * (ui * (2.0 - ui) - di) - amq);
                u.push(ui);
                d.push(di);
            }
            wte.push(wt);
            a_v.push(a);
            amq_v.push(amq);
        }
        if inp.q0 > 0.0 {
            f_acc.add(inp.q0 * inp.w0.ln());
        }
        let common = g_common.value();
        Ok(Self {
            w0: inp.w0,
            w: portfolio.w.clone(),
            q0: inp.q0,
            f: f_acc.value(),
            g_rem: g_acc.iter().map(|s| s.value() + common).collect(),
            h_rem_diag: h_diag,
            n,
            wte,
            a: a_v,
            a_minus_q0: amq_v,
            u,
            d,
        })
    }

    /// Full bet-space gradient `∂f/∂w`.
    pub fn gradient(&self) -> Vec<f64> {
        let tail = self.q0 / self.w0;
        self.g_rem.iter().map(|g| g - tail).collect()
    }

    /// `H_rem δ`.
    pub fn hvp_rem(&self, delta: &[f64]) -> Vec<f64> {
        let n = self.n;
        let s: f64 = delta.iter().sum();
        let mut y = vec![0.0; n];
        let mut scalar = 0.0;
        for k in 0..self.wte.len() {
            let u = &self.u[k * n..(k + 1) * n];
            let d = &self.d[k * n..(k + 1) * n];
            let sigma: f64 = u.iter().zip(delta).map(|(a, b)| a * b).sum();
            let coef = -self.wte[k];
            let a = self.a[k];
            scalar += coef * (self.a_minus_q0[k] * s - a * sigma);
            let ca = coef * a;
            let shift = sigma - s;
            for i in 0..n {
                y[i] += ca * (u[i] * shift + d[i] * delta[i]);
            }
        }
        for yi in &mut y {
            *yi += scalar;
        }
        y
    }

    /// Full bet-space `H δ`.
    pub fn hvp(&self, delta: &[f64]) -> Vec<f64> {
        let s: f64 = delta.iter().sum();
        let tail = self.q0 / (self.w0 * self.w0) * s;
        self.hvp_rem(delta).into_iter().map(|y| y - tail).collect()
    }

    pub fn logit_gradient(&self) -> Vec<f64> {
        simplex::logit_gradient(self.w0, &self.w, self.q0, &self.g_rem)
    }

    pub fn logit_hess_diag(&self) -> Vec<f64> {
        let hw = self.hvp_rem(&self.w);
        simplex::logit_hess_diag(self.w0, &self.w, self.q0, &self.g_rem, &self.h_rem_diag, &hw)
    }

    pub fn logit_hvp(&self, v: &[f64]) -> Vec<f64> {
        simplex::logit_hvp(self.w0, &self.w, self.q0, &self.g_rem, v, |d| self.hvp_rem(d))
    }
}

/// `∂f/∂w + q0/w0` on a fixed grid.
pub fn grad_rem(portfolio: &Portfolio, bets: &[Bet], grid: &QuadratureGrid) -> Result<Vec<f64>> {
    Ok(TransformState::new(portfolio, bets, grid)?.g_rem)
}

/// Gradient with respect to the logits (length `N+1`, cash first).
pub fn grad_theta(logits: &Logits, bets: &[Bet], grid: &QuadratureGrid) -> Result<Vec<f64>> {
    Ok(TransformState::new(&logits.portfolio(), bets, grid)?.logit_gradient())
}

/// Logit-space Hessian-vector product.
pub fn hvp_theta(logits: &Logits, v: &[f64], bets: &[Bet], grid: &QuadratureGrid) -> Result<Vec<f64>> {
    if v.len() != logits.theta.len() {
        return Err(KellyError::Input("direction length mismatch".into()));
    }
    Ok(TransformState::new(&logits.portfolio(), bets, grid)?.logit_hvp(v))
}
