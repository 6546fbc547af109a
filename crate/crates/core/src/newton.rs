//! Damped Newton–CG ascent in logit space, shared by the exhaustive and the
//! integral-transform solvers.
//!
//! The objective is maximized over softmax logits. Each outer iteration solves
//! `(-H + λI) Δ = ∇f` with conjugate gradients restricted to the subspace
//! orthogonal to the all-ones (gauge) direction, then backtracks along `Δ`
//! until the Armijo condition holds. Logits are re-centred after every step.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::math::{center, dot, norm};

/// A smooth objective over `dim()` logits that can supply Hessian-vector products.
pub trait LogitObjective {
    fn dim(&self) -> usize;

    /// Objective value at `theta` using the current evaluation context.
    fn value(&self, theta: &[f64]) -> Result<f64>;

    /// Objective and logit gradient at `theta`. Caches whatever [`hvp`](Self::hvp) needs.
    fn evaluate(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Hessian-vector product at the most recently evaluated point.
    fn hvp(&self, v: &[f64]) -> Vec<f64>;

    /// Diagonal of the Hessian at the most recently evaluated point, used as a
    /// Jacobi preconditioner. `None` runs plain CG.
    fn hess_diag(&self) -> Option<Vec<f64>> {
        None
    }

    /// Hook run once the gradient test passes. Returning `true` means the
    /// evaluation context changed and the point must be re-evaluated.
    fn on_converged(&mut self, _theta: &[f64]) -> Result<bool> {
        Ok(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    /// Damping floor. Logit curvature scales like `w_k²`, so a floor near
    /// 1e-12 freezes weights around 1e-11 well short of the optimum.
    pub lambda_min: f64,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub cg_rel_tol: f64,
    /// CG iteration cap; `None` means `dim()`.
    pub cg_max_iter: Option<usize>,
    /// How many times damping may be raised within one outer iteration.
    pub retry_budget: usize,
    pub f_tol: f64,
    /// Largest change of any single logit in one step. Without it a first
    /// step can leap to near-pure cash, where softmax gradients vanish.
    pub max_step: f64,
    /// Once the gradient test passes, steps continue while the predicted
    /// gain `gᵀΔ` exceeds `decrement_tol · (1 + |f|)`.
    pub decrement_tol: f64,
    /// Convergence also needs the simplex duality gap `max_k ∂f/∂w_k - wᵀ∇f`,
    /// an upper bound on the suboptimality, below `gap_tol · (1 + |f|)`.
    /// Tiny weights make the logit gradient vanish long before that.
    pub gap_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            max_iter: 500,
            lambda_init: 1e-6,
            lambda_factor: 10.0,
            lambda_min: 1e-16,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            cg_rel_tol: 1e-8,
            cg_max_iter: None,
            retry_budget: 24,
            f_tol: 1e-14,
            max_step: 4.0,
            decrement_tol: 1e-13,
            gap_tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub theta: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

enum CgFailure {
    NegativeCurvature,
}

/// Solve `(-H + λI) x = g` on the zero-sum subspace.
fn damped_cg<O: LogitObjective + ?Sized>(
    obj: &O,
    g: &[f64],
    lambda: f64,
    rel_tol: f64,
    max_iter: usize,
) -> std::result::Result<Vec<f64>, CgFailure> {
    let n = g.len();
    let mut x = vec![0.0; n];
    let mut r = g.to_vec();
    center(&mut r);
    let g_norm = norm(&r);
    if g_norm == 0.0 {
        return Ok(x);
    }
    // Jacobi preconditioner for -H + λI; logit curvatures scale like w_k².
    let m_inv: Vec<f64> = match obj.hess_diag() {
        Some(d) => d.iter().map(|&h| 1.0 / ((-h).max(0.0) + lambda)).collect(),
        None => vec![1.0; n],
    };
    let precondition = |r: &[f64]| {
        let mut z: Vec<f64> = r.iter().zip(&m_inv).map(|(a, b)| a * b).collect();
        center(&mut z);
        z
    };
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let hp = obj.hvp(&p);
        let mut ap: Vec<f64> = hp.iter().zip(&p).map(|(h, pi)| -h + lambda * pi).collect();
        center(&mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(CgFailure::NegativeCurvature);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= rel_tol * g_norm {
            break;
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
    }
    center(&mut x);
    Ok(x)
}

fn projected(g: &[f64]) -> Vec<f64> {
    let mut gp = g.to_vec();
    center(&mut gp);
    gp
}

/// Largest `∂f/∂w_k - wᵀ∇f`, recovered from the logit gradient
/// `g_k = w_k (∂f/∂w_k - wᵀ∇f)`, and where it occurs.
fn simplex_gap(theta: &[f64], g: &[f64]) -> (f64, usize) {
    let w = crate::math::softmax(theta);
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, (&gk, &wk)) in g.iter().zip(&w).enumerate() {
        if wk > 0.0 && gk / wk > best.0 {
            best = (gk / wk, k);
        }
    }
    best
}

/// Move weight `gamma` towards vertex `k`: `w ← (1 - γ) w + γ e_k` in logits.
fn towards_vertex(theta: &[f64], k: usize, gamma: f64) -> Vec<f64> {
    let w = crate::math::softmax(theta);
    let mut out: Vec<f64> = w.iter().map(|x| ((1.0 - gamma) * x).ln()).collect();
    out[k] = ((1.0 - gamma) * w[k] + gamma).ln();
    center(&mut out);
    out
}

/// A conditional-gradient step towards the worst vertex when the simplex gap
/// exceeds its tolerance. Backtracks from half the simplex: at small steps the
/// gain is nearly linear, so a real gap shows up as at least half the
/// predicted gain, while a gap that is noise in the gradient of a tiny weight
/// does not. Near a vanishing weight with a log barrier the gain is far from
/// linear, so failing that the best trial is taken if it clears rounding.
fn gap_step<O: LogitObjective + ?Sized>(obj: &O, theta: &[f64], f: f64, g: &[f64], opts: &NewtonOptions) -> Option<Vec<f64>> {
    let (gap, k) = simplex_gap(theta, g);
    if !(gap > opts.gap_tol * (1.0 + f.abs())) {
        return None;
    }
    let band = 64.0 * f64::EPSILON * (1.0 + f.abs());
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut gamma = 0.5;
    while 0.5 * gamma * gap > band {
        let trial = towards_vertex(theta, k, gamma);
        if let Ok(ft) = obj.value(&trial) {
            if ft.is_finite() {
                if ft - f >= 0.5 * gamma * gap {
                    return Some(trial);
                }
                if ft - f > band && best.as_ref().is_none_or(|(b, _)| ft > *b) {
                    best = Some((ft, trial));
                }
            }
        }
        gamma *= 0.1;
    }
    best.map(|(_, t)| t)
}

/// True when some bet logit (index ≥ 1) has collapsed to a negligible weight.
/// Positive-edge bets always carry weight at the optimum, so such a point is
/// a softmax plateau rather than a solution.
pub fn collapsed(theta: &[f64]) -> bool {
    crate::math::softmax(theta)[1..].iter().any(|&w| w < 1e-20)
}

/// [`maximize`], restarting from `fallback` with a short step cap when the
/// result has [`collapsed`].
pub fn maximize_guarded<O: LogitObjective + ?Sized>(
    obj: &mut O,
    theta0: &[f64],
    fallback: &[f64],
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    let out = maximize(obj, theta0, opts)?;
    if !collapsed(&out.theta) {
        return Ok(out);
    }
    let cautious = NewtonOptions { max_step: opts.max_step.min(1.0), ..opts.clone() };
    maximize(obj, fallback, &cautious)
}

/// Maximize `obj` starting from `theta0`.
pub fn maximize<O: LogitObjective + ?Sized>(
    obj: &mut O,
    theta0: &[f64],
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    let dim = obj.dim();
    let cg_max = opts.cg_max_iter.unwrap_or(dim).max(1);
    let mut theta = theta0.to_vec();
    center(&mut theta);
    let (mut f, mut g) = obj.evaluate(&theta)?;
    let mut lambda = opts.lambda_init;
    let eps = f64::EPSILON;

    let mut iterations = 0;
    loop {
        let gp = projected(&g);
        let gnorm = norm(&gp);
        let mut pending = None;
        if gnorm < opts.grad_tol {
            // Near-linear directions (a tiny cash weight) can leave the
            // gradient small while the objective is still short of optimal.
            let done = iterations >= opts.max_iter
                || match damped_cg(obj, &gp, lambda, opts.cg_rel_tol, cg_max) {
                    Ok(d) if dot(&gp, &d) > opts.decrement_tol * (1.0 + f.abs()) => {
                        pending = Some(d);
                        false
                    }
                    Ok(_) => true,
                    // Undecided at this damping; the step search raises it.
                    Err(CgFailure::NegativeCurvature) => false,
                };
            if done && iterations < opts.max_iter {
                if let Some(trial) = gap_step(obj, &theta, f, &g, opts) {
                    iterations += 1;
                    theta = trial;
                    (f, g) = obj.evaluate(&theta)?;
                    continue;
                }
            }
            if done {
                if obj.on_converged(&theta)? {
                    let (f2, g2) = obj.evaluate(&theta)?;
                    f = f2;
                    g = g2;
                    if norm(&projected(&g)) >= opts.grad_tol && iterations < opts.max_iter {
                        continue;
                    }
                }
                let gnorm = norm(&projected(&g));
                return Ok(NewtonOutcome {
                    theta,
                    f,
                    grad: g,
                    grad_norm: gnorm,
                    iterations,
                    converged: gnorm < opts.grad_tol,
                });
            }
        }
        if iterations >= opts.max_iter {
            return Ok(NewtonOutcome {
                theta,
                f,
                grad: g,
                grad_norm: gnorm,
                iterations,
                converged: false,
            });
        }
        iterations += 1;

        // Search for an acceptable damped Newton step.
        let mut accepted: Option<(Vec<f64>, f64, f64)> = None;
        for _ in 0..opts.retry_budget {
            let found = match pending.take() {
                Some(d) => Ok(d),
                None => damped_cg(obj, &gp, lambda, opts.cg_rel_tol, cg_max),
            };
            let mut dir = match found {
                Ok(d) => d,
                Err(CgFailure::NegativeCurvature) => {
                    lambda *= opts.lambda_factor;
                    continue;
                }
            };
            let biggest = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            if biggest > opts.max_step {
                let scale = opts.max_step / biggest;
                dir.iter_mut().for_each(|d| *d *= scale);
            }
            let slope = dot(&gp, &dir);
            if !(slope > 0.0) {
                lambda *= opts.lambda_factor;
                continue;
            }
            // Below this the expected gain is lost in the rounding of `f`.
            let flat = slope <= 64.0 * eps * (1.0 + f.abs());
            let mut alpha = 1.0;
            for _ in 0..opts.max_backtracks {
                let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + alpha * d).collect();
                if let Ok(ft) = obj.value(&trial) {
                    let ok = if flat {
                        ft >= f - 64.0 * eps * (1.0 + f.abs())
                    } else {
                        ft >= f + opts.armijo_c1 * alpha * slope
                    };
                    if ft.is_finite() && ok {
                        accepted = Some((trial, ft, alpha));
                        break;
                    }
                }
                alpha *= opts.backtrack;
            }
            if accepted.is_some() {
                break;
            }
            lambda *= opts.lambda_factor;
        }

        let Some((mut trial, ft, alpha)) = accepted else {
            if let Some(trial) = gap_step(obj, &theta, f, &g, opts) {
                theta = trial;
                (f, g) = obj.evaluate(&theta)?;
                continue;
            }
            // No ascent direction survives: the iterate is as good as the
            // arithmetic allows.
            return Ok(NewtonOutcome {
                theta,
                f,
                grad: g,
                grad_norm: gnorm,
                iterations,
                converged: gnorm < opts.grad_tol,
            });
        };
        center(&mut trial);
        let step_norm = alpha * norm(&trial.iter().zip(&theta).map(|(a, b)| a - b).collect::<Vec<_>>());
        theta = trial;
        let f_prev = f;
        let (f_new, g_new) = obj.evaluate(&theta)?;
        let _ = ft;
        f = f_new;
        g = g_new;
        lambda = (lambda / opts.lambda_factor).max(opts.lambda_min);

        if step_norm < 1e-14 && (f - f_prev).abs() < opts.f_tol {
            if let Some(trial) = gap_step(obj, &theta, f, &g, opts) {
                theta = trial;
                (f, g) = obj.evaluate(&theta)?;
                continue;
            }
            let gnorm = norm(&projected(&g));
            return Ok(NewtonOutcome {
                theta,
                f,
                grad: g,
                grad_norm: gnorm,
                iterations,
                converged: gnorm < opts.grad_tol,
            });
        }
    }
}
