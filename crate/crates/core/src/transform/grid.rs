//! Double-exponential quadrature on `[0, ∞)` via `t = exp(sinh u)`.

use serde::{Deserialize, Serialize};

use crate::error::{KellyError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridOptions {
    /// Trapezoid step in `u`.
    pub h: f64,
    /// Lower end of the `u` range.
    pub u_min: f64,
    /// Upper end of the `u` range before tail extension.
    pub u_max: f64,
    /// The upper end is pushed out until `t_max (w0 + c_min) >= tail_decay`.
    pub tail_decay: f64,
    /// Hard ceiling on the upper end (keeps `t` finite).
    pub u_ceiling: f64,
    /// Two successive refinements must agree this closely on the objective.
    pub refine_tol: f64,
    /// Maximum number of step halvings.
    pub max_refinements: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            h: 0.02,
            u_min: -4.5,
            u_max: 4.0,
            tail_decay: 45.0,
            u_ceiling: 6.5,
            refine_tol: 1e-12,
            max_refinements: 6,
        }
    }
}

/// Trapezoid nodes `u_k = k h` for `k = -lower..=upper`, mapped to `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub h: f64,
    /// Nodes below `u = 0`.
    pub lower: usize,
    /// Nodes above `u = 0`; the half-width `M` of the grid.
    pub m: usize,
    /// `t_k`, strictly increasing.
    pub nodes: Vec<f64>,
    /// `W_k = h ω_k cosh(u_k) t_k` with `ω = 1/2` at both ends.
    pub weights: Vec<f64>,
    /// `W_k / t_k`, for integrands carrying a `1/t` factor.
    pub weights_over_t: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(h: f64, lower: usize, m: usize) -> Self {
        let count = lower + m + 1;
        let mut nodes = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let mut weights_over_t = Vec::with_capacity(count);
        for j in 0..count {
            let u = (j as f64 - lower as f64) * h;
            let omega = if j == 0 || j == count - 1 { 0.5 } else { 1.0 };
            let t = u.sinh().exp();
            let wt = h * omega * u.cosh();
            nodes.push(t);
            weights.push(wt * t);
            weights_over_t.push(wt);
        }
        Self { h, lower, m, nodes, weights, weights_over_t }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Same `u` range at half the step.
    pub fn refined(&self) -> Self {
        Self::new(self.h / 2.0, self.lower * 2, self.m * 2)
    }

    /// `Σ W_k g(t_k)`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * g(t)).sum()
    }
}

/// Grid whose upper end reaches the decay scale `1/(w0 + c_min)`.
pub fn build_grid(w0: f64, c_min: f64, opts: &GridOptions) -> QuadratureGrid {
    let scale = w0 + c_min.max(0.0);
    let mut u_hi = opts.u_max;
    if scale > 0.0 && scale.is_finite() {
        let t_needed = opts.tail_decay / scale;
        if t_needed > 1.0 {
            u_hi = u_hi.max(t_needed.ln().asinh());
        }
    }
    let u_hi = u_hi.min(opts.u_ceiling);
    let m = (u_hi / opts.h).ceil() as usize;
    let lower = (-opts.u_min / opts.h).ceil() as usize;
    QuadratureGrid::new(opts.h, lower, m)
}

/// Result of refining a grid against one integrand.
#[derive(Debug, Clone)]
pub struct Refined {
    pub grid: QuadratureGrid,
    pub value: f64,
    /// Change observed on the final halving.
    pub change: f64,
    /// Absolute change observed at each halving, in order.
    pub history: Vec<f64>,
}

/// Halve `h` until two successive values of `eval` agree within `tol`.
/// Returns the coarser grid of the agreeing pair.
pub fn refine_grid<F>(grid: QuadratureGrid, tol: f64, max_refinements: usize, eval: F) -> Result<Refined>
where
    F: Fn(&QuadratureGrid) -> Result<f64>,
{
    let mut grid = grid;
    let mut value = eval(&grid)?;
    let mut history = Vec::new();
    for _ in 0..max_refinements {
        let finer = grid.refined();
        let next = eval(&finer)?;
        let change = (next - value).abs();
        history.push(change);
        if change < tol {
            return Ok(Refined { grid, value, change, history });
        }
        grid = finer;
        value = next;
    }
    Err(KellyError::Quadrature {
        m: grid.m,
        change: history.last().copied().unwrap_or(f64::NAN),
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_and_weights_are_positive_increasing() {
        let g = build_grid(0.5, 0.1, &GridOptions::default());
        assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
        assert!(g.nodes[0] > 0.0);
        assert!(g.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn integrates_exponential() {
        let g = build_grid(1.0, 1.0, &GridOptions::default());
        let v = g.integrate(|t| (-t).exp());
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn integrates_frullani_log_two() {
        let g = build_grid(1.0, 1.0, &GridOptions::default());
        let v = g.integrate(|t| ((-t).exp() - (-2.0 * t).exp()) / t);
        assert!((v - 2f64.ln()).abs() < 1e-10, "{v}");
    }

    #[test]
    fn default_range() {
        let g = build_grid(1.0, 1.0, &GridOptions::default());
        assert_eq!(g.m, 200);
        assert!((g.h - 0.02).abs() < 1e-15);
    }

    #[test]
    fn tail_extends_for_small_scales() {
        let opts = GridOptions::default();
        let g = build_grid(1e-9, 0.0, &opts);
        assert!(*g.nodes.last().unwrap() * 1e-9 >= opts.tail_decay * 0.99);
        let g = build_grid(1e-300, 0.0, &opts);
        assert!(g.nodes.last().unwrap().is_finite());
    }

    #[test]
    fn refinement_shrinks_changes() {
        let coarse = QuadratureGrid::new(0.4, 12, 10);
        let r = refine_grid(coarse, 1e-12, 8, |g| Ok(g.integrate(|t| (-t).exp() / (1.0 + t)))).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] < w[0]), "{:?}", r.history);
        assert!(r.change < 1e-12);
    }

    #[test]
    fn refinement_cap_is_an_error() {
        let coarse = QuadratureGrid::new(1.0, 2, 2);
        let err = refine_grid(coarse, 1e-30, 1, |g| Ok(g.integrate(|t| (-t).exp()))).unwrap_err();
        assert!(matches!(err, KellyError::Quadrature { .. }));
    }
}
