use crate::error::{KellyError, Result};
use crate::math::softmax;
use crate::newton::{self, LogitObjective};
use crate::solver::SolveResult;
use crate::types::{Bet, Logits, Portfolio};

use super::eval::{eval_f_itm, min_positive_c, TransformState};
use super::grid::{build_grid, refine_grid, GridOptions, QuadratureGrid};
use super::{ItmSolveResult, QuadratureDiagnostics, TransformOptions};

fn grid_at(p: &Portfolio, bets: &[Bet], opts: &GridOptions, h: f64) -> QuadratureGrid {
    let mut o = opts.clone();
    o.h = h;
    build_grid(p.w0, min_positive_c(p, bets), &o)
}

/// Objective value on a grid refined until two halvings agree.
pub fn eval_f_itm_adaptive(
    portfolio: &Portfolio,
    bets: &[Bet],
    opts: &TransformOptions,
) -> Result<(f64, QuadratureDiagnostics)> {
    let g = &opts.grid;
    let grid = grid_at(portfolio, bets, g, g.h);
    let r = refine_grid(grid, g.refine_tol, g.max_refinements, |grid| eval_f_itm(portfolio, bets, grid))?;
    let diag = QuadratureDiagnostics {
        m: r.grid.m,
        h: r.grid.h,
        nodes: r.grid.len(),
        est_error: r.change,
        refinements: r.history.len() - 1,
    };
    Ok((r.value, diag))
}

struct TransformObjective<'a> {
    bets: &'a [Bet],
    opts: &'a GridOptions,
    h: f64,
    refinements: usize,
    state: Option<TransformState>,
    diag: Option<QuadratureDiagnostics>,
}

impl<'a> TransformObjective<'a> {
    fn portfolio(theta: &[f64]) -> Result<Portfolio> {
        let p = Portfolio::from_simplex(&softmax(theta));
        if p.w0 < 1e-300 {
            return Err(KellyError::Domain("cash weight underflow".into()));
        }
        Ok(p)
    }

    fn grid(&self, p: &Portfolio) -> QuadratureGrid {
        grid_at(p, self.bets, self.opts, self.h)
    }

    /// Halve `h` until the objective at `p` is stable against one more halving.
    fn check_grid(&mut self, p: &Portfolio) -> Result<bool> {
        let start_h = self.h;
        loop {
            let grid = self.grid(p);
            let coarse = eval_f_itm(p, self.bets, &grid)?;
            let fine = eval_f_itm(p, self.bets, &grid.refined())?;
            let change = (fine - coarse).abs();
            if change < self.opts.refine_tol {
                self.diag = Some(QuadratureDiagnostics {
                    m: grid.m,
                    h: grid.h,
                    nodes: grid.len(),
                    est_error: change,
                    refinements: self.refinements,
                });
                return Ok(self.h != start_h);
            }
            if self.refinements >= self.opts.max_refinements {
                return Err(KellyError::Quadrature { m: grid.m, change, tolerance: self.opts.refine_tol });
            }
            self.h /= 2.0;
            self.refinements += 1;
        }
    }
}

impl LogitObjective for TransformObjective<'_> {
    fn dim(&self) -> usize {
        self.bets.len() + 1
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        let p = Self::portfolio(theta)?;
        eval_f_itm(&p, self.bets, &self.grid(&p))
    }

    fn evaluate(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = Self::portfolio(theta)?;
        let grid = self.grid(&p);
        let state = TransformState::new(&p, self.bets, &grid)?;
        let out = (state.f, state.logit_gradient());
        self.state = Some(state);
        Ok(out)
    }

    fn hvp(&self, v: &[f64]) -> Vec<f64> {
        self.state.as_ref().expect("hvp before evaluate").logit_hvp(v)
    }

    fn hess_diag(&self) -> Option<Vec<f64>> {
        self.state.as_ref().map(|s| s.logit_hess_diag())
    }

    fn on_converged(&mut self, theta: &[f64]) -> Result<bool> {
        let p = Self::portfolio(theta)?;
        self.check_grid(&p)
    }
}

pub fn solve_itm(bets: &[Bet], opts: &TransformOptions) -> Result<ItmSolveResult> {
    solve_itm_from(bets, opts, None)
}

/// As [`solve_itm`], starting from `start` instead of uniform logits.
pub fn solve_itm_from(bets: &[Bet], opts: &TransformOptions, start: Option<&Portfolio>) -> Result<ItmSolveResult> {
    if bets.is_empty() {
        return Err(KellyError::Input("no bets to optimize".into()));
    }
    if let Some(i) = bets.iter().position(|b| !b.has_edge()) {
        return Err(KellyError::Domain(format!("bet {i} has no positive edge")));
    }
    let theta0 = match start {
        Some(p) => Logits::from_portfolio(p)?.theta,
        None => Logits::uniform(bets.len()).theta,
    };
    let mut obj = TransformObjective {
        bets,
        opts: &opts.grid,
        h: opts.grid.h,
        refinements: 0,
        state: None,
        diag: None,
    };
    let out = newton::maximize_guarded(&mut obj, &theta0, &Logits::uniform(bets.len()).theta, &opts.newton)?;
    if !out.converged {
        return Err(KellyError::NonConvergence {
            iterations: out.iterations,
            grad_norm: out.grad_norm,
            last_theta: out.theta,
            last_f: out.f,
        });
    }
    let portfolio = Portfolio::from_simplex(&softmax(&out.theta));
    if obj.diag.is_none() {
        obj.check_grid(&portfolio)?;
    }
    let f_star = eval_f_itm(&portfolio, bets, &obj.grid(&portfolio))?;
    Ok(ItmSolveResult {
        result: SolveResult {
            f_star,
            portfolio,
            iterations: out.iterations,
            converged: true,
            grad_norm: out.grad_norm,
        },
        quadrature: obj.diag.expect("grid checked"),
    })
}
