//! Brute-force reference: enumerate all `2^N` joint outcomes.

use serde::{Deserialize, Serialize};

use crate::error::{KellyError, Result};
use crate::math::{softmax, KahanSum};
use crate::newton::{self, LogitObjective, NewtonOptions};
use crate::par;
use crate::simplex;
use crate::solver::SolveResult;
use crate::types::{Bet, Logits, Portfolio};

pub const DEFAULT_CAP: usize = 24;

/// Rows per deterministic reduction chunk.
const CHUNK: usize = 1 << 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExhaustiveOptions {
    pub cap: usize,
    pub newton: NewtonOptions,
}

impl Default for ExhaustiveOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            newton: NewtonOptions { grad_tol: 1e-10, ..NewtonOptions::default() },
        }
    }
}

/// All joint outcomes of `N` independent bets. Bit `i` of row index `k` set
/// means bet `i` wins in scenario `k`; returns are generated on demand.
#[derive(Debug, Clone)]
pub struct ScenarioTable {
    bets: Vec<Bet>,
    prob: Vec<f64>,
}

impl ScenarioTable {
    pub fn n_bets(&self) -> usize {
        self.bets.len()
    }

    pub fn n_scenarios(&self) -> usize {
        self.prob.len()
    }

    pub fn bets(&self) -> &[Bet] {
        &self.bets
    }

    pub fn prob(&self) -> &[f64] {
        &self.prob
    }

    #[inline]
    pub fn wins(&self, k: usize, i: usize) -> bool {
        (k >> i) & 1 == 1
    }

    /// Net return of each bet in scenario `k`: `b_i` on a win, `-1` on a loss.
    pub fn returns_row(&self, k: usize) -> Vec<f64> {
        (0..self.n_bets()).map(|i| self.net_return(k, i)).collect()
    }

    #[inline]
    fn net_return(&self, k: usize, i: usize) -> f64 {
        if self.wins(k, i) {
            self.bets[i].b
        } else {
            -1.0
        }
    }

    /// Wealth multiplier `X_k = w0 + Σ_{i wins} c_i` for every scenario.
    pub fn wealth(&self, portfolio: &Portfolio) -> Vec<f64> {
        let c = portfolio.c(&self.bets);
        let mut x = vec![0.0; self.n_scenarios()];
        x[0] = portfolio.w0;
        for (i, ci) in c.iter().enumerate() {
            let half = 1usize << i;
            for k in 0..half {
                x[k | half] = x[k] + ci;
            }
        }
        x
    }

    /// `E[exp(-t X)]` by direct summation.
    pub fn laplace(&self, portfolio: &Portfolio, t: f64) -> f64 {
        let x = self.wealth(portfolio);
        self.prob.iter().zip(&x).map(|(p, x)| p * (-t * x).exp()).collect::<KahanSum>().value()
    }

    fn chunks(&self) -> usize {
        self.n_scenarios().div_ceil(CHUNK)
    }
}

pub fn enumerate_scenarios(bets: &[Bet], cap: usize) -> Result<ScenarioTable> {
    let n = bets.len();
    if n > cap {
        return Err(KellyError::Capacity { n, cap });
    }
    let mut prob = vec![0.0; 1usize << n];
    prob[0] = 1.0;
    for (i, bet) in bets.iter().enumerate() {
        let half = 1usize << i;
        for k in 0..half {
            prob[k | half] = prob[k] * bet.p;
            prob[k] *= 1.0 - bet.p;
        }
    }
    Ok(ScenarioTable { bets: bets.to_vec(), prob })
}

fn check_wealth(x: &[f64]) -> Result<()> {
    if let Some(k) = x.iter().position(|&v| !(v > 0.0)) {
        return Err(KellyError::Domain(format!("non-positive wealth {} in scenario {k}", x[k])));
    }
    Ok(())
}

fn check_portfolio(table: &ScenarioTable, portfolio: &Portfolio) -> Result<()> {
    if portfolio.n() != table.n_bets() {
        return Err(KellyError::Input(format!(
            "portfolio has {} weights for {} bets",
            portfolio.n(),
            table.n_bets()
        )));
    }
    Ok(())
}

fn log_wealth_sum(table: &ScenarioTable, x: &[f64]) -> f64 {
    let partial = par::map_range(table.chunks(), |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(x.len());
        (lo..hi).map(|k| table.prob[k] * x[k].ln()).collect::<KahanSum>()
    });
    partial.iter().map(|s| s.value()).collect::<KahanSum>().value()
}

/// `Σ_k p_k log(1 + wᵀR_k)`.
pub fn eval_f_exhaustive(table: &ScenarioTable, portfolio: &Portfolio) -> Result<f64> {
    check_portfolio(table, portfolio)?;
    let x = table.wealth(portfolio);
    check_wealth(&x)?;
    Ok(log_wealth_sum(table, &x))
}

/// Bet-space gradient and Hessian.
pub fn grad_hess_exhaustive(table: &ScenarioTable, portfolio: &Portfolio) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_portfolio(table, portfolio)?;
    let x = table.wealth(portfolio);
    check_wealth(&x)?;
    let (g, h) = moments(table, &x, 0);
    Ok((g, h))
}

/// `Σ_{k ≥ skip} p_k r_k / X_k` and `-Σ_{k ≥ skip} p_k r_k r_kᵀ / X_k²`.
fn moments(table: &ScenarioTable, x: &[f64], skip: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = table.n_bets();
    let partial = par::map_range(table.chunks(), |c| {
        let lo = (c * CHUNK).max(skip);
        let hi = ((c + 1) * CHUNK).min(x.len());
        let mut g = vec![KahanSum::new(); n];
        let mut h = vec![0.0; n * n];
        let mut r = vec![0.0; n];
        for k in lo..hi {
            let inv = 1.0 / x[k];
            let s = table.prob[k] * inv;
            let s2 = s * inv;
            for i in 0..n {
                r[i] = table.net_return(k, i);
                g[i].add(s * r[i]);
            }
            for i in 0..n {
                let ri = s2 * r[i];
                for j in i..n {
                    h[i * n + j] -= ri * r[j];
                }
            }
        }
        (g, h)
    });
    let mut g = vec![KahanSum::new(); n];
    let mut h = vec![0.0; n * n];
    for (pg, ph) in partial {
        for i in 0..n {
            g[i].add(pg[i].value());
        }
        for (a, b) in h.iter_mut().zip(&ph) {
            *a += b;
        }
    }
    let mut dense = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            dense[i][j] = h[i * n + j];
            dense[j][i] = h[i * n + j];
        }
    }
    (g.iter().map(|s| s.value()).collect(), dense)
}

/// Logit-space objective over the scenario table.
struct ExhaustiveObjective<'a> {
    table: &'a ScenarioTable,
    w0: f64,
    w: Vec<f64>,
    q0: f64,
    g_rem: Vec<f64>,
    h_rem: Vec<Vec<f64>>,
}

impl<'a> ExhaustiveObjective<'a> {
    fn new(table: &'a ScenarioTable) -> Self {
        Self { table, w0: 1.0, w: vec![], q0: table.prob[0], g_rem: vec![], h_rem: vec![] }
    }

    fn portfolio(theta: &[f64]) -> Result<Portfolio> {
        let p = Portfolio::from_simplex(&softmax(theta));
        if p.w0 < 1e-300 {
            return Err(KellyError::Domain("cash weight underflow".into()));
        }
        Ok(p)
    }
}

impl LogitObjective for ExhaustiveObjective<'_> {
    fn dim(&self) -> usize {
        self.table.n_bets() + 1
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        eval_f_exhaustive(self.table, &Self::portfolio(theta)?)
    }

    fn evaluate(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p = Self::portfolio(theta)?;
        let x = self.table.wealth(&p);
        check_wealth(&x)?;
        let f = log_wealth_sum(self.table, &x);
        // Skipping the all-loss row leaves exactly the tail-subtracted remainders.
        let (g_rem, h_rem) = moments(self.table, &x, 1);
        self.w0 = p.w0;
        self.w = p.w;
        self.g_rem = g_rem;
        self.h_rem = h_rem;
        Ok((f, simplex::logit_gradient(self.w0, &self.w, self.q0, &self.g_rem)))
    }

    fn hvp(&self, v: &[f64]) -> Vec<f64> {
        simplex::logit_hvp(self.w0, &self.w, self.q0, &self.g_rem, v, |d| {
            self.h_rem.iter().map(|row| crate::math::dot(row, d)).collect()
        })
    }

    fn hess_diag(&self) -> Option<Vec<f64>> {
        let diag: Vec<f64> = (0..self.w.len()).map(|i| self.h_rem[i][i]).collect();
        let hw: Vec<f64> = self.h_rem.iter().map(|row| crate::math::dot(row, &self.w)).collect();
        Some(simplex::logit_hess_diag(self.w0, &self.w, self.q0, &self.g_rem, &diag, &hw))
    }
}

pub fn solve_exhaustive(bets: &[Bet], opts: &ExhaustiveOptions) -> Result<SolveResult> {
    solve_exhaustive_from(bets, opts, None)
}

/// As [`solve_exhaustive`], starting from `start` instead of uniform logits.
pub fn solve_exhaustive_from(bets: &[Bet], opts: &ExhaustiveOptions, start: Option<&Portfolio>) -> Result<SolveResult> {
    if bets.is_empty() {
        return Err(KellyError::Input("no bets to optimize".into()));
    }
    if let Some(i) = bets.iter().position(|b| !b.has_edge()) {
        return Err(KellyError::Domain(format!("bet {i} has no positive edge")));
    }
    let table = enumerate_scenarios(bets, opts.cap)?;
    let theta0 = match start {
        Some(p) => Logits::from_portfolio(p)?.theta,
        None => Logits::uniform(bets.len()).theta,
    };
    let mut obj = ExhaustiveObjective::new(&table);
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
    let f_star = eval_f_exhaustive(&table, &portfolio)?;
    Ok(SolveResult {
        f_star,
        portfolio,
        iterations: out.iterations,
        converged: true,
        grad_norm: out.grad_norm,
    })
}
