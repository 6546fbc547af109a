//! Attainable lower bounds from solved subproblems and numeraire-replacement
//! upper bounds on the optimal growth rate.

use serde::{Deserialize, Serialize};

use crate::error::{KellyError, Result};
use crate::kelly::single_bet_optimum;
use crate::par;
use crate::solver::{self, Method, SolverOptions};
use crate::types::{Bet, Portfolio};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundsOptions {
    pub solver: SolverOptions,
    pub method: Method,
    /// Start each subproblem from the previous, smaller solution.
    pub warm_start: bool,
}

impl Default for BoundsOptions {
    fn default() -> Self {
        Self { solver: SolverOptions::default(), method: Method::Auto, warm_start: true }
    }
}

/// A feasible portfolio on a subset of bets, embedded in the full problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub selected: Vec<usize>,
    pub f_lower: f64,
    pub portfolio: Portfolio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub n: usize,
    pub x: f64,
    pub f_lower: f64,
    pub f_upper: f64,
    pub shortfall: f64,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsProfile {
    #[serde(rename = "N")]
    pub n_total: usize,
    /// Full-problem optimum.
    pub f_full: f64,
    pub entries: Vec<ProfileEntry>,
}

impl BoundsProfile {
    /// `(x, shortfall)` pairs with `x < 1`. Ratios just above 1, where both bounds
    /// agree to quadrature accuracy, are clipped to 1.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        self.entries.iter().filter(|e| e.n < self.n_total).map(|e| (e.x, e.shortfall.min(1.0))).collect()
    }
}

struct Solved {
    f: f64,
    portfolio: Portfolio,
}

fn solve_subset(bets: &[Bet], indices: &[usize], opts: &BoundsOptions, start: Option<&Portfolio>) -> Result<Solved> {
    let sub: Vec<Bet> = indices.iter().map(|&i| bets[i]).collect();
    solve_bets(&sub, opts, start).map_err(|e| KellyError::Subproblem {
        indices: indices.to_vec(),
        source: Box::new(e),
    })
}

fn solve_bets(sub: &[Bet], opts: &BoundsOptions, start: Option<&Portfolio>) -> Result<Solved> {
    if sub.len() == 1 {
        let bet = sub[0];
        let f = single_bet_optimum(&bet)?;
        let w = crate::kelly::single_bet_kelly(bet.p, bet.b)?;
        return Ok(Solved { f, portfolio: Portfolio::from_bet_weights(vec![w])? });
    }
    let start = if opts.warm_start { start } else { None };
    let r = solver::solve(sub, opts.method, &opts.solver, start)?;
    Ok(Solved { f: r.result.f_star, portfolio: r.result.portfolio })
}

/// Extend a solved portfolio with new bets in proportion to their
/// single-bet Kelly fractions. They get half of the cash, or a 1% share
/// taken from everything when cash is nearly gone, a tenth of which goes
/// back to cash: a start with tiny new weights or tiny cash sits where the
/// logit gradient vanishes and stalls the solver.
fn extend_start(prev: &Portfolio, new_bets: &[Bet]) -> Option<Portfolio> {
    const MIN_SHARE: f64 = 0.01;
    let fracs: Vec<f64> = new_bets
        .iter()
        .map(|b| crate::kelly::single_bet_kelly(b.p, b.b).unwrap_or(0.0).max(1e-6))
        .collect();
    let total: f64 = fracs.iter().sum();
    let (budget, keep, w0) = if 0.5 * prev.w0 >= MIN_SHARE {
        (0.5 * prev.w0, 1.0, 0.5 * prev.w0)
    } else {
        (0.9 * MIN_SHARE, 1.0 - MIN_SHARE, prev.w0 * (1.0 - MIN_SHARE) + 0.1 * MIN_SHARE)
    };
    let mut w: Vec<f64> = prev.w.iter().map(|x| x * keep).collect();
    w.extend(fracs.iter().map(|f| budget * f / total));
    let p = Portfolio { w0, w };
    (p.w0 > 1e-200 && p.w.iter().all(|&x| x > 0.0)).then_some(p)
}

/// Stepwise-optimal lower bounds for `n = 1..=n_max`.
pub fn stepwise_lower(bets: &[Bet], n_max: usize, opts: &BoundsOptions) -> Result<Vec<LowerBound>> {
    let n_total = bets.len();
    check_n(n_max, n_total)?;
    let mut out: Vec<LowerBound> = Vec::with_capacity(n_max);
    let mut selected: Vec<usize> = Vec::new();
    let mut current: Option<Portfolio> = None;
    for step in 1..=n_max {
        let candidates: Vec<usize> = (0..n_total).filter(|j| !selected.contains(j)).collect();
        let results = par::map(&candidates, |&j| {
            let mut idx = selected.clone();
            idx.push(j);
            let start = current.as_ref().and_then(|p| extend_start(p, &[bets[j]]));
            solve_subset(bets, &idx, opts, start.as_ref())
        });
        let mut best: Option<(usize, Solved)> = None;
        for (&j, r) in candidates.iter().zip(results) {
            let s = r?;
            if best.as_ref().is_none_or(|(_, b)| s.f > b.f) {
                best = Some((j, s));
            }
        }
        let (j, s) = best.expect("at least one candidate");
        selected.push(j);
        let _ = step;
        out.push(LowerBound {
            selected: selected.clone(),
            f_lower: s.f,
            portfolio: s.portfolio.embed(&selected, n_total),
        });
        current = Some(s.portfolio);
    }
    Ok(out)
}

/// Bet indices by single-bet optimal log wealth, descending; ties keep index order.
pub fn greedy_rank(bets: &[Bet]) -> Vec<usize> {
    let u: Vec<f64> = bets.iter().map(|b| single_bet_optimum(b).unwrap_or(0.0)).collect();
    let mut idx: Vec<usize> = (0..bets.len()).collect();
    idx.sort_by(|&a, &b| u[b].total_cmp(&u[a]));
    idx
}

/// Bet indices by expected net return, descending; ties keep index order.
pub fn mu_rank(bets: &[Bet]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..bets.len()).collect();
    idx.sort_by(|&a, &b| bets[b].mu().total_cmp(&bets[a].mu()));
    idx
}

fn check_n(n: usize, n_total: usize) -> Result<()> {
    if n == 0 || n > n_total {
        return Err(KellyError::Input(format!("subproblem size {n} outside 1..={n_total}")));
    }
    Ok(())
}

pub fn greedy_lower(bets: &[Bet], n: usize, opts: &BoundsOptions) -> Result<LowerBound> {
    Ok(greedy_lower_sequence(bets, &[n], opts)?.remove(0))
}

/// Greedy lower bounds for every size in `sizes` (ascending), warm-starting
/// each from the previous one.
pub fn greedy_lower_sequence(bets: &[Bet], sizes: &[usize], opts: &BoundsOptions) -> Result<Vec<LowerBound>> {
    let n_total = bets.len();
    let rank = greedy_rank(bets);
    let mut out: Vec<LowerBound> = Vec::with_capacity(sizes.len());
    let mut prev: Option<(usize, Portfolio)> = None;
    for &n in sizes {
        check_n(n, n_total)?;
        let selected = rank[..n].to_vec();
        let start = match &prev {
            Some((m, p)) if *m < n => {
                let added: Vec<Bet> = rank[*m..n].iter().map(|&i| bets[i]).collect();
                extend_start(p, &added)
            }
            _ => None,
        };
        let s = solve_subset(bets, &selected, opts, start.as_ref())?;
        // Subsets are nested, so the smaller solution stays feasible; keep
        // it when quadrature noise puts the new optimum a hair below.
        let lb = match out.last() {
            Some(last) if s.f < last.f_lower => LowerBound { selected: selected.clone(), ..last.clone() },
            _ => LowerBound {
                selected: selected.clone(),
                f_lower: s.f,
                portfolio: s.portfolio.embed(&selected, n_total),
            },
        };
        out.push(lb);
        prev = Some((n, s.portfolio));
    }
    Ok(out)
}

/// The `n`-th highest-return bet replaced by a bond of equal expected return:
/// the bond becomes the numeraire and only higher-return bets keep an edge.
fn redenominated(bets: &[Bet], rank: &[usize], n: usize) -> (f64, Vec<usize>, Vec<Bet>) {
    let mu_n = bets[rank[n - 1]].mu();
    let growth = 1.0 + mu_n;
    let mut idx = Vec::new();
    let mut sub = Vec::new();
    for &i in &rank[..n - 1] {
        let b = bets[i];
        let b_new = (1.0 + b.b) / growth - 1.0;
        let bet = Bet { p: b.p, b: b_new };
        // Ties with the bond have no edge and would get zero weight.
        if b_new > 0.0 && bet.has_edge() {
            idx.push(i);
            sub.push(bet);
        }
    }
    (mu_n.ln_1p(), idx, sub)
}

pub fn upper_bound(bets: &[Bet], n: usize, opts: &BoundsOptions) -> Result<f64> {
    Ok(upper_bound_sequence(bets, &[n], opts)?[0])
}

/// Upper bounds for every size in `sizes` (ascending).
pub fn upper_bound_sequence(bets: &[Bet], sizes: &[usize], opts: &BoundsOptions) -> Result<Vec<f64>> {
    let n_total = bets.len();
    let rank = mu_rank(bets);
    let mut out = Vec::with_capacity(sizes.len());
    // Warm starts carry weights by original bet index.
    let mut prev: Option<(Vec<usize>, Portfolio)> = None;
    for &n in sizes {
        check_n(n, n_total)?;
        let (base, idx, sub) = redenominated(bets, &rank, n);
        if sub.is_empty() {
            out.push(base);
            continue;
        }
        let start = prev.as_ref().and_then(|(pidx, p)| warm_from(pidx, p, &idx, &sub));
        let s = solve_bets(&sub, opts, start.as_ref()).map_err(|e| KellyError::Subproblem {
            indices: idx.clone(),
            source: Box::new(e),
        })?;
        out.push(base + s.f);
        prev = Some((idx, s.portfolio));
    }
    Ok(out)
}

fn warm_from(prev_idx: &[usize], prev: &Portfolio, idx: &[usize], sub: &[Bet]) -> Option<Portfolio> {
    if !idx.starts_with(prev_idx) || prev_idx.len() == idx.len() {
        return None;
    }
    extend_start(prev, &sub[prev_idx.len()..])
}

/// Sizes `k·N/divisions` (rounded up, deduplicated) for `k = 1..=divisions`.
pub fn n_grid(n_total: usize, divisions: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=divisions)
        .map(|k| (k * n_total).div_ceil(divisions).max(1))
        .collect();
    out.dedup();
    out
}

/// Greedy lower and numeraire upper bounds over `sizes`, with the shortfall
/// ratio `f_lower / f_upper`. The full problem is solved once; at `n = N` it
/// serves as both bounds.
pub fn bounds_profile(bets: &[Bet], sizes: &[usize], opts: &BoundsOptions) -> Result<BoundsProfile> {
    let n_total = bets.len();
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    for &n in &sizes {
        check_n(n, n_total)?;
    }
    let mut lower_sizes = sizes.clone();
    if lower_sizes.last() != Some(&n_total) {
        lower_sizes.push(n_total);
    }
    let lowers = greedy_lower_sequence(bets, &lower_sizes, opts)?;
    let f_full = lowers.last().expect("nonempty").f_lower;
    let upper_sizes: Vec<usize> = sizes.iter().copied().filter(|&n| n < n_total).collect();
    let uppers = upper_bound_sequence(bets, &upper_sizes, opts)?;

    let mut entries = Vec::with_capacity(sizes.len());
    for (k, &n) in sizes.iter().enumerate() {
        let lb = &lowers[k];
        let f_upper = if n == n_total { f_full } else { uppers[k] };
        if k > 0 && n < n_total && f_upper > entries.last().map_or(f64::INFINITY, |e: &ProfileEntry| e.f_upper) + 1e-12 {
            log::warn!("upper bound increased at n={n}");
        }
        let shortfall = if f_upper > 0.0 { lb.f_lower / f_upper } else { 1.0 };
        entries.push(ProfileEntry {
            n,
            x: n as f64 / n_total as f64,
            f_lower: lb.f_lower,
            f_upper,
            shortfall,
            selected: lb.selected.clone(),
        });
    }
    Ok(BoundsProfile { n_total, f_full, entries })
}
