//! Closed-form single-bet Kelly results and contract conversion.

use crate::error::{KellyError, Result};
use crate::types::{Bet, Contract};

/// Optimal stake `p - (1-p)/b` on a single positive-edge bet.
pub fn single_bet_kelly(p: f64, b: f64) -> Result<f64> {
    let bet = Bet::new(p, b)?;
    if !bet.has_edge() {
        return Err(KellyError::Domain(format!(
            "bet (p={p}, b={b}) has no positive edge"
        )));
    }
    Ok(p - (1.0 - p) / b)
}

/// Expected net return and return variance of one unit staked.
pub fn mu_sigma(p: f64, b: f64) -> Result<(f64, f64)> {
    let bet = Bet::new(p, b)?;
    Ok((bet.mu(), bet.sigma2()))
}

/// Kelly fraction written in mean/variance form.
pub fn kelly_from_mu_sigma(mu: f64, sigma2: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(KellyError::Domain(format!("expected return {mu} must be positive")));
    }
    if !(sigma2 > 0.0) {
        return Err(KellyError::Domain(format!("variance {sigma2} must be positive")));
    }
    Ok(mu / (mu + sigma2 / (1.0 + mu)))
}

/// Pick the side of a contract that carries the edge. `None` when `p == q`.
pub fn bet_from_contract(c: &Contract) -> Option<Bet> {
    if c.p > c.q {
        Some(Bet { p: c.p, b: (1.0 - c.q) / c.q })
    } else if c.p < c.q {
        Some(Bet { p: 1.0 - c.p, b: c.q / (1.0 - c.q) })
    } else {
        None
    }
}

/// Expected log wealth (nats) of staking fraction `f` on one bet.
pub fn single_bet_log_wealth(f: f64, p: f64, b: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&f) {
        return Err(KellyError::Domain(format!("stake {f} must lie in [0,1)")));
    }
    Ok(p * (f * b).ln_1p() + (1.0 - p) * (-f).ln_1p())
}

/// Expected log wealth at the single-bet optimum.
pub fn single_bet_optimum(bet: &Bet) -> Result<f64> {
    let f = single_bet_kelly(bet.p, bet.b)?;
    single_bet_log_wealth(f, bet.p, bet.b)
}
