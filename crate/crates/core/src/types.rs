//! Domain types: bets, contracts, portfolios and problem instances.

use serde::{Deserialize, Serialize};

use crate::error::{KellyError, Result};
use crate::math;

/// A binary lottery: win `b` per dollar staked with probability `p`, else lose the stake.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bet {
    pub p: f64,
    pub b: f64,
}

impl Bet {
    pub fn new(p: f64, b: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(KellyError::Domain(format!("win probability {p} not in (0,1)")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(KellyError::Domain(format!("payoff {b} must be positive")));
        }
        Ok(Self { p, b })
    }

    /// Expected net return `p(1+b) - 1`.
    #[inline]
    pub fn mu(&self) -> f64 {
        self.p * (1.0 + self.b) - 1.0
    }

    #[inline]
    pub fn sigma2(&self) -> f64 {
        let g = 1.0 + self.b;
        self.p * (1.0 - self.p) * g * g
    }

    /// True when `p(1+b) > 1`.
    #[inline]
    pub fn has_edge(&self) -> bool {
        self.p * (1.0 + self.b) > 1.0
    }
}

/// A YES contract priced at `q` together with a subjective event probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub p: f64,
    pub q: f64,
}

impl Contract {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) || !(q > 0.0 && q < 1.0) {
            return Err(KellyError::Domain(format!("contract (p={p}, q={q}) outside (0,1)")));
        }
        Ok(Self { p, q })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    Laplace,
    Normal,
    #[serde(rename = "GND6")]
    Gnd6,
    Beta,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Laplace, Regime::Normal, Regime::Gnd6, Regime::Beta];

    /// Generalized-normal shape parameter, `None` for the Beta prior regime.
    pub fn gnd_shape(&self) -> Option<f64> {
        match self {
            Regime::Laplace => Some(1.0),
            Regime::Normal => Some(2.0),
            Regime::Gnd6 => Some(6.0),
            Regime::Beta => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::Laplace => "Laplace",
            Regime::Normal => "Normal",
            Regime::Gnd6 => "GND6",
            Regime::Beta => "Beta",
        }
    }

    pub fn index(&self) -> u64 {
        *self as u64
    }
}

impl std::str::FromStr for Regime {
    type Err = KellyError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "laplace" => Ok(Regime::Laplace),
            "normal" => Ok(Regime::Normal),
            "gnd6" | "gnd(6)" => Ok(Regime::Gnd6),
            "beta" => Ok(Regime::Beta),
            _ => Err(KellyError::Input(format!("unknown regime `{s}`"))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarianceLevel {
    Low,
    Medium,
    High,
}

impl VarianceLevel {
    pub const ALL: [VarianceLevel; 3] = [VarianceLevel::Low, VarianceLevel::Medium, VarianceLevel::High];

    /// Target variance of the logit offset.
    pub fn variance(&self) -> f64 {
        match self {
            VarianceLevel::Low => 0.01,
            VarianceLevel::Medium => 0.025,
            VarianceLevel::High => 0.05,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VarianceLevel::Low => "Low",
            VarianceLevel::Medium => "Medium",
            VarianceLevel::High => "High",
        }
    }

    pub fn index(&self) -> u64 {
        *self as u64
    }
}

impl std::str::FromStr for VarianceLevel {
    type Err = KellyError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(VarianceLevel::Low),
            "medium" => Ok(VarianceLevel::Medium),
            "high" => Ok(VarianceLevel::High),
            _ => Err(KellyError::Input(format!("unknown variance level `{s}`"))),
        }
    }
}

impl std::fmt::Display for VarianceLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A set of positive-edge bets plus the coordinates that generated them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub bets: Vec<Bet>,
    pub regime: Regime,
    pub variance_level: VarianceLevel,
    pub seed: u64,
    pub index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contracts: Option<Vec<Contract>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

/// How a Beta-regime concentration was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Logit-offset regime whose mean per-bet return was matched.
    pub anchor: Regime,
    pub kappa: f64,
}

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.bets.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bets.is_empty() {
            return Err(KellyError::Input("instance has no bets".into()));
        }
        for (i, bet) in self.bets.iter().enumerate() {
            Bet::new(bet.p, bet.b).map_err(|e| KellyError::Input(format!("bets[{i}]: {e}")))?;
        }
        if let Some(contracts) = &self.contracts {
            if contracts.len() != self.bets.len() {
                return Err(KellyError::Input(format!(
                    "contracts has {} entries but bets has {}",
                    contracts.len(),
                    self.bets.len()
                )));
            }
        }
        Ok(())
    }
}

/// Simplex weights over cash (`w0`) and the bets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub w0: f64,
    pub w: Vec<f64>,
}

impl Portfolio {
    pub fn cash(n: usize) -> Self {
        Self { w0: 1.0, w: vec![0.0; n] }
    }

    /// Build from bet weights; cash is whatever is left.
    pub fn from_bet_weights(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|&x| !(x >= 0.0)) {
            return Err(KellyError::Domain("negative bet weight".into()));
        }
        let leverage: f64 = w.iter().sum();
        if !(leverage < 1.0) {
            return Err(KellyError::Domain(format!("leverage {leverage} must be below 1")));
        }
        Ok(Self { w0: 1.0 - leverage, w })
    }

    pub fn from_simplex(weights: &[f64]) -> Self {
        Self { w0: weights[0], w: weights[1..].to_vec() }
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    /// Total stake on risky bets.
    pub fn leverage(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Win-scenario wealth contributions `c_i = w_i (b_i + 1)`.
    pub fn c(&self, bets: &[Bet]) -> Vec<f64> {
        self.w.iter().zip(bets).map(|(w, bet)| w * (bet.b + 1.0)).collect()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.w0 >= 0.0
            && self.w.iter().all(|&x| x >= 0.0)
            && (self.w0 + self.leverage() - 1.0).abs() <= tol
    }

    /// Scatter into a length-`n` weight vector at the given bet indices.
    pub fn embed(&self, indices: &[usize], n: usize) -> Portfolio {
        let mut w = vec![0.0; n];
        for (&i, &x) in indices.iter().zip(&self.w) {
            w[i] = x;
        }
        Portfolio { w0: self.w0, w }
    }
}

/// Unconstrained logits; index 0 is cash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logits {
    pub theta: Vec<f64>,
}

impl Logits {
    /// All-zero logits over cash and `n` bets.
    pub fn uniform(n: usize) -> Self {
        Self { theta: vec![0.0; n + 1] }
    }

    pub fn portfolio(&self) -> Portfolio {
        Portfolio::from_simplex(&math::softmax(&self.theta))
    }

    /// Remove the softmax shift freedom so the logits sum to zero.
    pub fn gauge_project(&mut self) {
        math::center(&mut self.theta);
    }

    /// Logits reproducing a portfolio with strictly positive weights.
    pub fn from_portfolio(p: &Portfolio) -> Result<Self> {
        if p.w0 <= 0.0 || p.w.iter().any(|&x| x <= 0.0) {
            return Err(KellyError::Domain("logits need strictly positive weights".into()));
        }
        let mut theta = Vec::with_capacity(p.n() + 1);
        theta.push(p.w0.ln());
        theta.extend(p.w.iter().map(|x| x.ln()));
        let mut l = Self { theta };
        l.gauge_project();
        Ok(l)
    }
}
