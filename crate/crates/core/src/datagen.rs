//! Synthetic prediction-market instances.
//!
//! Each contract has a market price `q ~ U(0.1, 0.9)` and a subjective
//! probability `p` that disagrees with it. Three regimes draw the disagreement
//! as a generalized-normal offset in logit space; the fourth draws `p` from a
//! Beta prior whose mode is `q`, with its concentration calibrated so the mean
//! per-bet return matches the Normal regime at the same variance level.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{KellyError, Result};
use crate::kelly::bet_from_contract;
use crate::math::{clamp_prob, logistic, logit};
use crate::par;
use crate::types::{Bet, Calibration, Contract, ProblemInstance, Regime, VarianceLevel};

pub const Q_MIN: f64 = 0.1;
pub const Q_MAX: f64 = 0.9;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Reproducible random stream addressed by grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub regime: Regime,
    pub variance_level: VarianceLevel,
    pub n: usize,
    pub index: u64,
}

impl RngStream {
    pub fn rng(&self) -> ChaCha8Rng {
        let coords = [self.regime.index(), self.variance_level.index(), self.n as u64, self.index];
        ChaCha8Rng::seed_from_u64(mix(self.seed, &coords))
    }
}

fn mix(seed: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix(seed), |h, &c| splitmix(h ^ splitmix(c)))
}

/// Scale `α` for which the generalized normal with shape `beta` has variance `target_var`.
pub fn gnd_calibrate(beta: f64, target_var: f64) -> Result<f64> {
    if !(beta > 0.0) || !(target_var > 0.0) {
        return Err(KellyError::Domain(format!("need beta > 0 and variance > 0, got {beta}, {target_var}")));
    }
    Ok((target_var * gamma(1.0 / beta) / gamma(3.0 / beta)).sqrt())
}

/// Generalized-normal sampler with density ∝ exp(-(|x|/α)^β).
#[derive(Debug, Clone)]
pub struct GndSampler {
    alpha: f64,
    inv_beta: f64,
    gamma: Gamma<f64>,
}

impl GndSampler {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        if !(beta > 0.0) || !(alpha > 0.0) {
            return Err(KellyError::Domain(format!("need beta > 0 and alpha > 0, got {beta}, {alpha}")));
        }
        let gamma = Gamma::new(1.0 / beta, 1.0).map_err(|e| KellyError::Domain(e.to_string()))?;
        Ok(Self { alpha, inv_beta: 1.0 / beta, gamma })
    }

    pub fn calibrated(beta: f64, target_var: f64) -> Result<Self> {
        Self::new(beta, gnd_calibrate(beta, target_var)?)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g: f64 = self.gamma.sample(rng);
        let mag = self.alpha * g.powf(self.inv_beta);
        if rng.random::<bool>() { mag } else { -mag }
    }
}

pub fn gnd_sample<R: Rng + ?Sized>(beta: f64, alpha: f64, rng: &mut R) -> Result<f64> {
    Ok(GndSampler::new(beta, alpha)?.sample(rng))
}

/// Expected net return of the better side of a contract, `max(p/q, (1-p)/(1-q)) - 1`.
pub fn best_side_return(p: f64, q: f64) -> f64 {
    (p / q).max((1.0 - p) / (1.0 - q)) - 1.0
}

/// Draw contracts until one has an edge.
fn draw_bet<R: Rng + ?Sized>(rng: &mut R, mut draw_p: impl FnMut(&mut R, f64) -> f64) -> (Contract, Bet) {
    loop {
        let q = rng.random_range(Q_MIN..Q_MAX);
        let raw = draw_p(rng, q);
        let p = clamp_prob(raw);
        if p != raw {
            continue;
        }
        let contract = Contract { p, q };
        if let Some(bet) = bet_from_contract(&contract) {
            if Bet::new(bet.p, bet.b).is_ok() {
                return (contract, bet);
            }
        }
    }
}

fn logit_offset_p<R: Rng + ?Sized>(sampler: &GndSampler, rng: &mut R, q: f64) -> f64 {
    logistic(logit(q) + sampler.sample(rng))
}

/// Beta parameters with mode `q` and concentration `kappa > 2`.
pub fn beta_params(q: f64, kappa: f64) -> (f64, f64) {
    (1.0 + q * (kappa - 2.0), 1.0 + (1.0 - q) * (kappa - 2.0))
}

pub fn gen_logit_offset_instance(
    n: usize,
    regime: Regime,
    variance_level: VarianceLevel,
    stream: &RngStream,
) -> Result<ProblemInstance> {
    let beta = regime
        .gnd_shape()
        .ok_or_else(|| KellyError::Config(format!("{regime} is not a logit-offset regime")))?;
    let sampler = GndSampler::calibrated(beta, variance_level.variance())?;
    let mut rng = stream.rng();
    let (contracts, bets) = (0..n).map(|_| draw_bet(&mut rng, |r, q| logit_offset_p(&sampler, r, q))).unzip();
    Ok(ProblemInstance {
        bets,
        regime,
        variance_level,
        seed: stream.seed,
        index: stream.index,
        contracts: Some(contracts),
        calibration: None,
    })
}

pub fn gen_beta_instance(n: usize, variance_level: VarianceLevel, kappa: f64, stream: &RngStream) -> Result<ProblemInstance> {
    if !(kappa > 2.0) {
        return Err(KellyError::Config(format!("Beta concentration {kappa} must exceed 2")));
    }
    let mut rng = stream.rng();
    let (contracts, bets) = (0..n)
        .map(|_| {
            draw_bet(&mut rng, |r, q| {
                let (a, b) = beta_params(q, kappa);
                Beta::new(a, b).expect("valid Beta parameters").sample(r)
            })
        })
        .unzip();
    Ok(ProblemInstance {
        bets,
        regime: Regime::Beta,
        variance_level,
        seed: stream.seed,
        index: stream.index,
        contracts: Some(contracts),
        calibration: Some(Calibration { anchor: Regime::Normal, kappa }),
    })
}

/// Settings for matching the Beta regime to the Normal regime's mean return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BetaCalibration {
    pub samples: usize,
    pub seed: u64,
    /// Relative tolerance on the matched mean return.
    pub tolerance: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub max_iter: usize,
}

impl Default for BetaCalibration {
    fn default() -> Self {
        Self { samples: 1_000_000, seed: 0x6b65_6c6c_79, tolerance: 0.01, kappa_min: 2.5, kappa_max: 1e7, max_iter: 60 }
    }
}

const CHUNK: usize = 1 << 14;

fn chunked_mean(samples: usize, seed: u64, tag: u64, f: impl Fn(&mut ChaCha8Rng) -> f64 + Sync + Send) -> f64 {
    let chunks = samples.div_ceil(CHUNK);
    let sums = par::map_range(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, &[tag, c as u64]));
        let len = CHUNK.min(samples - c * CHUNK);
        (0..len).map(|_| f(&mut rng)).sum::<f64>()
    });
    sums.iter().sum::<f64>() / samples as f64
}

/// Monte-Carlo mean best-side return of the Normal logit-offset regime.
pub fn normal_mean_return(level: VarianceLevel, samples: usize, seed: u64) -> Result<f64> {
    let sampler = GndSampler::calibrated(2.0, level.variance())?;
    Ok(chunked_mean(samples, seed, 1 + level.index(), |rng| {
        let q = rng.random_range(Q_MIN..Q_MAX);
        let p = clamp_prob(logit_offset_p(&sampler, rng, q));
        best_side_return(p, q)
    }))
}

/// Monte-Carlo mean best-side return of the Beta regime at concentration `kappa`.
pub fn beta_mean_return(kappa: f64, samples: usize, seed: u64) -> f64 {
    chunked_mean(samples, seed, 100, |rng| {
        let q = rng.random_range(Q_MIN..Q_MAX);
        let (a, b) = beta_params(q, kappa);
        let p = clamp_prob(Beta::new(a, b).expect("valid Beta parameters").sample(rng));
        best_side_return(p, q)
    })
}

/// Concentration `κ` whose Beta regime matches the Normal regime's mean
/// per-bet return at `level`. Results are cached per level and settings.
pub fn calibrate_beta_concentration(level: VarianceLevel, cal: &BetaCalibration) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<(VarianceLevel, usize, u64), f64>>> = OnceLock::new();
    let key = (level, cal.samples, cal.seed);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(&k) = cache.lock().expect("calibration cache").get(&key) {
        return Ok(k);
    }
    let kappa = bisect_kappa(level, cal)?;
    cache.lock().expect("calibration cache").insert(key, kappa);
    Ok(kappa)
}

fn bisect_kappa(level: VarianceLevel, cal: &BetaCalibration) -> Result<f64> {
    let target = normal_mean_return(level, cal.samples, cal.seed)?;
    let excess = |log_k: f64| beta_mean_return(log_k.exp(), cal.samples, cal.seed) - target;
    let (mut lo, mut hi) = (cal.kappa_min.ln(), cal.kappa_max.ln());
    let (e_lo, e_hi) = (excess(lo), excess(hi));
    // Mean return falls as the prior concentrates.
    if !(e_lo > 0.0 && e_hi < 0.0) {
        return Err(KellyError::Config(format!(
            "Beta calibration bracket [{}, {}] does not straddle target {target:e} at {level}",
            cal.kappa_min, cal.kappa_max
        )));
    }
    for _ in 0..cal.max_iter {
        let mid = 0.5 * (lo + hi);
        let e = excess(mid);
        if e.abs() <= 0.1 * cal.tolerance * target {
            return Ok(mid.exp());
        }
        if e > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let kappa = (0.5 * (lo + hi)).exp();
    let err = excess(kappa.ln()).abs() / target;
    if err > cal.tolerance {
        return Err(KellyError::Config(format!("Beta calibration missed target by {err:e} at {level}")));
    }
    Ok(kappa)
}

/// Generate one instance of any regime. The Beta regime needs its calibrated `kappa`.
pub fn gen_instance(
    regime: Regime,
    variance_level: VarianceLevel,
    n: usize,
    seed: u64,
    index: u64,
    kappa: Option<f64>,
) -> Result<ProblemInstance> {
    if n == 0 {
        return Err(KellyError::Config("instances need at least one bet".into()));
    }
    let stream = RngStream { seed, regime, variance_level, n, index };
    match regime {
        Regime::Beta => {
            let kappa = kappa.ok_or_else(|| KellyError::Config("Beta regime needs a calibrated concentration".into()))?;
            gen_beta_instance(n, variance_level, kappa, &stream)
        }
        _ => gen_logit_offset_instance(n, regime, variance_level, &stream),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn moments(xs: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        (mean, m2, m4 / (m2 * m2))
    }

    fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    fn draws(beta: f64, var: f64, n: usize, seed: u64) -> Vec<f64> {
        let s = GndSampler::calibrated(beta, var).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| s.sample(&mut rng)).collect()
    }

    #[test]
    fn calibrated_scales() {
        assert!((gnd_calibrate(2.0, 0.05).unwrap() - 0.1f64.sqrt()).abs() < 1e-12);
        assert!((gnd_calibrate(1.0, 0.01).unwrap() - 0.005f64.sqrt()).abs() < 1e-12);
        for regime in [Regime::Laplace, Regime::Normal, Regime::Gnd6] {
            let beta = regime.gnd_shape().unwrap();
            for level in VarianceLevel::ALL {
                let a = gnd_calibrate(beta, level.variance()).unwrap();
                let var = a * a * gamma(3.0 / beta) / gamma(1.0 / beta);
                assert!((var - level.variance()).abs() < 1e-10);
            }
        }
        assert!(gnd_calibrate(0.0, 0.1).is_err());
        assert!(gnd_calibrate(2.0, -0.1).is_err());
    }

    #[test]
    fn sampled_moments() {
        let n = 1_000_000;
        for (beta, kurt, ktol) in [(1.0, 6.0, 0.25), (2.0, 3.0, 0.05), (6.0, gamma(5.0 / 6.0) * gamma(1.0 / 6.0) / gamma(0.5).powi(2), 0.05)] {
            let xs = draws(beta, 0.025, n, 7 + beta as u64);
            let (mean, var, k) = moments(&xs);
            assert!((var / 0.025 - 1.0).abs() < 0.01, "beta {beta}: var {var}");
            assert!(mean.abs() < 4.0 * (0.025 / n as f64).sqrt(), "beta {beta}: mean {mean}");
            assert!((k - kurt).abs() < ktol, "beta {beta}: kurtosis {k} vs {kurt}");
        }
    }

    #[test]
    fn special_cases_match_direct_samplers() {
        let n = 100_000;
        let crit = 1.628 * (2.0 / n as f64).sqrt();
        let var: f64 = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let gauss: Vec<f64> = (0..n).map(|_| var.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let b = (var / 2.0).sqrt();
        let laplace: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random_range(-0.5..0.5);
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect();
        let d2 = ks_two_sample(draws(2.0, var, n, 1), gauss);
        let d1 = ks_two_sample(draws(1.0, var, n, 2), laplace);
        assert!(d2 < crit, "Gaussian KS {d2} >= {crit}");
        assert!(d1 < crit, "Laplace KS {d1} >= {crit}");
        // the test has power: Laplace vs Gaussian at equal variance is rejected
        assert!(ks_two_sample(draws(1.0, var, n, 3), draws(2.0, var, n, 4)) > crit);
    }

    #[test]
    fn logit_offset_instances() {
        for regime in [Regime::Laplace, Regime::Normal, Regime::Gnd6] {
            for level in VarianceLevel::ALL {
                let inst = gen_instance(regime, level, 50, 11, 3, None).unwrap();
                assert_eq!(inst.n(), 50);
                inst.validate().unwrap();
                assert!(inst.bets.iter().all(|b| b.has_edge()));
                for c in inst.contracts.as_ref().unwrap() {
                    assert!((Q_MIN..=Q_MAX).contains(&c.q));
                    assert!(logit(c.p).is_finite());
                }
                assert!(inst.calibration.is_none());
            }
        }
    }

    #[test]
    fn offset_variance_matches_level() {
        for regime in [Regime::Laplace, Regime::Normal, Regime::Gnd6] {
            let inst = gen_instance(regime, VarianceLevel::High, 100_000, 5, 0, None).unwrap();
            let eps: Vec<f64> = inst.contracts.unwrap().iter().map(|c| logit(c.p) - logit(c.q)).collect();
            let (_, var, _) = moments(&eps);
            assert!((var / 0.05 - 1.0).abs() < 0.02, "{regime}: {var}");
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = format!("{:?}", gen_instance(Regime::Laplace, VarianceLevel::Low, 20, 1, 0, None).unwrap());
        let b = format!("{:?}", gen_instance(Regime::Laplace, VarianceLevel::Low, 20, 1, 0, None).unwrap());
        assert_eq!(a, b);
        let base = RngStream { seed: 1, regime: Regime::Laplace, variance_level: VarianceLevel::Low, n: 20, index: 0 };
        let first: u64 = base.rng().random();
        let variants = [
            RngStream { seed: 2, ..base },
            RngStream { regime: Regime::Normal, ..base },
            RngStream { variance_level: VarianceLevel::High, ..base },
            RngStream { n: 21, ..base },
            RngStream { index: 1, ..base },
        ];
        let mut seen = vec![first];
        for s in variants {
            let x: u64 = s.rng().random();
            assert!(!seen.contains(&x));
            seen.push(x);
        }
    }

    #[test]
    fn beta_mode_is_q() {
        let (q, kappa) = (0.3, 20.0);
        let (a, b) = beta_params(q, kappa);
        // log-density slope is decreasing, so bisect on its sign
        let slope = |x: f64| (a - 1.0) / x - (b - 1.0) / (1.0 - x);
        let (mut lo, mut hi) = (1e-6, 1.0 - 1e-6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 { lo = mid } else { hi = mid }
        }
        assert!((0.5 * (lo + hi) - q).abs() < 1e-9);
    }

    #[test]
    fn beta_mean_return_falls_with_concentration() {
        let grid = [3.0, 10.0, 50.0, 250.0, 1000.0, 5000.0];
        let r: Vec<f64> = grid.iter().map(|&k| beta_mean_return(k, 200_000, 17)).collect();
        assert!(r.windows(2).all(|w| w[1] < w[0]), "{r:?}");
        assert!(beta_mean_return(1e10, 100_000, 17) < 1e-3);
    }

    #[test]
    fn beta_calibration_holds_out_of_sample() {
        let cal = BetaCalibration::default();
        for level in VarianceLevel::ALL {
            let kappa = calibrate_beta_concentration(level, &cal).unwrap();
            assert!(kappa > 2.0);
            assert_eq!(calibrate_beta_concentration(level, &cal).unwrap(), kappa);
            let held = cal.seed ^ 0xdead_beef;
            let target = normal_mean_return(level, cal.samples, held).unwrap();
            let got = beta_mean_return(kappa, cal.samples, held);
            assert!((got / target - 1.0).abs() < cal.tolerance, "{level}: {got} vs {target}");

            let inst = gen_instance(Regime::Beta, level, 40, 3, 1, Some(kappa)).unwrap();
            assert_eq!(inst.n(), 40);
            assert!(inst.bets.iter().all(|b| b.has_edge()));
            assert_eq!(inst.calibration, Some(Calibration { anchor: Regime::Normal, kappa }));
        }
    }

    #[test]
    fn beta_regime_requires_concentration() {
        assert!(matches!(gen_instance(Regime::Beta, VarianceLevel::Low, 5, 0, 0, None), Err(KellyError::Config(_))));
        assert!(gen_instance(Regime::Beta, VarianceLevel::Low, 5, 0, 0, Some(1.5)).is_err());
        assert!(gen_instance(Regime::Normal, VarianceLevel::Low, 0, 0, 0, None).is_err());
    }

    #[test]
    fn calibration_bracket_failure_is_config_error() {
        let cal = BetaCalibration { samples: 20_000, kappa_min: 1e5, kappa_max: 1e6, ..Default::default() };
        assert!(matches!(bisect_kappa(VarianceLevel::High, &cal), Err(KellyError::Config(_))));
    }
}
