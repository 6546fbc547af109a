use std::path::{Path, PathBuf};

use kelly_core::bounds::BoundsOptions;
use kelly_core::datagen::BetaCalibration;
use kelly_core::scaling::{FitOptions, TrainOptions};
use kelly_core::{Regime, SolverOptions, VarianceLevel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub regimes: Vec<Regime>,
    pub variance_levels: Vec<VarianceLevel>,
    /// Instance sizes for the scaling study.
    pub n_list: Vec<usize>,
    /// Instance size for the oracle comparison.
    pub validation_n: usize,
    /// Instances per cell before `scale` is applied.
    pub instances: usize,
    pub scale: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            regimes: Regime::ALL.to_vec(),
            variance_levels: VarianceLevel::ALL.to_vec(),
            n_list: (1..=10).map(|k| 20 * k).collect(),
            validation_n: 10,
            instances: 1000,
            scale: 1.0,
        }
    }
}

impl GridConfig {
    pub fn instances_per_cell(&self) -> usize {
        ((self.instances as f64 * self.scale).round() as usize).max(1)
    }

    /// Every size that `gen` writes, ascending.
    pub fn all_sizes(&self) -> Vec<usize> {
        let mut v = self.n_list.clone();
        v.push(self.validation_n);
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Subproblem sizes step in increments of `N / divisions`.
    pub divisions: usize,
    pub warm_start: bool,
    /// Subproblem sizes for the greedy-vs-stepwise comparison.
    pub stepwise_sizes: Vec<usize>,
    pub percentile: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { divisions: 20, warm_start: true, stepwise_sizes: vec![2, 4, 6, 8], percentile: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out: PathBuf,
    /// First entry seeds instance generation; each entry seeds one train/val/test split.
    pub seeds: Vec<u64>,
    /// Worker threads; unset uses every core.
    pub jobs: Option<usize>,
    pub grid: GridConfig,
    pub study: StudyConfig,
    pub solver: SolverOptions,
    pub beta: BetaCalibration,
    pub fit: FitOptions,
    pub train: TrainOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("kelly-out"),
            seeds: vec![1, 2, 3, 4, 5],
            jobs: None,
            grid: GridConfig::default(),
            study: StudyConfig::default(),
            solver: SolverOptions::default(),
            beta: BetaCalibration::default(),
            fit: FitOptions::default(),
            train: TrainOptions::default(),
        }
    }
}

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub jobs: Option<usize>,
    pub scale: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
                toml::from_str(&text).map_err(|e| CliError::format(p, e))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(j) = overrides.jobs {
            cfg.jobs = Some(j);
        }
        if let Some(s) = overrides.scale {
            cfg.grid.scale = s;
        }
        if let Some(s) = overrides.seed {
            let k = cfg.seeds.len().max(1) as u64;
            cfg.seeds = (0..k).map(|i| s.wrapping_add(i)).collect();
        }
        if let Some(o) = &overrides.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Usage(format!("invalid config: {m}")));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if !(self.grid.scale > 0.0 && self.grid.scale.is_finite()) {
            return bad(format!("scale {} must be positive", self.grid.scale));
        }
        if self.grid.regimes.is_empty() || self.grid.variance_levels.is_empty() {
            return bad("grid needs at least one regime and one variance level".into());
        }
        if self.grid.validation_n == 0 || self.grid.n_list.contains(&0) {
            return bad("instance sizes must be positive".into());
        }
        if self.study.divisions == 0 {
            return bad("divisions must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.study.percentile) {
            return bad(format!("percentile {} outside [0, 1]", self.study.percentile));
        }
        if self.study.stepwise_sizes.iter().any(|&n| n == 0 || n > self.grid.validation_n) {
            return bad(format!("stepwise sizes {:?} must lie in 1..={}", self.study.stepwise_sizes, self.grid.validation_n));
        }
        Ok(())
    }

    pub fn generation_seed(&self) -> u64 {
        self.seeds[0]
    }

    pub fn bounds_options(&self) -> BoundsOptions {
        BoundsOptions { solver: self.solver.clone(), warm_start: self.study.warm_start, ..Default::default() }
    }

    pub fn instances_dir(&self) -> PathBuf {
        self.out.join("instances")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out.join("manifest.csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_study_grid() {
        let c = ExperimentConfig::default();
        assert_eq!(c.grid.n_list, vec![20, 40, 60, 80, 100, 120, 140, 160, 180, 200]);
        assert_eq!(c.grid.validation_n, 10);
        assert_eq!(c.grid.instances_per_cell(), 1000);
        assert_eq!(c.seeds.len(), 5);
        let scaled = GridConfig { scale: 0.05, ..Default::default() };
        assert_eq!(scaled.instances_per_cell(), 50);
    }

    #[test]
    fn toml_round_trip_and_overrides() {
        let text = r#"
            out = "runs/a"
            seeds = [10, 11]
            [grid]
            regimes = ["Normal", "GND6"]
            n_list = [20, 40]
            instances = 40
        "#;
        let c: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(c.grid.regimes, vec![Regime::Normal, Regime::Gnd6]);
        assert_eq!(c.grid.variance_levels.len(), 3);
        let back: ExperimentConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, text).unwrap();
        let o = Overrides { scale: Some(0.5), seed: Some(100), jobs: Some(2), out: None };
        let c = ExperimentConfig::load(Some(&path), &o).unwrap();
        assert_eq!(c.grid.instances_per_cell(), 20);
        assert_eq!(c.seeds, vec![100, 101]);
        assert_eq!(c.jobs, Some(2));
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1").is_err());
        let c = ExperimentConfig { seeds: vec![], ..Default::default() };
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.study.stepwise_sizes = vec![11];
        assert!(c.validate().is_err());
    }
}
