use std::path::PathBuf;

use kelly_core::bounds::{greedy_lower_sequence, stepwise_lower};
use kelly_core::exhaustive::{enumerate_scenarios, eval_f_exhaustive, solve_exhaustive};
use kelly_core::scaling::metrics::quantile;
use kelly_core::transform::solve_itm;
use kelly_core::{par, KellyError};
use serde::{Deserialize, Serialize};

use super::{cell_name, cells, load, CellKey};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::files::{read_json, write_csv, write_json, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiff {
    pub n: usize,
    pub f_stepwise: f64,
    pub f_greedy: f64,
    pub rel_diff: f64,
}

/// Oracle comparison for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceCheck {
    pub index: u64,
    pub f_exhaustive: f64,
    pub f_itm: f64,
    pub rel_df: f64,
    pub d_leverage: f64,
    pub cos_diff: f64,
    pub reeval_diff: f64,
    pub steps: Vec<StepDiff>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    schema_version: u32,
    cell: String,
    indices: Vec<u64>,
    checks: Vec<InstanceCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub regime: String,
    pub variance_level: String,
    pub instances: usize,
    pub max_rel_df: f64,
    pub max_d_leverage: f64,
    pub max_cos_diff: f64,
    pub max_reeval_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub regime: String,
    pub variance_level: String,
    pub n: usize,
    pub instances: usize,
    pub percentile: f64,
    pub rel_diff_at_percentile: f64,
    pub max_rel_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub oracle: Vec<OracleRow>,
    pub steps: Vec<StepRow>,
}

fn cosine_diff(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 && nb == 0.0 {
        0.0
    } else {
        1.0 - dot / (na * nb)
    }
}

pub fn check_instance(cfg: &ExperimentConfig, bets: &[kelly_core::Bet], index: u64) -> std::result::Result<InstanceCheck, KellyError> {
    let ex = solve_exhaustive(bets, &cfg.solver.exhaustive)?;
    let itm = solve_itm(bets, &cfg.solver.transform)?.result;
    let table = enumerate_scenarios(bets, cfg.solver.exhaustive.cap)?;
    let reeval = eval_f_exhaustive(&table, &itm.portfolio)?;
    let opts = cfg.bounds_options();
    let max_step = cfg.study.stepwise_sizes.iter().copied().max().unwrap_or(0);
    let stepwise = stepwise_lower(bets, max_step, &opts)?;
    let greedy = greedy_lower_sequence(bets, &cfg.study.stepwise_sizes, &opts)?;
    let steps = cfg
        .study
        .stepwise_sizes
        .iter()
        .zip(&greedy)
        .map(|(&n, g)| {
            let s = stepwise[n - 1].f_lower;
            StepDiff { n, f_stepwise: s, f_greedy: g.f_lower, rel_diff: (s - g.f_lower).abs() / s.abs() }
        })
        .collect();
    Ok(InstanceCheck {
        index,
        f_exhaustive: ex.f_star,
        f_itm: itm.f_star,
        rel_df: (itm.f_star - ex.f_star).abs() / ex.f_star.abs(),
        d_leverage: (itm.leverage() - ex.leverage()).abs(),
        cos_diff: cosine_diff(&itm.portfolio.w, &ex.portfolio.w),
        reeval_diff: (itm.f_star - reeval).abs(),
        steps,
    })
}

fn checkpoint_path(cfg: &ExperimentConfig, key: CellKey) -> PathBuf {
    cfg.out.join("validation").join("cells").join(format!("{}.json", cell_name(key)))
}

fn run_cell(cfg: &ExperimentConfig, key: CellKey, rows: &[crate::files::ManifestRow]) -> Result<Vec<InstanceCheck>> {
    let path = checkpoint_path(cfg, key);
    let indices: Vec<u64> = rows.iter().map(|r| r.index).collect();
    if path.exists() {
        let cp: Checkpoint = read_json(&path)?;
        if cp.schema_version == SCHEMA_VERSION && cp.indices == indices {
            log::info!("validation: reusing checkpoint {}", path.display());
            return Ok(cp.checks);
        }
    }
    let checks = par::map(rows, |row| -> Result<InstanceCheck> {
        let inst = load(cfg, row)?;
        check_instance(cfg, &inst.bets, row.index).map_err(|e| {
            log::error!("validation: {} failed: {e}", row.path);
            CliError::from(e)
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_json(&path, &Checkpoint { schema_version: SCHEMA_VERSION, cell: cell_name(key), indices, checks: checks.clone() })?;
    log::info!("validation: finished {}", cell_name(key));
    Ok(checks)
}

fn oracle_row(regime: String, level: String, checks: &[&InstanceCheck]) -> OracleRow {
    let max = |f: fn(&InstanceCheck) -> f64| checks.iter().map(|c| f(c)).fold(0.0, f64::max);
    OracleRow {
        regime,
        variance_level: level,
        instances: checks.len(),
        max_rel_df: max(|c| c.rel_df),
        max_d_leverage: max(|c| c.d_leverage),
        max_cos_diff: max(|c| c.cos_diff),
        max_reeval_diff: max(|c| c.reeval_diff),
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Validation> {
    let n = cfg.grid.validation_n;
    let grid = cells(cfg, |m| m == n)?;
    let mut oracle = Vec::new();
    let mut steps = Vec::new();
    let mut all = Vec::new();
    for (key, rows) in &grid {
        let checks = run_cell(cfg, *key, rows)?;
        let (regime, level) = (key.0.name().to_string(), key.1.name().to_string());
        let refs: Vec<&InstanceCheck> = checks.iter().collect();
        oracle.push(oracle_row(regime.clone(), level.clone(), &refs));
        for (j, &size) in cfg.study.stepwise_sizes.iter().enumerate() {
            let d: Vec<f64> = checks.iter().map(|c| c.steps[j].rel_diff).collect();
            steps.push(StepRow {
                regime: regime.clone(),
                variance_level: level.clone(),
                n: size,
                instances: d.len(),
                percentile: cfg.study.percentile,
                rel_diff_at_percentile: quantile(&d, cfg.study.percentile),
                max_rel_diff: d.iter().copied().fold(0.0, f64::max),
            });
        }
        all.extend(checks);
    }
    let refs: Vec<&InstanceCheck> = all.iter().collect();
    oracle.push(oracle_row("all".into(), "all".into(), &refs));
    let dir = cfg.out.join("validation");
    write_csv(&dir.join("oracle.csv"), "oracle", &oracle)?;
    write_csv(&dir.join("greedy_stepwise.csv"), "greedy-stepwise", &steps)?;
    Ok(Validation { oracle, steps })
}
