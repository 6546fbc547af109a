use std::collections::BTreeMap;
use std::path::PathBuf;

use kelly_core::bounds::{bounds_profile, n_grid, BoundsProfile};
use kelly_core::math::logit;
use kelly_core::par;
use kelly_core::scaling::metrics::{median, summarize, GroupMetrics};
use kelly_core::scaling::{
    collapse_deviations, collapse_transform, compute_features, evaluate_model, fit_sigmoid, split_dataset,
    train_param_model, FeatureVector, LinearParamModel, ScalingRecord, SigmoidFit, SigmoidParams, Split,
};
use serde::{Deserialize, Serialize};

use super::{cell_name, cells, load, CellKey};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::files::{read_json, write_csv, write_json, ManifestRow, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub index: u64,
    pub features: FeatureVector,
    pub profile: BoundsProfile,
    pub fit: Option<SigmoidFit>,
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    schema_version: u32,
    cell: String,
    indices: Vec<u64>,
    entries: Vec<CellEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub group: String,
    pub count: usize,
    pub mean_mse: f64,
    pub median_mae: f64,
    pub median_r2: f64,
    pub median_one_minus_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub seed: String,
    pub group: String,
    pub count: usize,
    pub mean_mse: f64,
    pub median_mae: f64,
    pub median_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub seed: u64,
    pub x: f64,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

/// Per-point figure data: observed, fitted and predicted shortfall plus collapsed coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub regime: String,
    pub variance_level: String,
    #[serde(rename = "N")]
    pub n_total: usize,
    pub index: u64,
    pub split: Split,
    pub x: f64,
    pub y: f64,
    pub y_fit: f64,
    pub y_pred: f64,
    pub z_fit: f64,
    pub y_tilde_fit: f64,
    pub z_pred: f64,
    pub y_tilde_pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub lambda: f64,
    pub val_mse: f64,
    pub test_count: usize,
    pub test_mean_mse: f64,
    pub test_median_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    pub schema_version: u32,
    pub records: usize,
    pub fit_failures: usize,
    pub fit_median_r2: f64,
    pub fit_median_one_minus_r2: f64,
    pub seeds: Vec<SeedSummary>,
    /// Mean over split seeds of the test-set median R².
    pub model_test_median_r2: f64,
    /// Median |y^v - logistic(z)| over test curves of the first split, using best-fit parameters.
    pub collapse_median_abs_dev: f64,
    /// Same, using model-predicted parameters.
    pub collapse_median_abs_dev_pred: f64,
}

fn checkpoint_path(cfg: &ExperimentConfig, key: CellKey) -> PathBuf {
    cfg.out.join("scaling").join("cells").join(format!("{}.json", cell_name(key)))
}

fn run_cell(cfg: &ExperimentConfig, key: CellKey, rows: &[ManifestRow]) -> Result<Vec<CellEntry>> {
    let path = checkpoint_path(cfg, key);
    let indices: Vec<u64> = rows.iter().map(|r| r.index).collect();
    if path.exists() {
        let cp: Checkpoint = read_json(&path)?;
        if cp.schema_version == SCHEMA_VERSION && cp.indices == indices {
            log::info!("scaling: reusing checkpoint {}", path.display());
            return Ok(cp.entries);
        }
    }
    let sizes = n_grid(key.2, cfg.study.divisions);
    let opts = cfg.bounds_options();
    let entries = par::map(rows, |row| -> Result<CellEntry> {
        let inst = load(cfg, row)?;
        let features = compute_features(&inst)?;
        let profile = bounds_profile(&inst.bets, &sizes, &opts).inspect_err(|e| log::error!("scaling: {} failed: {e}", row.path))?;
        let (fit, fit_error) = match fit_sigmoid(&profile.curve(), &cfg.fit) {
            Ok(f) => (Some(f), None),
            Err(e) => {
                log::warn!("scaling: fit failed for {}: {e}", row.path);
                (None, Some(e.to_string()))
            }
        };
        Ok(CellEntry { index: row.index, features, profile, fit, fit_error })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_json(&path, &Checkpoint { schema_version: SCHEMA_VERSION, cell: cell_name(key), indices, entries: entries.clone() })?;
    log::info!("scaling: finished {}", cell_name(key));
    Ok(entries)
}

fn fit_rows(records: &[ScalingRecord]) -> Vec<FitRow> {
    let mut groups: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for r in records {
        groups.entry(format!("{}/{}", r.regime, r.variance_level)).or_default().push(r.fit.metrics);
        groups.entry(format!("N={:03}", r.n_total)).or_default().push(r.fit.metrics);
    }
    let all: Vec<_> = records.iter().map(|r| r.fit.metrics).collect();
    let mut out: Vec<FitRow> = groups.into_iter().map(|(g, ms)| fit_row(summarize(g, &ms))).collect();
    out.push(fit_row(summarize("all".into(), &all)));
    out
}

fn fit_row(g: GroupMetrics) -> FitRow {
    FitRow {
        group: g.group,
        count: g.count,
        mean_mse: g.mean_mse,
        median_mae: g.median_mae,
        median_r2: g.median_r2,
        median_one_minus_r2: 1.0 - g.median_r2,
    }
}

fn model_rows(seed: u64, groups: &[GroupMetrics]) -> Vec<ModelRow> {
    groups
        .iter()
        .map(|g| ModelRow {
            seed: seed.to_string(),
            group: g.group.clone(),
            count: g.count,
            mean_mse: g.mean_mse,
            median_mae: g.median_mae,
            median_r2: g.median_r2,
        })
        .collect()
}

/// Append rows averaging each group's metrics over the split seeds.
fn with_seed_means(mut rows: Vec<ModelRow>) -> Vec<ModelRow> {
    let mut acc: BTreeMap<String, Vec<&ModelRow>> = BTreeMap::new();
    for r in &rows {
        acc.entry(r.group.clone()).or_default().push(r);
    }
    let means: Vec<ModelRow> = acc
        .into_iter()
        .map(|(group, rs)| {
            let k = rs.len() as f64;
            ModelRow {
                seed: "mean".into(),
                group,
                count: rs.iter().map(|r| r.count).sum(),
                mean_mse: rs.iter().map(|r| r.mean_mse).sum::<f64>() / k,
                median_mae: rs.iter().map(|r| r.median_mae).sum::<f64>() / k,
                median_r2: rs.iter().map(|r| r.median_r2).sum::<f64>() / k,
            }
        })
        .collect();
    rows.extend(means);
    rows
}

fn curve_rows(r: &ScalingRecord, split: Split, pred: &SigmoidParams) -> Result<Vec<CurveRow>> {
    let fit = &r.fit.params;
    let cf = collapse_transform(&r.curve, fit)?;
    let cp = collapse_transform(&r.curve, pred)?;
    Ok(r.curve
        .iter()
        .zip(cf.iter().zip(&cp))
        .map(|(&(x, y), (&(zf, yf), &(zp, yp)))| CurveRow {
            regime: r.regime.to_string(),
            variance_level: r.variance_level.to_string(),
            n_total: r.n_total,
            index: r.index,
            split,
            x,
            y,
            y_fit: fit.log_y_at(logit(x)).exp(),
            y_pred: pred.log_y_at(logit(x)).exp(),
            z_fit: zf,
            y_tilde_fit: yf,
            z_pred: zp,
            y_tilde_pred: yp,
        })
        .collect())
}

pub fn run(cfg: &ExperimentConfig) -> Result<ScalingSummary> {
    let n_list = cfg.grid.n_list.clone();
    let grid = cells(cfg, |n| n_list.contains(&n))?;
    let mut records = Vec::new();
    let mut fit_failures = 0;
    for (key, rows) in &grid {
        for e in run_cell(cfg, *key, rows)? {
            match e.fit {
                Some(fit) => records.push(ScalingRecord {
                    regime: key.0,
                    variance_level: key.1,
                    n_total: key.2,
                    index: e.index,
                    features: e.features,
                    curve: e.profile.curve(),
                    fit,
                }),
                None => fit_failures += 1,
            }
        }
    }
    let dir = cfg.out.join("scaling");
    write_csv(&dir.join("fit_quality.csv"), "fit-quality", &fit_rows(&records))?;
    let fit_r2: Vec<f64> = records.iter().map(|r| r.fit.metrics.r2).collect();

    let (mut by_regime, mut by_n, mut by_x, mut seeds) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut curves = Vec::new();
    let (mut collapse_fit, mut collapse_pred) = (Vec::new(), Vec::new());
    for (k, &seed) in cfg.seeds.iter().enumerate() {
        let ds = split_dataset(records.clone(), seed)?;
        let model: LinearParamModel = train_param_model(&ds, &cfg.train)?;
        write_json(&dir.join(format!("model_seed{seed}.json")), &model)?;
        let test = ds.part(Split::Test);
        let m = evaluate_model(&model, &test)?;
        by_regime.extend(model_rows(seed, &m.by_regime));
        by_n.extend(model_rows(seed, &m.by_n));
        by_n.extend(model_rows(seed, std::slice::from_ref(&m.overall)));
        by_x.extend(m.by_x.iter().map(|e| PointRow {
            seed,
            x: e.x,
            count: e.count,
            mean: e.mean,
            median: e.median,
            q10: e.q10,
            q90: e.q90,
        }));
        seeds.push(SeedSummary {
            seed,
            lambda: model.lambda,
            val_mse: model.val_mse,
            test_count: test.len(),
            test_mean_mse: m.overall.mean_mse,
            test_median_r2: m.overall.median_r2,
        });
        if k == 0 {
            for (r, &split) in ds.records.iter().zip(&ds.splits) {
                let pred = model.predict(&r.features);
                let rows = curve_rows(r, split, &pred)?;
                if split == Split::Test {
                    collapse_fit.extend(collapse_deviations(&rows.iter().map(|c| (c.z_fit, c.y_tilde_fit)).collect::<Vec<_>>()));
                    collapse_pred.extend(collapse_deviations(&rows.iter().map(|c| (c.z_pred, c.y_tilde_pred)).collect::<Vec<_>>()));
                }
                curves.extend(rows);
            }
        }
        log::info!("scaling: split seed {seed}: lambda {:e}, test median R2 {:.5}", model.lambda, m.overall.median_r2);
    }
    write_csv(&dir.join("model_by_regime.csv"), "model-by-regime", &with_seed_means(by_regime))?;
    write_csv(&dir.join("model_by_n.csv"), "model-by-n", &with_seed_means(by_n))?;
    write_csv(&dir.join("errors_by_x.csv"), "errors-by-x", &by_x)?;
    write_csv(&dir.join("curves.csv"), "curves", &curves)?;

    let fit_median_r2 = median(&fit_r2);
    let summary = ScalingSummary {
        schema_version: SCHEMA_VERSION,
        records: records.len(),
        fit_failures,
        fit_median_r2,
        fit_median_one_minus_r2: 1.0 - fit_median_r2,
        model_test_median_r2: seeds.iter().map(|s| s.test_median_r2).sum::<f64>() / seeds.len() as f64,
        seeds,
        collapse_median_abs_dev: median(&collapse_fit),
        collapse_median_abs_dev_pred: median(&collapse_pred),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
