use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use crate::error::{KellyError, Result};
use crate::math::logit;
use crate::types::{Regime, VarianceLevel};

use super::dataset::ScalingRecord;
use super::fit::FitMetrics;
use super::model::LinearParamModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub regime: Regime,
    pub variance_level: VarianceLevel,
    #[serde(rename = "N")]
    pub n_total: usize,
    pub index: u64,
    pub metrics: FitMetrics,
}

/// Aggregate over a group of curves: mean MSE, median MAE, median R².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: String,
    pub count: usize,
    pub mean_mse: f64,
    pub median_mae: f64,
    pub median_r2: f64,
}

/// Distribution of `log y - log ŷ` at one relative size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointErrors {
    pub x: f64,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub overall: GroupMetrics,
    pub by_regime: Vec<GroupMetrics>,
    pub by_n: Vec<GroupMetrics>,
    pub by_x: Vec<PointErrors>,
    pub records: Vec<RecordMetrics>,
}

pub fn median(xs: &[f64]) -> f64 {
    Data::new(xs.to_vec()).median()
}

pub fn quantile(xs: &[f64], tau: f64) -> f64 {
    Data::new(xs.to_vec()).quantile(tau)
}

pub fn summarize(group: String, ms: &[FitMetrics]) -> GroupMetrics {
    let mse: Vec<f64> = ms.iter().map(|m| m.mse).collect();
    let mae: Vec<f64> = ms.iter().map(|m| m.mae).collect();
    let r2: Vec<f64> = ms.iter().map(|m| m.r2).collect();
    GroupMetrics {
        group,
        count: ms.len(),
        mean_mse: mse.iter().sum::<f64>() / ms.len() as f64,
        median_mae: median(&mae),
        median_r2: median(&r2),
    }
}

/// Per-curve metrics of model predictions, aggregated by regime and by `N`.
pub fn evaluate_model(model: &LinearParamModel, records: &[&ScalingRecord]) -> Result<ModelMetrics> {
    if records.is_empty() {
        return Err(KellyError::Input("no records to evaluate".into()));
    }
    let mut per = Vec::with_capacity(records.len());
    let mut by_x: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let p = model.predict(&r.features);
        let log_y: Vec<f64> = r.curve.iter().map(|&(_, y)| y.ln()).collect();
        let pred: Vec<f64> = r.curve.iter().map(|&(x, _)| p.log_y_at(logit(x))).collect();
        for ((&(x, _), ly), lp) in r.curve.iter().zip(&log_y).zip(&pred) {
            by_x.entry((x * 1e9).round() as u64).or_insert_with(|| (x, Vec::new())).1.push(ly - lp);
        }
        per.push(RecordMetrics {
            regime: r.regime,
            variance_level: r.variance_level,
            n_total: r.n_total,
            index: r.index,
            metrics: FitMetrics::from_log_residuals(&log_y, &pred),
        });
    }
    let mut regimes: BTreeMap<(Regime, VarianceLevel), Vec<FitMetrics>> = BTreeMap::new();
    let mut sizes: BTreeMap<usize, Vec<FitMetrics>> = BTreeMap::new();
    for m in &per {
        regimes.entry((m.regime, m.variance_level)).or_default().push(m.metrics);
        sizes.entry(m.n_total).or_default().push(m.metrics);
    }
    let all: Vec<FitMetrics> = per.iter().map(|m| m.metrics).collect();
    Ok(ModelMetrics {
        overall: summarize("all".into(), &all),
        by_regime: regimes.into_iter().map(|((r, l), ms)| summarize(format!("{r}/{l}"), &ms)).collect(),
        by_n: sizes.into_iter().map(|(n, ms)| summarize(format!("N={n}"), &ms)).collect(),
        by_x: by_x
            .into_values()
            .map(|(x, e)| PointErrors {
                x,
                count: e.len(),
                mean: e.iter().sum::<f64>() / e.len() as f64,
                median: median(&e),
                q10: quantile(&e, 0.1),
                q90: quantile(&e, 0.9),
            })
            .collect(),
        records: per,
    })
}
