use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KellyError, Result};
use crate::types::{Regime, VarianceLevel};

use super::features::FeatureVector;
use super::fit::SigmoidFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One instance's shortfall curve, its best fit and its summary features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub regime: Regime,
    pub variance_level: VarianceLevel,
    #[serde(rename = "N")]
    pub n_total: usize,
    pub index: u64,
    pub features: FeatureVector,
    pub curve: Vec<(f64, f64)>,
    pub fit: SigmoidFit,
}

impl ScalingRecord {
    pub fn problem_type(&self) -> (Regime, VarianceLevel, usize) {
        (self.regime, self.variance_level, self.n_total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingDataset {
    pub seed: u64,
    pub records: Vec<ScalingRecord>,
    pub splits: Vec<Split>,
}

impl ScalingDataset {
    pub fn part(&self, split: Split) -> Vec<&ScalingRecord> {
        self.records.iter().zip(&self.splits).filter(|(_, &s)| s == split).map(|(r, _)| r).collect()
    }
}

pub const MIN_PER_TYPE: usize = 7;

/// `(train, val, test)` counts for `n` records.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (0.60 * n as f64).round() as usize;
    let val = (0.25 * n as f64).round() as usize;
    (train, val, n - train - val)
}

/// 60/25/15 split within each (regime, variance level, N) type.
pub fn split_dataset(records: Vec<ScalingRecord>, seed: u64) -> Result<ScalingDataset> {
    let mut groups: BTreeMap<(Regime, VarianceLevel, usize), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.problem_type()).or_default().push(i);
    }
    let mut splits = vec![Split::Train; records.len()];
    for ((regime, level, n), mut idx) in groups {
        if idx.len() < MIN_PER_TYPE {
            return Err(KellyError::Config(format!(
                "{regime}/{level}/N={n} has {} records; splitting needs at least {MIN_PER_TYPE}",
                idx.len()
            )));
        }
        // order by instance index so the split does not depend on record order
        idx.sort_by_key(|&i| records[i].index);
        let key = seed ^ (regime.index() << 48) ^ (level.index() << 40) ^ n as u64;
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(key));
        let (train, val, _) = split_sizes(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            splits[i] = if k < train { Split::Train } else if k < train + val { Split::Val } else { Split::Test };
        }
    }
    Ok(ScalingDataset { seed, records, splits })
}
