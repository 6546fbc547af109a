pub mod bounds;
pub mod gen;
pub mod scaling;
pub mod solve;
pub mod validate;

use std::collections::BTreeMap;

use kelly_core::{ProblemInstance, Regime, VarianceLevel};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::files::{load_instance, read_manifest, ManifestRow};

pub(crate) type CellKey = (Regime, VarianceLevel, usize);

/// Manifest rows with a size accepted by `keep`, grouped by cell and sorted by index.
pub(crate) fn cells(cfg: &ExperimentConfig, keep: impl Fn(usize) -> bool) -> Result<BTreeMap<CellKey, Vec<ManifestRow>>> {
    let mut out: BTreeMap<CellKey, Vec<ManifestRow>> = BTreeMap::new();
    for row in read_manifest(&cfg.out)? {
        if keep(row.n) && cfg.grid.regimes.contains(&row.regime) && cfg.grid.variance_levels.contains(&row.variance_level) {
            out.entry((row.regime, row.variance_level, row.n)).or_default().push(row);
        }
    }
    for rows in out.values_mut() {
        rows.sort_by_key(|r| r.index);
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("no matching instances listed in {}", cfg.manifest_path().display())));
    }
    Ok(out)
}

pub(crate) fn load(cfg: &ExperimentConfig, row: &ManifestRow) -> Result<ProblemInstance> {
    load_instance(&cfg.out.join(&row.path))
}

pub(crate) fn cell_name((regime, level, n): CellKey) -> String {
    format!("{}_{}_N{n}", regime.name(), level.name())
}
