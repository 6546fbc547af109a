use std::path::{Path, PathBuf};

use kelly_core::datagen::{calibrate_beta_concentration, gen_instance};
use kelly_core::{par, Regime, VarianceLevel};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::files::{save_instance, write_csv, ManifestRow};

/// Relative path of one instance file under the output directory.
pub fn instance_path(regime: Regime, level: VarianceLevel, n: usize, index: u64) -> PathBuf {
    Path::new("instances").join(regime.name()).join(level.name()).join(format!("N{n}")).join(format!("{index:05}.json"))
}

/// Output paths `gen --force` may clear.
const OWNED: [&str; 4] = ["instances", "manifest.csv", "validation", "scaling"];

fn prepare_out(out: &Path, force: bool) -> Result<()> {
    let nonempty = out.is_dir() && std::fs::read_dir(out).map_err(CliError::io(out))?.next().is_some();
    if nonempty && !force {
        return Err(CliError::Usage(format!("{} is not empty; pass --force to overwrite", out.display())));
    }
    if nonempty {
        for name in OWNED {
            let p = out.join(name);
            if p.is_dir() {
                std::fs::remove_dir_all(&p).map_err(CliError::io(&p))?;
            } else if p.exists() {
                std::fs::remove_file(&p).map_err(CliError::io(&p))?;
            }
        }
    }
    std::fs::create_dir_all(out).map_err(CliError::io(out))
}

/// Write every instance of the grid plus a manifest.
pub fn run(cfg: &ExperimentConfig, force: bool) -> Result<Vec<ManifestRow>> {
    prepare_out(&cfg.out, force)?;
    let seed = cfg.generation_seed();
    let count = cfg.grid.instances_per_cell() as u64;
    let mut manifest = Vec::new();
    for &regime in &cfg.grid.regimes {
        for &level in &cfg.grid.variance_levels {
            let kappa = match regime {
                Regime::Beta => Some(calibrate_beta_concentration(level, &cfg.beta)?),
                _ => None,
            };
            for n in cfg.grid.all_sizes() {
                let indices: Vec<u64> = (0..count).collect();
                let rows = par::map(&indices, |&index| -> Result<ManifestRow> {
                    let inst = gen_instance(regime, level, n, seed, index, kappa)?;
                    let rel = instance_path(regime, level, n, index);
                    save_instance(&cfg.out.join(&rel), &inst)?;
                    Ok(ManifestRow {
                        path: rel.to_string_lossy().replace('\\', "/"),
                        regime,
                        variance_level: level,
                        n,
                        index,
                        seed,
                        kappa,
                    })
                });
                for r in rows {
                    manifest.push(r?);
                }
                log::info!("generated {count} instances for {regime}/{level}/N={n}");
            }
        }
    }
    write_csv(&cfg.manifest_path(), "manifest", &manifest)?;
    Ok(manifest)
}
