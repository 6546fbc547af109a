use std::path::Path;

use kelly_core::bounds::{bounds_profile, greedy_lower, n_grid, upper_bound, BoundsOptions, BoundsProfile, ProfileEntry};
use kelly_core::Bet;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::files::{csv_bytes, load_instance, read_csv};

pub const KIND: &str = "bounds";

/// Subproblem sizes: `N/<k>` for increments of `N/k`, `all`, or a comma list.
pub fn parse_n_grid(spec: &str, n_total: usize) -> Result<Vec<usize>> {
    let spec = spec.trim();
    let bad = || CliError::Usage(format!("bad --n-grid `{spec}`; expected `N/<k>`, `all` or a list like `1,2,5`"));
    if spec == "all" {
        return Ok((1..=n_total).collect());
    }
    if let Some(k) = spec.strip_prefix("N/") {
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        return Ok(n_grid(n_total, k));
    }
    let mut v = spec.split(',').map(|s| s.trim().parse::<usize>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
    v.sort_unstable();
    v.dedup();
    if v.first() == Some(&0) || v.last().is_some_and(|&n| n > n_total) {
        return Err(CliError::Usage(format!("--n-grid sizes must lie in 1..={n_total}")));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub n: usize,
    #[serde(rename = "N")]
    pub n_total: usize,
    pub x: f64,
    pub f_lower: f64,
    pub f_upper: f64,
    pub shortfall: f64,
    /// Selected bet indices joined by `;`.
    pub selected: String,
}

pub fn rows(profile: &BoundsProfile) -> Vec<BoundsRow> {
    profile.entries.iter().map(|e| row(profile.n_total, e)).collect()
}

fn row(n_total: usize, e: &ProfileEntry) -> BoundsRow {
    BoundsRow {
        n: e.n,
        n_total,
        x: e.x,
        f_lower: e.f_lower,
        f_upper: e.f_upper,
        shortfall: e.shortfall,
        selected: e.selected.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";"),
    }
}

pub fn to_csv(rows: &[BoundsRow]) -> Result<Vec<u8>> {
    csv_bytes(KIND, rows)
}

pub fn read_rows(path: &Path) -> Result<Vec<BoundsRow>> {
    read_csv(path, KIND)
}

/// Walk the grid upward and stop at the first size whose shortfall reaches `target`.
pub fn until_target(bets: &[Bet], sizes: &[usize], target: f64, opts: &BoundsOptions) -> Result<Vec<BoundsRow>> {
    let n_total = bets.len();
    let mut out = Vec::new();
    let mut sizes = sizes.to_vec();
    if sizes.last() != Some(&n_total) {
        sizes.push(n_total);
    }
    for &n in &sizes {
        let lower = greedy_lower(bets, n, opts)?;
        let f_upper = if n < n_total { upper_bound(bets, n, opts)? } else { lower.f_lower };
        let e = ProfileEntry {
            n,
            x: n as f64 / n_total as f64,
            f_lower: lower.f_lower,
            f_upper,
            shortfall: lower.f_lower / f_upper,
            selected: lower.selected,
        };
        let done = e.shortfall >= target || n == n_total;
        out.push(row(n_total, &e));
        if done {
            break;
        }
    }
    Ok(out)
}

pub fn run(instance: &Path, grid: &str, target_gap: Option<f64>, opts: &BoundsOptions) -> Result<Vec<BoundsRow>> {
    let inst = load_instance(instance)?;
    let sizes = parse_n_grid(grid, inst.n())?;
    match target_gap {
        Some(t) if !(t > 0.0 && t <= 1.0) => Err(CliError::Usage(format!("--target-gap {t} must lie in (0, 1]"))),
        Some(t) => until_target(&inst.bets, &sizes, t, opts),
        None => Ok(rows(&bounds_profile(&inst.bets, &sizes, opts)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_specs() {
        assert_eq!(parse_n_grid("N/20", 40).unwrap(), (1..=20).map(|k| 2 * k).collect::<Vec<_>>());
        assert_eq!(parse_n_grid("all", 3).unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_n_grid("5, 1,2,2", 10).unwrap(), vec![1, 2, 5]);
        assert!(parse_n_grid("0,1", 10).is_err());
        assert!(parse_n_grid("11", 10).is_err());
        assert!(parse_n_grid("N/0", 10).is_err());
        assert!(parse_n_grid("half", 10).is_err());
    }
}
