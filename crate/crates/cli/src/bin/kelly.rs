use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kelly_cli::commands::{bounds, gen, scaling, solve, validate};
use kelly_cli::files::{to_json, write_atomic};
use kelly_cli::{CliError, ExperimentConfig, Overrides, Result};
use kelly_core::{par, Method};

#[derive(Parser)]
#[command(name = "kelly", version, about = "Kelly portfolio experiments over many independent binary bets")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Multiply instances per cell by this factor.
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Base seed; replaces the config's seed list with consecutive values.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for experiments, or output file for `solve` and `bounds`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the instance grid and its manifest.
    Gen,
    /// Solve one instance file.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value = "auto")]
        method: Method,
    },
    /// Lower/upper bound profile of one instance.
    Bounds {
        instance: PathBuf,
        #[arg(long, default_value = "N/20")]
        n_grid: String,
        /// Stop once the shortfall ratio reaches this value.
        #[arg(long)]
        target_gap: Option<f64>,
    },
    /// Compare the transform solver with enumeration, and greedy with stepwise bounds.
    Validate,
    /// Bound profiles, sigmoid fits and the parameter model.
    Scaling,
}

fn emit(out: Option<&Path>, force: bool, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) if p.exists() && !force => Err(CliError::Usage(format!("{} exists; pass --force to overwrite", p.display()))),
        Some(p) => write_atomic(p, bytes),
        None => std::io::stdout().write_all(bytes).map_err(CliError::io("<stdout>")),
    }
}

fn run(cli: Cli) -> Result<()> {
    let file_out = matches!(cli.command, Command::Solve { .. } | Command::Bounds { .. });
    let overrides = Overrides {
        jobs: cli.jobs,
        scale: cli.scale,
        seed: cli.seed,
        out: if file_out { None } else { cli.out.clone() },
    };
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    let force = cli.force;
    let out = cli.out.clone();
    par::with_jobs(cfg.jobs, move || match cli.command {
        Command::Gen => gen::run(&cfg, force).map(|m| eprintln!("wrote {} instances to {}", m.len(), cfg.out.display())),
        Command::Solve { instance, method } => {
            let r = solve::run(&instance, method, &cfg.solver)?;
            emit(out.as_deref(), force, &to_json(&r))
        }
        Command::Bounds { instance, n_grid, target_gap } => {
            let rows = bounds::run(&instance, &n_grid, target_gap, &cfg.bounds_options())?;
            emit(out.as_deref(), force, &bounds::to_csv(&rows)?)
        }
        Command::Validate => validate::run(&cfg).map(|v| {
            for r in &v.oracle {
                eprintln!(
                    "{}/{}: rel df {:.2e}, leverage {:.2e}, cosine {:.2e}, re-eval {:.2e}",
                    r.regime, r.variance_level, r.max_rel_df, r.max_d_leverage, r.max_cos_diff, r.max_reeval_diff
                );
            }
        }),
        Command::Scaling => scaling::run(&cfg).map(|s| {
            eprintln!(
                "{} curves: fit median R2 {:.5}, model test median R2 {:.4}, collapse deviation {:.2e}",
                s.records, s.fit_median_r2, s.model_test_median_r2, s.collapse_median_abs_dev
            );
        }),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap reports usage errors with status 2, which our contract reserves for capacity
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
