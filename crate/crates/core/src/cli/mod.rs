//! Experiment configuration, the experiment runner and metric emission,
//! plus the argument handling behind the `fedtune` binary.

mod config;
mod emit;
mod runner;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{
    apply_override, parse_seed_list, AdaptiveConfig, DatasetConfig, DatasetKind, ExperimentConfig, FederationConfig,
    HalvingConfig, ModelConfig, SamplerKind, ScheduleConfig, SearchSpaceConfig, SpacePreset, SEED_ENV,
};
pub use emit::{
    emit_metrics, ensure_writable, fmt_f64, report_json, CHECKPOINT_DIR, CURVES_CSV, EVENTS_JSONL, FEEDBACK_JSONL,
    REPORT_JSON, TRIALS_CSV,
};
pub use runner::{
    compare_makespan, run_experiment, ExperimentReport, MakespanComparison, SeedReport, TrialRow, TrialStatus,
};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
/// Invalid arguments or configuration.
pub const EXIT_CONFIG: i32 = 2;
/// The run itself failed (I/O, data, numerics).
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fedtune", version, about = "Hyperparameter optimization for simulated federated learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write its metric files.
    Run(ConfigArgs),
    /// Check a configuration without running it.
    Validate(ConfigArgs),
    /// Print the low-fidelity grid of the configured search space.
    Grid(ConfigArgs),
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// Experiment configuration (TOML).
    pub config: PathBuf,
    /// Override a configuration value, e.g. `--set federation.alpha=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> crate::Result<ExperimentConfig> {
        let env_seed = std::env::var(SEED_ENV).ok();
        ExperimentConfig::load(&self.config, &self.sets, env_seed.as_deref())
    }
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

/// Execute a parsed command, writing human-readable output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> crate::Result<()> {
    let io = |e| Error::io("stdout", e);
    match &cli.command {
        Command::Validate(args) => {
            let cfg = args.load()?;
            let space = cfg.space()?;
            writeln!(
                out,
                "ok: {} sampler, {} configs x {} rounds, {} seed(s), {} configurations on the grid",
                cfg.sampler.as_str(),
                cfg.budget_configs,
                cfg.rounds_per_trial,
                cfg.seeds.len(),
                space.cardinality()
            )
            .map_err(io)?;
        }
        Command::Grid(args) => {
            let space = args.load()?.space()?;
            for d in &space.dims {
                let g = d.grid();
                let values: Vec<String> = g.iter().map(|v| fmt_f64(*v)).collect();
                writeln!(out, "{} [{} points]: {}", d.name, g.len(), values.join(", ")).map_err(io)?;
            }
            writeln!(out, "cardinality: {}", space.cardinality()).map_err(io)?;
        }
        Command::Run(args) => {
            let cfg = args.load()?;
            ensure_writable(&cfg.output_dir)?;
            let report = run_experiment(&cfg)?;
            let files = emit_metrics(&report, &cfg.output_dir)?;
            for s in &report.seeds {
                match s.best_row() {
                    Some(b) => writeln!(
                        out,
                        "seed {}: best {} objective {} accuracy {}",
                        s.seed,
                        b.config_id,
                        fmt_f64(b.objective),
                        fmt_f64(b.accuracy)
                    ),
                    None => writeln!(out, "seed {}: every trial failed", s.seed),
                }
                .map_err(io)?;
            }
            writeln!(out, "wrote {} files to {}", files.len(), cfg.output_dir.display()).map_err(io)?;
        }
    }
    Ok(())
}
