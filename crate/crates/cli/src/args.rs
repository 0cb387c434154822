//! Command-line flags and their merge into a [`RunConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use cqreg::harness::Mode;

use crate::commands;
use crate::config::{GenConfig, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "cqreg",
    version,
    about = "Inequality-constrained quantile regression inference"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Constrained quantile regression fit.
    Fit(Common),
    /// Projected multiplier bootstrap confidence intervals.
    Ci(Common),
    /// Bootstrap LR and rank-based tests of the `tested` coefficients.
    Test(Common),
    /// Monte Carlo experiment over a simulation setting.
    Simulate(SimulateArgs),
    /// Write one simulated dataset as CSV.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV, overriding the config.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bootstrap replicates.
    #[arg(long = "B")]
    pub b: Option<usize>,
    /// Block size; selected by minimum volatility when absent.
    #[arg(long)]
    pub m: Option<usize>,
    /// Kernel bandwidth; cross-validated when absent.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Clip interval ends at single-coefficient constraint bounds.
    #[arg(long)]
    pub clip_ci: bool,
    /// Also write replicates.csv.
    #[arg(long)]
    pub dump_replicates: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub setting: Option<u8>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Monte Carlo replications.
    #[arg(long)]
    pub reps: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub setting: Option<u8>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub beta0: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown mode '{s}' (type_i, coverage, power)"))
}

/// Loads the config file, if any, and lets flags override it.
pub fn merge(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if common.input.is_some() {
        cfg.input = common.input.clone();
    }
    if common.tau.is_some() {
        cfg.tau = common.tau;
    }
    if common.alpha.is_some() {
        cfg.alpha = common.alpha;
    }
    if common.b.is_some() {
        cfg.b = common.b;
    }
    if common.m.is_some() {
        cfg.m = common.m;
    }
    if common.h.is_some() {
        cfg.h = common.h;
    }
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.output_dir.is_some() {
        cfg.output_dir = common.output_dir.clone();
    }
    cfg.clip_ci |= common.clip_ci;
    cfg.dump_replicates |= common.dump_replicates;
    Ok(cfg)
}

pub fn run(cli: Cli) -> CliResult<PathBuf> {
    match cli.command {
        Command::Fit(c) => commands::cmd_fit(&merge(&c)?.resolved()),
        Command::Ci(c) => commands::cmd_ci(&merge(&c)?.resolved()),
        Command::Test(c) => commands::cmd_test(&merge(&c)?.resolved()),
        Command::Simulate(a) => {
            let mut cfg = merge(&a.common)?;
            match (&mut cfg.simulate, a.mode, a.setting, a.n) {
                (Some(plan), ..) => {
                    plan.mode = a.mode.unwrap_or(plan.mode);
                    plan.setting = a.setting.unwrap_or(plan.setting);
                    if let Some(n) = a.n {
                        plan.n = vec![n];
                    }
                    plan.reps = a.reps.unwrap_or(plan.reps);
                }
                (None, Some(mode), Some(setting), Some(n)) => {
                    cfg.simulate = Some(commands::plan_from_flags(
                        mode,
                        setting,
                        n,
                        a.reps.unwrap_or(500),
                    ));
                }
                (None, ..) => {
                    return Err(CliError::Config(
                        "simulate needs a 'simulate' plan or --mode, --setting and --n".into(),
                    ))
                }
            }
            commands::cmd_simulate(&cfg)
        }
        Command::Gen(a) => {
            let mut cfg = merge(&a.common)?;
            let gen = match (cfg.gen.take(), a.setting, a.n) {
                (Some(g), ..) => GenConfig {
                    setting: a.setting.unwrap_or(g.setting),
                    n: a.n.unwrap_or(g.n),
                    beta0: a.beta0.unwrap_or(g.beta0),
                    beta1: a.beta1.unwrap_or(g.beta1),
                },
                (None, Some(setting), Some(n)) => GenConfig {
                    setting,
                    n,
                    beta0: a.beta0.unwrap_or(1.0),
                    beta1: a.beta1.unwrap_or(0.0),
                },
                (None, ..) => {
                    return Err(CliError::Config(
                        "gen needs a 'gen' block or --setting and --n".into(),
                    ))
                }
            };
            cfg.gen = Some(gen);
            commands::cmd_gen(&cfg.resolved())
        }
    }
}
