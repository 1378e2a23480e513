//! Command-line driver for the PIECE toy pipeline: data generation,
//! training, hurdle statistics, single explanations and the benchmark
//! experiments, all stored under `runs/<id>/`.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod rundir;

use std::path::PathBuf;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::rundir::{load_artifacts, RunDir};

#[derive(Debug, Parser)]
#[command(name = "piece", version, about = "Counterfactual and semi-factual explanations by exceptional feature editing")]
pub struct Cli {
    /// TOML config; omitted keys take the defaults listed below. Without it
    /// the run's stored config.toml is used when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding run directories.
    #[arg(long, global = true, default_value = "runs")]
    pub runs_dir: PathBuf,
    /// Overrides the config's run_id.
    #[arg(long, global = true)]
    pub run_id: Option<String>,
    /// Overwrite the outputs of a stage that already ran.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the glyph datasets and their manifest.
    Datagen,
    /// Train the classifier, generator and autoencoders.
    Train,
    /// Fit the per-class hurdle models of the classifier's features.
    FitStats,
    /// Explain one test image.
    Explain {
        /// Test-set index of the image.
        #[arg(long)]
        index: usize,
        /// cf (counterfactual), sf (max-edit semi-factual) or prop (proportional).
        #[arg(long, default_value = "cf")]
        mode: String,
        /// Fraction for --mode prop: 0.25, 0.5, 0.75 or 1.
        #[arg(long)]
        fraction: Option<f64>,
        /// Accept any fraction in (0, 1] for --mode prop.
        #[arg(long)]
        any_fraction: bool,
        /// Counterfactual class to use instead of the selected one.
        #[arg(long)]
        target: Option<usize>,
    },
    /// Run benchmark experiment 1 (counterfactuals) or 2 (semi-factuals).
    Experiment {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=2))]
        expt: u8,
    },
    /// Print the default config as TOML.
    DefaultConfig,
}

/// Parses arguments, with the default config appended to `--help`.
pub fn parse_args() -> Cli {
    let help = format!("Default config:\n\n{}", RunConfig::default().to_toml());
    let matches = Cli::command().after_long_help(help).get_matches();
    Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit())
}

/// Resolves the effective config and run directory.
pub fn resolve(cli: &Cli) -> CliResult<(RunConfig, RunDir)> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(id) = &cli.run_id {
        cfg.run_id = id.clone();
        cfg.validate()?;
    }
    let run = RunDir::new(&cli.runs_dir, &cfg.run_id);
    if cli.config.is_none() && run.config().exists() {
        let mut stored = RunConfig::load(Some(&run.config()))?;
        stored.run_id = cfg.run_id;
        cfg = stored;
    }
    Ok((cfg, run))
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Command::DefaultConfig = cli.command {
        print!("{}", RunConfig::default().to_toml());
        return Ok(());
    }
    let (cfg, run) = resolve(&cli)?;
    match cli.command {
        Command::Datagen => commands::cmd_datagen(&cfg, &run, cli.force),
        Command::Train => commands::cmd_train(&cfg, &run, cli.force),
        Command::FitStats => commands::cmd_fit_stats(&cfg, &run, cli.force),
        Command::Explain { index, ref mode, fraction, any_fraction, target } => {
            let mode = commands::parse_mode(mode, fraction, any_fraction)?;
            commands::cmd_explain(&cfg, &run, index, mode, target)
        }
        Command::Experiment { expt } => {
            let art = load_artifacts(&run)?;
            let report = match expt {
                1 => experiment::run_expt1(&cfg, &art, &run, cli.force)?,
                2 => experiment::run_expt2(&cfg, &art, &run, cli.force)?,
                _ => return Err(CliError::Config(format!("unknown experiment {expt}"))),
            };
            for a in &report.aggregates {
                println!(
                    "experiment {expt}: {:<28} {:<16} n={:<4} failed={:<3} verified={}",
                    a.method, a.mode, a.n, a.n_failed, a.n_verified
                );
            }
            println!("experiment {expt}: reports in {}", run.report("").display());
            Ok(())
        }
        Command::DefaultConfig => unreachable!(),
    }
}
