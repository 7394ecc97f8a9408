//! Command-line front end: configuration, subcommands and artifacts.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use output::{Check, Output};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] twistlab::Error),
}

#[derive(Debug, Parser)]
#[command(name = "twistlab", version, about = "Planar elasticity with a determinant barrier: solves and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed for every random corpus; overrides the `seed` key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for element loops.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Tabulate the stored-energy law and check its invariants.
    BuildLaw,
    /// Elastic solve with convergence trace and field dump.
    Minimize,
    /// Penalty functional and star profiles.
    TwistReport,
    /// Twist versus star-shape agreement over a radius ladder.
    StarCheck,
    /// Dirichlet-growth fits, hole-filling ratios and the Poincare corpus.
    HolderFit,
    /// Shear solve with excess-field diagnostics.
    Shear,
    /// Oracle suite for the algebraic identities and bounds.
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::BuildLaw => "build-law",
            Command::Minimize => "minimize",
            Command::TwistReport => "twist-report",
            Command::StarCheck => "star-check",
            Command::HolderFit => "holder-fit",
            Command::Shear => "shear",
            Command::Verify => "verify",
        }
    }
}

/// Run one command; returns every check. `summary.txt` is written even when
/// the command fails part-way, with the error recorded as a failed check.
pub fn run(cli: &Cli) -> Result<Vec<Check>, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed);
    }
    let mut out = Output::new(&cli.out, cfg.hash())?;
    out.value("seed", cfg.get("seed", 0u64)?.to_string());
    out.value("experiment", cfg.string("experiment", cli.command.name()));
    let result = match cli.command {
        Command::BuildLaw => commands::build_law(&cfg, &mut out),
        Command::Minimize => commands::run_minimize(&cfg, &mut out),
        Command::TwistReport => commands::twist_report(&cfg, &mut out),
        Command::StarCheck => commands::star_check(&cfg, &mut out),
        Command::HolderFit => commands::holder_fit(&cfg, &mut out),
        Command::Shear => commands::shear(&cfg, &mut out),
        Command::Verify => commands::verify(&cfg, &mut out),
    };
    if let Err(e) = &result {
        if matches!(e, CliError::Config(_)) {
            return Err(CliError::Config(e.to_string().trim_start_matches("config: ").to_string()));
        }
        out.check("command_completed", false, e.to_string());
    }
    out.finish(cli.command.name())
}
