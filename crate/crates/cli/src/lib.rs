//! Command-line front end: JSON-configured simulation, fitting,
//! characterization and table runs with byte-reproducible outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod table1;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_characterize, cmd_fit, cmd_simulate, write_artifacts, Artifact, Provenance};
pub use config::{CharacterizeConfig, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use table1::{cmd_table1, Table1Bundle};

#[derive(Debug, Parser)]
#[command(name = "entangleometer", version, about = "Entangled-photon and classical transmission ellipsometry simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; outputs do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate sweep datasets.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Allow sweeps whose counts do not depend on the retardance.
        #[arg(long)]
        override_validity: bool,
    },
    /// Fit a dataset (`--data`) or every run simulated from the config.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Add the initial-condition sensitivity scan.
        #[arg(long)]
        sensitivity: bool,
        #[arg(long)]
        override_validity: bool,
    },
    /// Visibility, CHSH and tomography of a simulated source.
    Characterize {
        #[command(flatten)]
        common: Common,
    },
    /// Quantum/classical comparison table; built-in bundle when no config is given.
    Table1 {
        #[command(flatten)]
        common: Common,
    },
}

fn require_config(common: &Common) -> CliResult<PathBuf> {
    common.config.clone().ok_or_else(|| CliError::Config("--config is required".into()))
}

fn experiment(common: &Common, override_validity: bool) -> CliResult<ExperimentConfig> {
    let mut cfg: ExperimentConfig = config::load_json(&require_config(common)?)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.override_validity |= override_validity;
    Ok(cfg)
}

fn execute(command: &Command) -> CliResult<(Vec<Artifact>, PathBuf)> {
    match command {
        Command::Simulate { common, override_validity } => {
            Ok((cmd_simulate(&experiment(common, *override_validity)?)?, common.out.clone()))
        }
        Command::Fit { common, data, sensitivity, override_validity } => {
            let cfg = experiment(common, *override_validity)?;
            Ok((cmd_fit(&cfg, data.as_deref(), *sensitivity)?, common.out.clone()))
        }
        Command::Characterize { common } => {
            let mut cfg: CharacterizeConfig = config::load_json(&require_config(common)?)?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            Ok((cmd_characterize(&cfg)?, common.out.clone()))
        }
        Command::Table1 { common } => {
            let mut bundle = match &common.config {
                Some(path) => config::load_json(path)?,
                None => Table1Bundle::default(),
            };
            if let Some(seed) = common.seed {
                bundle.seed = seed;
            }
            Ok((cmd_table1(&bundle)?, common.out.clone()))
        }
    }
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Simulate { common, .. }
        | Command::Fit { common, .. }
        | Command::Characterize { common }
        | Command::Table1 { common } => common,
    }
}

/// Runs a parsed command and writes its outputs; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = (|| {
        let threads = common(&cli.command).threads;
        let (artifacts, out) = match threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?
                .install(|| execute(&cli.command))?,
            None => execute(&cli.command)?,
        };
        write_artifacts(&out, &artifacts)?;
        Ok::<_, CliError>(artifacts.len())
    })();
    match result {
        Ok(n) => {
            println!("{}", serde_json::json!({ "status": "ok", "files": n }));
            error::EXIT_OK
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
