use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use toral_core::experiment::{run, ExperimentConfig, SCHEMA};
use toral_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_TASK: u8 = 3;

/// Central limit theorem experiments for random products of toral automorphisms.
#[derive(Parser)]
#[command(name = "toral-clt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML configuration.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; results do not depend on this.
        #[arg(long, env = "TORAL_CLT_WORKERS")]
        workers: Option<usize>,
    },
    /// Parse and validate a configuration without running it.
    ValidateConfig { config: PathBuf },
    /// Print the configuration format and output columns.
    PrintSchema,
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig, ExitCode> {
    let mut cfg = ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::PrintSchema => {
            print!("{SCHEMA}");
            ExitCode::SUCCESS
        }
        Command::ValidateConfig { config } => match load(&config, None) {
            Ok(cfg) => {
                println!("ok: task {} seed {}", cfg.task.name(), cfg.seed);
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config, out, seed, workers } => {
            let cfg = match load(&config, seed) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(w) = workers {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global() {
                    eprintln!("warning: could not size the worker pool: {e}");
                }
            }
            match run(&cfg, &out) {
                Ok(m) => {
                    println!("{}", serde_json::to_string_pretty(&m).expect("manifest serializes"));
                    ExitCode::SUCCESS
                }
                Err(e @ Error::Config(_)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
                Err(e) => {
                    eprintln!("task failed: {e}");
                    ExitCode::from(EXIT_TASK)
                }
            }
        }
    }
}
