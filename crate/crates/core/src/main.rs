use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mibeam::cli::{self, CliError};
use mibeam::montecarlo::ScenarioConfig;

#[derive(Parser)]
#[command(name = "mibeam", version, about = "Robust magnetic beamforming experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the outage/throughput sweep and write CSV results.
    Sweep {
        /// TOML configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Design and inspect robust beamformers for one random geometry.
    SolveOnce {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Relative channel error level.
        #[arg(long)]
        g: f64,
        #[arg(long)]
        seed: u64,
    },
}

fn config(path: Option<&PathBuf>) -> Result<ScenarioConfig, CliError> {
    match path {
        Some(p) => cli::load_config(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn run(args: Args) -> Result<(), CliError> {
    match args.command {
        Command::Sweep { config: path, out, trials, seed } => {
            let mut cfg = config(path.as_ref())?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (result, manifest) = cli::cmd_sweep(&cfg, &out)?;
            print!("{}", cli::summary_table(&result));
            println!("config_hash {}", manifest.config_hash);
            println!("wrote {}", out.display());
        }
        Command::SolveOnce { config: path, g, seed } => {
            let cfg = config(path.as_ref())?;
            print!("{}", cli::cmd_solve_once(&cfg, g, seed)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
