use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uav_multiq::harness::{self, EvalOverrides, HarnessError};

#[derive(Parser)]
#[command(version, about = "Train and evaluate dual-agent Q-learning UAV planners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the strategic agent and one adaptive agent per band.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fly greedy arbitrated missions with trained tables.
    Evaluate {
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long)]
        flights: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Let the arbiter pick actions that lead into obstacles.
        #[arg(long)]
        no_safety: bool,
        /// Compare min-max scaled action values instead of raw ones.
        #[arg(long)]
        normalize_q: bool,
    },
    /// Export the per-cell SNR raster for one carrier frequency.
    Coverage {
        #[arg(long)]
        config: PathBuf,
        /// Carrier frequency in MHz.
        #[arg(long)]
        band: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train { config, out, seed } => {
            let done = harness::cmd_train(&config, &out, seed)?;
            println!(
                "wrote {} files to {} (config {})",
                done.manifest.files.len() + 1,
                done.out_dir.display(),
                &done.manifest.config_hash[..12]
            );
        }
        Command::Evaluate {
            artifacts,
            flights,
            seed,
            no_safety,
            normalize_q,
        } => {
            let report = harness::cmd_evaluate(
                &artifacts,
                flights,
                EvalOverrides {
                    seed,
                    no_safety,
                    normalize_q,
                },
            )?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Coverage { config, band, out } => {
            let s = harness::cmd_coverage(&config, band, &out)?;
            println!(
                "band {} MHz: {} cells, covered fraction {:.4}, min SNR {:.2} dB",
                s.band_mhz, s.rows, s.covered_fraction, s.min_snr_db
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
