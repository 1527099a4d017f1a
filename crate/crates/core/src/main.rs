use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chaoscomm::cli::{cmd_ber, cmd_dbr, cmd_psd, cmd_sweep_compare, PsdOptions, RunOptions, SEED_ENV};

/// Multi-carrier DCSK link simulator.
#[derive(Debug, Parser)]
#[command(name = "chaoscomm", version)]
struct Cli {
    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Treat unknown configuration keys as errors.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// BER versus Eb/N0 sweep.
    Ber {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Data-to-bit energy ratio table for M = 2..=max-m.
    Dbr {
        #[arg(long)]
        max_m: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Power spectral density of the transmitted waveform.
    Psd {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Transmit silence (useful to check the floor value).
        #[arg(long, hide = true)]
        zero_signal: bool,
    },
    /// DCSK and MC-DCSK BER at the same spreading factor.
    SweepCompare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let opts = RunOptions {
        workers: cli.workers,
        strict: cli.strict,
        seed_override: std::env::var(SEED_ENV).ok(),
    };
    let result = match &cli.command {
        Command::Ber { config, out } => cmd_ber(config, out, &opts),
        Command::Dbr { max_m, out } => cmd_dbr(*max_m, out),
        Command::Psd {
            config,
            out,
            zero_signal,
        } => cmd_psd(
            config,
            out,
            &opts,
            &PsdOptions {
                zero_signal: *zero_signal,
            },
        ),
        Command::SweepCompare { config, out } => cmd_sweep_compare(config, out, &opts),
    };
    match result {
        Ok(manifest) => {
            log::info!("wrote {:?}", manifest.outputs);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
