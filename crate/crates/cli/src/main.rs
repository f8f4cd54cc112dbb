//! `qns`: simulate two-qubit spin-locking spectroscopy data and reconstruct
//! two-qubit noise spectra from it.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qns_cli::commands;
use qns_cli::config::Config;
use qns_cli::CliError;

#[derive(Parser)]
#[command(
    name = "qns",
    about = "Two-qubit noise spectroscopy: simulation, sweeps, robust reconstruction",
    version
)]
struct Cli {
    /// JSON configuration file; omit to use built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "qns-out")]
    out: PathBuf,
    /// Master seed; all randomness derives from it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ramsey correlation map C_zz(t, nbar) from the full optical model.
    SimulateRamsey,
    /// Spin-locking correlation map Kzz(t, omega1) at fixed omega2.
    SimulateSpinlock,
    /// Synthesize measurement datasets for the configured frequency sweep.
    GenerateData,
    /// Fit stored datasets and emit reconstructed spectra.
    Reconstruct,
    /// Generate data and reconstruct in one pass.
    Sweep,
    /// Fit identical data with Huber and quadratic loss; emit paired errors.
    CompareLoss,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(CliError::Config("--workers must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let config = Config::load(cli.config.as_deref())?;
    let out = cli.out.as_path();
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", out.display())))?;
    match cli.command {
        Command::SimulateRamsey => commands::cmd_simulate_ramsey(&config, out, cli.seed),
        Command::SimulateSpinlock => commands::cmd_simulate_spinlock(&config, out, cli.seed),
        Command::GenerateData => commands::cmd_generate_data(&config, out, cli.seed),
        Command::Reconstruct => commands::cmd_reconstruct(&config, out, cli.seed),
        Command::Sweep => commands::cmd_sweep(&config, out, cli.seed),
        Command::CompareLoss => commands::cmd_compare_loss(&config, out, cli.seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qns: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
