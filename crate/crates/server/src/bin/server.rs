use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use evalboard_server::{run, ServerConfig, DATA_DIR_ENV, DEFAULT_PORT, DEFAULT_SEED};

/// Leaderboard HTTP API.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    /// Store root.
    #[arg(long, env = DATA_DIR_ENV, default_value = "evalboard-data")]
    data_dir: PathBuf,
    /// Perturbation seed for jobs that do not name one.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = ServerConfig {
        seed: args.seed,
        ..ServerConfig::default()
    };
    match run(args.port, &args.data_dir, config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
