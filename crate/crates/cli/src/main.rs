use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use queuecap_cli::{run, CliError, RunOptions, SEED_ENV};

#[derive(Parser)]
#[command(name = "queuecap", version, about = "Capacity of queue-length-dependent channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Overrides the config seed and the QUEUECAP_SEED fallback.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for CSV tables and the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        seed,
        out,
        jobs,
        quiet,
    } = Cli::parse().command;

    let level = if quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match execute(config, seed, out, jobs, quiet) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(
    config: PathBuf,
    seed: Option<u64>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
    quiet: bool,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&config)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", config.display())))?;
    let opts = RunOptions {
        seed,
        out_dir: out,
        jobs,
        env_seed: std::env::var(SEED_ENV).ok(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Validation("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Numerical(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| run(&text, &opts))?;

    if !quiet {
        let m = &outcome.manifest;
        println!(
            "{} (seed {}) -> {} in {:.3}s",
            m.kind,
            m.seed,
            outcome.out_dir.display(),
            m.wall_time_secs
        );
        for a in &m.assertions {
            println!("  [{}] {}: {}", if a.passed { "pass" } else { "FAIL" }, a.name, a.detail);
        }
    }
    outcome.into_result().map(|_| ())
}
