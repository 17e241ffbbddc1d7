use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use merotherm::cli::{run, Command, RunConfig};
use merotherm::MapSpec;

/// Pressure, Bowen root, dimension bounds and symbolic coding for hyperbolic meromorphic maps.
#[derive(Parser)]
#[command(name = "merotherm", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run config; optional for `selftest`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides the THREADS environment variable.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let threads = args.threads.or_else(|| std::env::var("THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool: {e}");
        }
    }
    let config = match (&args.config, args.command) {
        (Some(path), _) => RunConfig::load(path),
        (None, Command::Selftest) => Ok(RunConfig::new(MapSpec::monomial(2).expect("z^2 is valid"))),
        (None, _) => {
            eprintln!("error: --config is required for this command");
            return ExitCode::from(1);
        }
    };
    let mut config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    match run(args.command, config, &args.out) {
        Ok(outcome) => {
            for line in &outcome.summary {
                if line.starts_with("error:") {
                    eprintln!("{line}");
                } else {
                    println!("{line}");
                }
            }
            ExitCode::from(outcome.exit_status as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
