//! `wasserflow`: predictive-maintenance pipeline driven by stochastic
//! Wasserstein gradient descent.
//!
//! ```text
//! wasserflow simulate --paper-preset --out run
//! wasserflow flow     --paper-preset --out run
//! wasserflow predict  --paper-preset --out run
//! wasserflow diagnose --paper-preset --out run
//! ```
//!
//! Exit codes: 0 success, 2 configuration, 3 data, 4 numerical, 5 refused
//! unsafe step size.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CliError, CliResult, Config, KEYS};

#[derive(Parser, Debug)]
#[command(name = "wasserflow", version, about, after_help = key_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one identification experiment per day and write observations.csv.
    Simulate(Args),
    /// Run the particle flow over the differenced observations.
    Flow(Args),
    /// Damping-ratio band and suggested maintenance times from the belief.
    Predict(Args),
    /// Step-size bounds and distances of a particle cloud to a reference.
    Diagnose(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; every random stream is derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (also the default location of inputs).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Load the constants of the paper's maintenance example.
    #[arg(long)]
    paper_preset: bool,
    /// Run even when tau is outside the admissible interval.
    #[arg(long)]
    force: bool,
    /// Further `--key value` overrides of configuration keys.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0.., value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn key_help() -> String {
    let mut s = String::from("Configuration keys:\n");
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:<20} {d}\n"));
    }
    s
}

fn load(args: &Args) -> CliResult<Config> {
    let mut flags = Vec::new();
    if let Some(seed) = args.seed {
        flags.push(("seed".to_string(), seed.to_string()));
    }
    if let Some(out) = &args.out {
        flags.push(("out".to_string(), out.display().to_string()));
    }
    if args.force {
        flags.push(("force".to_string(), "true".to_string()));
    }
    Config::load(args.config.as_deref(), args.paper_preset, &args.overrides, flags)
}

fn dispatch(command: &Command) -> CliResult<()> {
    let (args, run): (&Args, fn(&Config) -> CliResult<()>) = match command {
        Command::Simulate(a) => (a, commands::simulate),
        Command::Flow(a) => (a, commands::flow),
        Command::Predict(a) => (a, commands::predict),
        Command::Diagnose(a) => (a, commands::diagnose),
    };
    let cfg = load(args)?;
    match cfg.get::<usize>("threads")? {
        Some(0) => Err(CliError::config("`threads` must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::config(format!("cannot start {n} threads: {e}")))?
            .install(|| run(&cfg)),
        None => run(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
