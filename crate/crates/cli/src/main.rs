//! `lqrsynth`: run LQR synthesis experiments described by TOML files.
//!
//! ```text
//! lqrsynth run <config.toml> [--out DIR] [--seed N] [--quiet]
//! lqrsynth oracle <config.toml> [--out DIR] [--seed N] [--quiet]
//! ```
//!
//! Exit status: 0 success, 1 invalid configuration or arguments, 2 the
//! solver found no acceptable answer (infeasible, unstable, stalled), 3
//! numerical failure.

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Kind, RunConfig};
use run::Exit;

const DEFAULT_OUT: &str = "lqrsynth-out";

#[derive(Parser, Debug)]
#[command(name = "lqrsynth", version, about = "LQR synthesis by projected gradients and semidefinite programming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment named by the config's `kind`.
    Run(Args),
    /// Solve the Riccati equation for the config's model and cost.
    Oracle(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// TOML configuration file.
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for `model.random` fixtures.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Invalid as u8 } else { 0 });
        }
    };
    let (args, kind) = match cli.command {
        Command::Run(args) => (args, None),
        Command::Oracle(args) => (args, Some(Kind::Oracle)),
    };
    let cfg = match RunConfig::load(&args.config, args.seed, kind) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(Exit::Invalid as u8);
        }
    };
    let out = run::execute(&cfg);
    let dir = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    if let Err(e) = report::write_outputs(&dir, &cfg, &out) {
        eprintln!("error: cannot write outputs to {}: {e}", dir.display());
        return ExitCode::from(Exit::Invalid as u8);
    }
    if out.exit != Exit::Success {
        eprint!("{}", report::summary(&cfg, &out));
    } else if !args.quiet {
        print!("{}", report::summary(&cfg, &out));
    }
    ExitCode::from(out.exit as u8)
}
