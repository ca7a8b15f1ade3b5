use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hyperbolic_boussinesq::cli::{self, RunOptions};

#[derive(Parser)]
#[command(name = "hbq", version, about = "Boussinesq mild-solution experiments on hyperbolic space")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory for CSV tables and the summary.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Constants file; repeat for several dimensions.
        #[arg(long)]
        constants: Vec<PathBuf>,
        /// Seed of the sample-library jitter.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(cli::ExitCode::Config.code()),
            };
        }
    };
    let Command::Run {
        config,
        out,
        constants,
        seed,
        quiet,
    } = args.command;
    let opts = RunOptions {
        out,
        constants,
        seed,
        quiet,
    };
    let code = cli::finish(cli::run(&config, &opts), quiet);
    ExitCode::from(code.code())
}
