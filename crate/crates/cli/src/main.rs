//! `pumpsim`: runs pumping experiments from a TOML config and writes CSV/JSON artifacts.

mod config;
mod error;
mod output;
mod pipelines;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Model, RunConfig};
use error::{CliError, CliResult};
use pipelines::{chern_report, Context};

#[derive(Debug, Parser)]
#[command(
    name = "pumpsim",
    version,
    about = "Thouless pumping of an auxiliary particle coupled to a thermal Rice-Mele chain"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override time.steps_per_cycle.
    #[arg(long, global = true, value_name = "N")]
    steps: Option<usize>,

    /// Output directory (overrides output_dir in the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Rerun with twice the steps and record the deltas in meta.json.
    #[arg(long, global = true)]
    check_convergence: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline named in the config (TOML, or a meta.json from an earlier run).
    Run { config: PathBuf },
    /// Print Chern numbers of the system and mean-field bands as JSON.
    Chern { config: PathBuf },
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { config } => {
            let mut config = RunConfig::load(&config)?;
            if let (Some(steps), Some(time)) = (cli.steps, config.time.as_mut()) {
                time.steps_per_cycle = steps;
            }
            let out = cli.out.or_else(|| config.output_dir.clone()).ok_or_else(|| {
                CliError::Config("no output directory: set output_dir or pass --out".into())
            })?;
            pipelines::run(&Context { config, out, check_convergence: cli.check_convergence })
        }
        Command::Chern { config } => {
            let config = RunConfig::load(&config)?;
            let model = Model::resolve(&config)?;
            let report = chern_report(&config, &model)?;
            eprintln!("{}", pipelines::summary_line(&report));
            println!("{}", serde_json::to_string_pretty(&report).expect("JSON values always serialize"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
