//! `dsxray` — profile an embedded benchmark, compress it by stratified
//! sampling, and verify the compressed set's fidelity.

mod commands;
mod config;
mod errors;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::RunConfig;
use errors::CmdError;

#[derive(Parser)]
#[command(
    name = "dsxray",
    version,
    about = "Dataset x-ray and benchmark compression pipeline",
    propagate_version = true
)]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the run seed (clustering, silhouette, sampling).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the artifact directory.
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch embeddings for the dataset and write the sidecar.
    Embed,
    /// Cluster, profile redundancy, and write report/model/projection.
    Xray,
    /// Export the stratified subset and its audit plan.
    Compress {
        /// Retention rate in (0, 1]; overrides config and x-ray report.
        #[arg(long)]
        retention: Option<f64>,
    },
    /// Score eval runs: per-model deltas, rank agreement, contamination.
    Fidelity {
        /// Full-set eval JSONL.
        full: PathBuf,
        /// One or more compressed-set eval JSONL files.
        #[arg(required = true)]
        comp: Vec<PathBuf>,
        /// Generalization (regenerated variants) eval JSONL.
        #[arg(long = "gen")]
        gen_eval: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CmdError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    config.apply_overrides(cli.seed, cli.output_dir);
    match cli.command {
        Command::Embed => commands::embed::run(&config),
        Command::Xray => commands::xray::run(&config),
        Command::Compress { retention } => {
            if let Some(r) = retention {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(errors::validation(format!(
                        "--retention {r} outside (0, 1]"
                    )));
                }
            }
            commands::compress::run(&config, retention)
        }
        Command::Fidelity { full, comp, gen_eval } => {
            commands::fidelity::run(&config, &full, &comp, gen_eval.as_deref())
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version exit 0; genuine usage mistakes are
            // validation failures (exit 1), never runtime failures.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
