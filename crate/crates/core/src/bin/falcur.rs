use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use falcur::runner::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "falcur", version, about = "Fair active learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its result files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write per-pick audit lines to trace.jsonl.
        #[arg(long)]
        trace: bool,
        /// Write cluster assignments under clusters/.
        #[arg(long)]
        dump_clusters: bool,
    },
    /// Repeat an experiment for each value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// One of beta, k, lambda, batch_size.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Check the config and dataset without running.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), runner::RunnerError> {
    match cli.command {
        Command::Run {
            config,
            out,
            trace,
            dump_clusters,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            cfg.trace |= trace;
            cfg.dump_clusters |= dump_clusters;
            let res = runner::run_experiment(&cfg)?;
            runner::write_results(&res, &out)?;
            log::info!("wrote {} records to {}", res.records.len(), out.display());
        }
        Command::Sweep {
            config,
            out,
            param,
            values,
        } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let values: Vec<String> = values.iter().map(|v| v.trim().to_string()).collect();
            runner::sweep(&cfg, &param, &values, &out)?;
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let ds = runner::load_dataset(&cfg)?;
            falcur::data::split(&ds, &cfg.split_spec(0))?;
            println!("ok: {} rows, {} features", ds.n(), ds.d());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
