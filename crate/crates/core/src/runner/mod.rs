//! Experiment orchestration: config parsing, the seeded active-learning loop
//! with a simulated oracle, and result files.

mod config;
mod experiment;
mod output;

use std::path::Path;

use thiserror::Error;

pub use config::{ExperimentConfig, Strategy};
pub use experiment::{
    load_dataset, run_experiment, run_on_dataset, ClusterDump, ExperimentResult, RunRecord, TraceLine,
};
pub use output::{final_mean, final_records, mean_std, summary_rows, write_results, write_sweep_table, RECORD_COLUMNS};

use crate::classifier::ClassifierError;
use crate::data::DataError;
use crate::fair_clustering::ClusterError;
use crate::metrics::MetricError;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {0}: {1}")]
    Csv(String, #[source] csv::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Runs the experiment once per value of `param` and writes each result to
/// `out_dir/<param>=<value>/`, plus `out_dir/sweep.csv`.
pub fn sweep(
    cfg: &ExperimentConfig,
    param: &str,
    values: &[String],
    out_dir: impl AsRef<Path>,
) -> Result<Vec<(String, ExperimentResult)>, RunnerError> {
    let out_dir = out_dir.as_ref();
    let ds = load_dataset(cfg)?;
    let threads = crate::par::threads_from_env();
    let mut entries = Vec::with_capacity(values.len());
    for v in values {
        let mut c = cfg.clone();
        c.set_param(param, v)?;
        log::info!("sweep {param}={v}");
        let res = run_on_dataset(&c, &ds, threads)?;
        write_results(&res, out_dir.join(format!("{param}={v}")))?;
        entries.push((v.clone(), res));
    }
    write_sweep_table(&out_dir.join("sweep.csv"), param, &entries)?;
    Ok(entries)
}
