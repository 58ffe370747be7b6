use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunnerError;
use crate::acquisition::{AcquisitionConfig, ScoreForm};
use crate::classifier::{GridSpec, Scoring, TrainConfig};
use crate::data::{ColumnSpec, Schema, SplitSpec, DEFAULT_MISSING_TOKENS};
use crate::fair_clustering::FairKMConfig;
use crate::metrics::EqualizedOddsVariant;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Falcur,
    EntropyBaseline,
    RandomBaseline,
}

/// Flat experiment description, read from JSON.
///
/// `dataset` is resolved against the config file's directory when loaded
/// through [`ExperimentConfig::from_file`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub columns: Vec<ColumnSpec>,
    pub positive_label: String,
    pub protected_value: String,
    #[serde(default = "defaults::missing_tokens")]
    pub missing_tokens: Vec<String>,
    #[serde(default)]
    pub include_sensitive_feature: bool,

    #[serde(default = "defaults::train_frac")]
    pub train_frac: f64,
    #[serde(default = "defaults::test_frac")]
    pub test_frac: f64,
    #[serde(default = "defaults::unlabeled_frac")]
    pub unlabeled_frac: f64,

    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    pub k: usize,
    #[serde(default)]
    pub pre_filter: Option<usize>,
    #[serde(default)]
    pub score_form: ScoreForm,

    pub lambda: f64,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    #[serde(default = "defaults::tol")]
    pub tol: f64,
    #[serde(default = "defaults::n_init")]
    pub n_init: usize,
    #[serde(default = "defaults::yes")]
    pub refine: bool,

    #[serde(default = "defaults::c_grid")]
    pub c_grid: Vec<f64>,
    #[serde(default = "defaults::max_iter_grid")]
    pub max_iter_grid: Vec<usize>,
    #[serde(default = "defaults::folds")]
    pub folds: usize,
    #[serde(default)]
    pub scoring: Scoring,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::grad_tol")]
    pub grad_tol: f64,
    #[serde(default)]
    pub warm_start: bool,
    #[serde(default)]
    pub research_per_iteration: bool,

    pub iterations: usize,
    #[serde(default = "defaults::runs")]
    pub runs: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub eodds_variant: EqualizedOddsVariant,

    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub dump_clusters: bool,
}

mod defaults {
    use super::*;

    pub fn missing_tokens() -> Vec<String> {
        DEFAULT_MISSING_TOKENS.iter().map(|s| s.to_string()).collect()
    }
    pub fn train_frac() -> f64 {
        SplitSpec::default().train_frac
    }
    pub fn test_frac() -> f64 {
        SplitSpec::default().test_frac
    }
    pub fn unlabeled_frac() -> f64 {
        SplitSpec::default().unlabeled_frac
    }
    pub fn beta() -> f64 {
        AcquisitionConfig::default().beta
    }
    pub fn batch_size() -> usize {
        AcquisitionConfig::default().batch_size
    }
    pub fn max_iters() -> usize {
        FairKMConfig::default().max_iters
    }
    pub fn tol() -> f64 {
        FairKMConfig::default().tol
    }
    pub fn n_init() -> usize {
        FairKMConfig::default().n_init
    }
    pub fn yes() -> bool {
        true
    }
    pub fn c_grid() -> Vec<f64> {
        GridSpec::default().c_grid
    }
    pub fn max_iter_grid() -> Vec<usize> {
        GridSpec::default().max_iter_grid
    }
    pub fn folds() -> usize {
        GridSpec::default().folds
    }
    pub fn learning_rate() -> f64 {
        TrainConfig::default().learning_rate
    }
    pub fn grad_tol() -> f64 {
        TrainConfig::default().grad_tol
    }
    pub fn runs() -> usize {
        10
    }
}

impl ExperimentConfig {
    /// Parses a JSON config and resolves a relative dataset path against the
    /// file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, RunnerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RunnerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        if cfg.dataset.is_relative() {
            let base = path.parent().unwrap_or_else(|| Path::new(""));
            cfg.dataset = base.join(&cfg.dataset);
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, RunnerError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::Config(m));
        self.schema()?;
        self.split_spec(0).validate()?;
        self.acquisition().validate().map_err(RunnerError::Config)?;
        self.clustering(0).validate()?;
        self.train_base().validate()?;
        self.grid(0).validate()?;
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.runs == 0 {
            return bad("runs must be >= 1".into());
        }
        if self.max_iter_grid.contains(&0) {
            return bad("max_iter_grid entries must be >= 1".into());
        }
        if let Some(&c) = self.c_grid.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return bad(format!("c_grid entries must be positive, got {c}"));
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<Schema, RunnerError> {
        Ok(Schema::new(self.columns.clone())?)
    }

    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train_frac: self.train_frac,
            test_frac: self.test_frac,
            unlabeled_frac: self.unlabeled_frac,
            seed,
        }
    }

    pub fn acquisition(&self) -> AcquisitionConfig {
        AcquisitionConfig {
            beta: self.beta,
            batch_size: self.batch_size,
            k: self.k,
            pre_filter: self.pre_filter,
            score_form: self.score_form,
        }
    }

    pub fn clustering(&self, seed: u64) -> FairKMConfig {
        FairKMConfig {
            k: self.k,
            lambda: self.lambda,
            max_iters: self.max_iters,
            tol: self.tol,
            seed,
            n_init: self.n_init,
            refine: self.refine,
        }
    }

    /// Training settings before `c` and `max_iter` are tuned.
    pub fn train_base(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            grad_tol: self.grad_tol,
            ..TrainConfig::default()
        }
    }

    pub fn grid(&self, seed: u64) -> GridSpec {
        GridSpec {
            c_grid: self.c_grid.clone(),
            max_iter_grid: self.max_iter_grid.clone(),
            folds: self.folds,
            scoring: self.scoring,
            seed,
        }
    }

    /// Sets one sweepable parameter from its text form.
    pub fn set_param(&mut self, param: &str, value: &str) -> Result<(), RunnerError> {
        let parse_err = |e: &dyn std::fmt::Display| RunnerError::Config(format!("bad value {value:?} for {param}: {e}"));
        match param {
            "beta" => self.beta = value.parse().map_err(|e| parse_err(&e))?,
            "k" => self.k = value.parse().map_err(|e| parse_err(&e))?,
            "lambda" => self.lambda = value.parse().map_err(|e| parse_err(&e))?,
            "batch_size" => self.batch_size = value.parse().map_err(|e| parse_err(&e))?,
            other => {
                return Err(RunnerError::Config(format!(
                    "unknown sweep parameter {other:?} (expected beta, k, lambda or batch_size)"
                )))
            }
        }
        self.validate()
    }
}
