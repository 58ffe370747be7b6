//! Fair active learning over tabular data.
//!
//! The pipeline clusters the unlabeled pool with a fairness-penalized KMeans,
//! ranks clusters from most to least fair, scores samples inside each cluster
//! by a blend of predictive entropy and representativeness, and fills each
//! query batch round-robin across the ranked clusters. A simulated oracle
//! reveals withheld labels so whole experiments can be replayed from a config.
//!
//! Module map:
//!
//! - [`data`]: CSV loading, preprocessing, seeded pool splits.
//! - [`fair_clustering`]: fairness-penalized KMeans and cluster fairness scores.
//! - [`classifier`]: L2 logistic regression and cross-validated grid search.
//! - [`acquisition`]: entropy, representativeness, batch selection.
//! - [`metrics`]: performance and group-fairness metrics.
//! - [`runner`]: experiment orchestration and result files.

pub mod acquisition;
pub mod classifier;
pub mod data;
pub mod fair_clustering;
pub mod matrix;
pub mod metrics;
pub mod par;
pub mod runner;
mod seed;

pub use matrix::Matrix;
pub use seed::derive_seed;
