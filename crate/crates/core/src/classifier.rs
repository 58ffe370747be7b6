//! L2-regularized logistic regression and grid search.
//!
//! Training minimizes
//!
//! ```text
//! Σ_i log(1 + exp(−(2y_i − 1)(w·x_i + b))) + ‖w‖² / (2C)
//! ```
//!
//! by full-batch gradient descent on the objective divided by `n` (same
//! minimizer, step size independent of the sample count). A step that
//! increases the objective is halved until it does not, so accepted steps
//! never increase it. Training is deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::dot;
use crate::metrics::{self, ConfusionCounts};
use crate::{par, Matrix};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Probabilities are clamped to `[PROBA_EPS, 1 − PROBA_EPS]`.
pub const PROBA_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("class {class} has {count} examples, fewer than {folds} folds")]
    InfeasibleStratification {
        class: u8,
        count: usize,
        folds: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iter: usize,
    pub learning_rate: f64,
    pub grad_tol: f64,
    pub fit_intercept: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iter: 100,
            learning_rate: 0.1,
            grad_tol: 1e-6,
            fit_intercept: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(ClassifierError::InvalidConfig("c must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(ClassifierError::InvalidConfig("max_iter must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(ClassifierError::InvalidConfig("grad_tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub train_config: TrainConfig,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticModel {
    /// Untrained model with all parameters at zero.
    pub fn zeros(d: usize, train_config: TrainConfig) -> Self {
        Self {
            weights: vec![0.0; d],
            intercept: 0.0,
            train_config,
            converged: false,
            iterations: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision_function(&self, x: &Matrix) -> Result<Vec<f64>, ClassifierError> {
        if x.cols() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                found: x.cols(),
            });
        }
        Ok(par::map_range(x.rows(), |i| {
            dot(x.row(i), &self.weights) + self.intercept
        }))
    }

    /// P(y = 1 | x), clamped away from 0 and 1.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>, ClassifierError> {
        Ok(self
            .decision_function(x)?
            .into_iter()
            .map(|z| sigmoid(z).clamp(PROBA_EPS, 1.0 - PROBA_EPS))
            .collect())
    }

    /// 1 where the probability is at least `threshold`.
    pub fn predict(&self, x: &Matrix, threshold: f64) -> Result<Vec<u8>, ClassifierError> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| u8::from(p >= threshold))
            .collect())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(u)) without overflow.
fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

fn sign(y: u8) -> f64 {
    if y == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Training objective (summed, not averaged).
pub fn objective(x: &Matrix, y: &[u8], weights: &[f64], intercept: f64, c: f64) -> f64 {
    let loss: f64 = (0..x.rows())
        .map(|i| softplus(-sign(y[i]) * (dot(x.row(i), weights) + intercept)))
        .sum();
    loss + dot(weights, weights) / (2.0 * c)
}

/// Gradient of [`objective`] with respect to `(weights, intercept)`.
pub fn gradient(x: &Matrix, y: &[u8], weights: &[f64], intercept: f64, c: f64) -> (Vec<f64>, f64) {
    let margins: Vec<f64> = (0..x.rows())
        .map(|i| dot(x.row(i), weights) + intercept)
        .collect();
    let (mut gw, gb) = loss_gradient(x, y, &margins);
    for (g, w) in gw.iter_mut().zip(weights) {
        *g += w / c;
    }
    (gw, gb)
}

/// Gradient of the data term given margins `z_i = w·x_i + b`.
fn loss_gradient(x: &Matrix, y: &[u8], margins: &[f64]) -> (Vec<f64>, f64) {
    let mut gw = vec![0.0; x.cols()];
    let mut gb = 0.0;
    for (i, &z) in margins.iter().enumerate() {
        let t = sign(y[i]);
        // d/dz log(1 + exp(−t z)) = −t σ(−t z)
        let r = -t * sigmoid(-t * z);
        gb += r;
        for (g, v) in gw.iter_mut().zip(x.row(i)) {
            *g += r * v;
        }
    }
    (gw, gb)
}

fn check_training_input(x: &Matrix, y: &[u8]) -> Result<(), ClassifierError> {
    if x.rows() != y.len() {
        return Err(ClassifierError::LengthMismatch {
            rows: x.rows(),
            labels: y.len(),
        });
    }
    if !x.is_finite() {
        return Err(ClassifierError::NonFinite);
    }
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(ClassifierError::SingleClass);
    }
    Ok(())
}

/// Trains from zero weights.
pub fn fit(x: &Matrix, y: &[u8], cfg: &TrainConfig) -> Result<LogisticModel, ClassifierError> {
    let mut snaps = train(x, y, cfg, None, &[cfg.max_iter])?;
    Ok(snaps.pop().expect("one checkpoint"))
}

/// Trains starting from `init`'s parameters.
pub fn fit_warm(
    x: &Matrix,
    y: &[u8],
    cfg: &TrainConfig,
    init: &LogisticModel,
) -> Result<LogisticModel, ClassifierError> {
    let mut snaps = train(x, y, cfg, Some(init), &[cfg.max_iter])?;
    Ok(snaps.pop().expect("one checkpoint"))
}

/// Runs one descent and snapshots the model after each iteration count in
/// `checkpoints` (ascending). A snapshot at `t` equals `fit` with
/// `max_iter = t`.
fn train(
    x: &Matrix,
    y: &[u8],
    cfg: &TrainConfig,
    init: Option<&LogisticModel>,
    checkpoints: &[usize],
) -> Result<Vec<LogisticModel>, ClassifierError> {
    cfg.validate()?;
    check_training_input(x, y)?;
    let n = x.rows() as f64;
    let d = x.cols();
    let (mut w, mut b) = match init {
        Some(m) if m.dim() == d => (m.weights.clone(), m.intercept),
        Some(m) => {
            return Err(ClassifierError::DimensionMismatch {
                expected: d,
                found: m.dim(),
            })
        }
        None => (vec![0.0; d], 0.0),
    };

    let margins = |w: &[f64], b: f64| -> Vec<f64> {
        par::map_range(x.rows(), |i| dot(x.row(i), w) + b)
    };
    // Objective divided by n.
    let mean_objective = |z: &[f64], w: &[f64]| -> f64 {
        let loss: f64 = z.iter().zip(y).map(|(&z, &t)| softplus(-sign(t) * z)).sum();
        (loss + dot(w, w) / (2.0 * cfg.c)) / n
    };

    let mut z = margins(&w, b);
    let mut f = mean_objective(&z, &w);
    let mut converged = false;
    let mut iterations = 0;
    let mut snaps = Vec::with_capacity(checkpoints.len());
    let mut next_cp = 0;
    let last = *checkpoints.last().expect("at least one checkpoint");

    let snapshot = |w: &[f64], b: f64, it: usize, conv: bool, max_iter: usize| LogisticModel {
        weights: w.to_vec(),
        intercept: b,
        train_config: TrainConfig { max_iter, ..*cfg },
        converged: conv,
        iterations: it,
    };

    'outer: while iterations < last {
        let (mut gw, mut gb) = loss_gradient(x, y, &z);
        for (g, wi) in gw.iter_mut().zip(&w) {
            *g = (*g + wi / cfg.c) / n;
        }
        gb /= n;
        if !cfg.fit_intercept {
            gb = 0.0;
        }
        let norm = (dot(&gw, &gw) + gb * gb).sqrt();
        if norm < cfg.grad_tol {
            converged = true;
            break;
        }
        let mut step = cfg.learning_rate;
        loop {
            let w_new: Vec<f64> = w.iter().zip(&gw).map(|(wi, g)| wi - step * g).collect();
            let b_new = b - step * gb;
            let z_new = margins(&w_new, b_new);
            let f_new = mean_objective(&z_new, &w_new);
            if f_new <= f {
                if b_new == b && w_new == w {
                    // Step below parameter resolution.
                    converged = true;
                    break 'outer;
                }
                w = w_new;
                b = b_new;
                z = z_new;
                f = f_new;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                // No descent possible at machine precision.
                converged = true;
                break 'outer;
            }
        }
        iterations += 1;
        while next_cp < checkpoints.len() && checkpoints[next_cp] == iterations {
            snaps.push(snapshot(&w, b, iterations, false, checkpoints[next_cp]));
            next_cp += 1;
        }
    }
    while next_cp < checkpoints.len() {
        snaps.push(snapshot(&w, b, iterations, converged, checkpoints[next_cp]));
        next_cp += 1;
    }
    Ok(snaps)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    #[default]
    Accuracy,
    F1,
    Gmeans,
}

impl Scoring {
    /// Score of a confusion matrix; undefined metrics score 0.
    pub fn score(&self, c: &ConfusionCounts) -> f64 {
        let r = match self {
            Scoring::Accuracy => metrics::accuracy(c),
            Scoring::F1 => metrics::f1(c),
            Scoring::Gmeans => metrics::gmeans(c),
        };
        r.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c_grid: Vec<f64>,
    pub max_iter_grid: Vec<usize>,
    pub folds: usize,
    pub scoring: Scoring,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            c_grid: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            max_iter_grid: vec![100, 500, 1000],
            folds: 5,
            scoring: Scoring::Accuracy,
            seed: 0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.c_grid.is_empty() || self.max_iter_grid.is_empty() {
            return Err(ClassifierError::InvalidConfig("grids must be nonempty".into()));
        }
        if self.folds < 2 {
            return Err(ClassifierError::InvalidConfig("folds must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub c: f64,
    pub max_iter: usize,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: TrainConfig,
    pub cells: Vec<GridCell>,
}

/// Stratified folds: each class is shuffled and dealt round-robin.
pub fn stratified_folds(y: &[u8], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>, ClassifierError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut offset = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if idx.len() < folds {
            return Err(ClassifierError::InfeasibleStratification {
                class,
                count: idx.len(),
                folds,
            });
        }
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            out[(j + offset) % folds].push(i);
        }
        offset += y.len();
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Picks the `(c, max_iter)` pair with the best mean cross-validated score.
/// Ties prefer the smaller `c`, then the smaller `max_iter`. Other training
/// settings come from `base`.
pub fn grid_search(
    x: &Matrix,
    y: &[u8],
    grid: &GridSpec,
    base: &TrainConfig,
) -> Result<GridResult, ClassifierError> {
    grid.validate()?;
    check_training_input(x, y)?;
    let folds = stratified_folds(y, grid.folds, grid.seed)?;

    let mut c_values = grid.c_grid.clone();
    c_values.sort_by(f64::total_cmp);
    c_values.dedup();
    let mut iters = grid.max_iter_grid.clone();
    iters.sort_unstable();
    iters.dedup();
    for &c in &c_values {
        TrainConfig { c, ..*base }.validate()?;
    }
    if iters[0] == 0 {
        return Err(ClassifierError::InvalidConfig("max_iter must be >= 1".into()));
    }

    // One descent per (c, fold) covers every max_iter through checkpoints.
    let jobs: Vec<(usize, usize)> = (0..c_values.len())
        .flat_map(|ci| (0..folds.len()).map(move |fi| (ci, fi)))
        .collect();
    let results = par::map_slice(&jobs, |&(ci, fi)| -> Result<Vec<f64>, ClassifierError> {
        let test = &folds[fi];
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != fi)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let xt = x.select_rows(&train_idx);
        let yt: Vec<u8> = train_idx.iter().map(|&i| y[i]).collect();
        let cfg = TrainConfig {
            c: c_values[ci],
            max_iter: *iters.last().expect("nonempty"),
            ..*base
        };
        let snaps = train(&xt, &yt, &cfg, None, &iters)?;
        let xv = x.select_rows(test);
        let yv: Vec<u8> = test.iter().map(|&i| y[i]).collect();
        snaps
            .iter()
            .map(|m| {
                let pred = m.predict(&xv, 0.5)?;
                let cc = metrics::confusion(&yv, &pred).expect("binary labels of equal length");
                Ok(grid.scoring.score(&cc))
            })
            .collect()
    });

    let mut cells = Vec::with_capacity(c_values.len() * iters.len());
    for (ci, &c) in c_values.iter().enumerate() {
        for (ii, &max_iter) in iters.iter().enumerate() {
            let mut fold_scores = Vec::with_capacity(folds.len());
            for fi in 0..folds.len() {
                let r = results[ci * folds.len() + fi].as_ref().map_err(Clone::clone)?;
                fold_scores.push(r[ii]);
            }
            let mean_score = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
            cells.push(GridCell {
                c,
                max_iter,
                fold_scores,
                mean_score,
            });
        }
    }
    // Cells are ordered by (c, max_iter); only a strictly better score wins.
    let mut best = &cells[0];
    for cell in &cells[1..] {
        if cell.mean_score > best.mean_score {
            best = cell;
        }
    }
    Ok(GridResult {
        best: TrainConfig {
            c: best.c,
            max_iter: best.max_iter,
            ..*base
        },
        cells,
    })
}
