//! Sample scoring inside clusters and the cluster-ranked round-robin batch
//! selection, plus the plain entropy-sampling baseline.
//!
//! Scores are higher-is-better after normalization. Ties everywhere break
//! toward the smaller global sample index.

use serde::{Deserialize, Serialize};

use crate::matrix::{euclidean_distance, Matrix};
use crate::par;

/// Binary entropy in nats of a Bernoulli with success probability `p`.
pub fn entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Sum of Euclidean distances from each member to every member of the same
/// cluster. Smaller sums mark more central points.
pub fn representativeness_raw(x: &Matrix, members: &[usize]) -> Vec<f64> {
    members
        .iter()
        .map(|&i| {
            members
                .iter()
                .map(|&j| euclidean_distance(x.row(i), x.row(j)))
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    HigherIsBetter,
    LowerIsBetter,
}

/// Min-max scaling to `[0, 1]` with 1 the best value. A constant input maps
/// to 0.5 everywhere.
pub fn normalize_scores(raw: &[f64], orientation: Orientation) -> Vec<f64> {
    let oriented: Vec<f64> = match orientation {
        Orientation::HigherIsBetter => raw.to_vec(),
        Orientation::LowerIsBetter => raw.iter().map(|v| -v).collect(),
    };
    let lo = oriented.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = oriented.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.5; raw.len()];
    }
    oriented.iter().map(|v| ((v - lo) / range).clamp(0.0, 1.0)).collect()
}

/// Weighting of the two normalized scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreForm {
    /// `beta * rep + (1 - beta) * entropy`: small `beta` favors uncertainty.
    #[default]
    Complementary,
    /// `beta * rep + (beta - 1) * entropy`: uncertainty is penalized.
    Literal,
}

pub fn combined_score(rep_norm: f64, entropy_norm: f64, beta: f64, form: ScoreForm) -> f64 {
    match form {
        ScoreForm::Complementary => beta * rep_norm + (1.0 - beta) * entropy_norm,
        ScoreForm::Literal => beta * rep_norm + (beta - 1.0) * entropy_norm,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    /// Global row index into the dataset.
    pub index: usize,
    pub cluster: usize,
    pub entropy_raw: f64,
    pub rep_raw: f64,
    pub entropy_norm: f64,
    pub rep_norm: f64,
    pub combined: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub beta: f64,
    pub batch_size: usize,
    pub k: usize,
    /// Cluster only this many of the most uncertain pool points.
    pub pre_filter: Option<usize>,
    pub score_form: ScoreForm,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            beta: 0.6,
            batch_size: 180,
            k: 8,
            pre_filter: None,
            score_form: ScoreForm::Complementary,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if self.batch_size == 0 {
            return Err("batch_size must be >= 1".into());
        }
        if self.k == 0 {
            return Err("k must be >= 1".into());
        }
        if self.pre_filter == Some(0) {
            return Err("pre_filter must be >= 1 when set".into());
        }
        Ok(())
    }
}

/// Scores every member of every cluster and returns, per cluster id, the
/// members sorted by descending combined score.
///
/// `members[c]` holds global indices; `proba` maps a global index to
/// `P(y = 1 | x)`.
pub fn score_clusters(
    x: &Matrix,
    members: &[Vec<usize>],
    proba: impl Fn(usize) -> f64 + Sync,
    beta: f64,
    form: ScoreForm,
) -> Vec<Vec<SampleScore>> {
    let cluster_ids: Vec<usize> = (0..members.len()).collect();
    par::map_slice(&cluster_ids, |&c| {
        let idx = &members[c];
        if idx.is_empty() {
            return Vec::new();
        }
        let ent: Vec<f64> = idx.iter().map(|&i| entropy(proba(i))).collect();
        let rep = representativeness_raw(x, idx);
        let ent_n = normalize_scores(&ent, Orientation::HigherIsBetter);
        let rep_n = normalize_scores(&rep, Orientation::LowerIsBetter);
        let mut scores: Vec<SampleScore> = idx
            .iter()
            .enumerate()
            .map(|(p, &index)| SampleScore {
                index,
                cluster: c,
                entropy_raw: ent[p],
                rep_raw: rep[p],
                entropy_norm: ent_n[p],
                rep_norm: rep_n[p],
                combined: combined_score(rep_n[p], ent_n[p], beta, form),
            })
            .collect();
        scores.sort_by(|a, b| b.combined.total_cmp(&a.combined).then(a.index.cmp(&b.index)));
        scores
    })
}

/// One step of the round-robin: `round` and `rank` are zero-based, `rank`
/// being the cluster's position in the fairness ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pick {
    pub round: usize,
    pub rank: usize,
    pub cluster: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BatchSelection {
    /// Picked indices in pick order.
    pub chosen: Vec<usize>,
    pub trace: Vec<Pick>,
    /// Every candidate was taken before the batch filled.
    pub exhausted: bool,
}

/// Round-robin over clusters in fairness order: round `j` takes the `j`-th
/// best sample of each cluster that still has one, until `b` picks are made
/// or all lists run out.
///
/// `per_cluster[c]` is cluster `c`'s candidate list, best first. Lists must be
/// pairwise disjoint.
pub fn select_batch(ranked_clusters: &[usize], per_cluster: &[Vec<usize>], b: usize) -> BatchSelection {
    let longest = ranked_clusters
        .iter()
        .map(|&c| per_cluster[c].len())
        .max()
        .unwrap_or(0);
    let mut out = BatchSelection::default();
    'rounds: for round in 0..longest {
        for (rank, &cluster) in ranked_clusters.iter().enumerate() {
            if out.chosen.len() == b {
                break 'rounds;
            }
            if let Some(&index) = per_cluster[cluster].get(round) {
                out.chosen.push(index);
                out.trace.push(Pick {
                    round,
                    rank,
                    cluster,
                    index,
                });
            }
        }
    }
    out.exhausted = out.chosen.len() < b;
    out
}

/// Builds ranked candidate lists from [`score_clusters`] output and runs
/// [`select_batch`].
pub fn select_from_scores(
    ranked_clusters: &[usize],
    scores: &[Vec<SampleScore>],
    b: usize,
) -> BatchSelection {
    let lists: Vec<Vec<usize>> = scores
        .iter()
        .map(|s| s.iter().map(|v| v.index).collect())
        .collect();
    select_batch(ranked_clusters, &lists, b)
}

/// Positions of the `b` highest-entropy probabilities, ties to the smaller
/// position, in descending entropy order.
pub fn entropy_baseline(proba: &[f64], b: usize) -> Vec<usize> {
    let ent: Vec<f64> = proba.iter().map(|&p| entropy(p)).collect();
    let mut order: Vec<usize> = (0..proba.len()).collect();
    order.sort_by(|&a, &c| ent[c].total_cmp(&ent[a]).then(a.cmp(&c)));
    order.truncate(b);
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_values() {
        assert!((entropy(0.5) - 2f64.ln()).abs() < 1e-15);
        assert!((entropy(0.9) - 0.325_082_973_391_448_2).abs() < 1e-12);
        assert!(entropy(1.0 - 1e-12) < 1e-10);
        assert_eq!(entropy(0.0), 0.0);
        for p in [0.01, 0.2, 0.37, 0.5] {
            assert!((entropy(p) - entropy(1.0 - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn representativeness_examples() {
        let same = Matrix::from_rows(&vec![vec![1.0, 1.0]; 3]);
        assert_eq!(representativeness_raw(&same, &[0, 1, 2]), vec![0.0; 3]);
        let line = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]);
        assert_eq!(representativeness_raw(&line, &[0, 1, 2]), vec![3.0, 2.0, 3.0]);
        assert_eq!(representativeness_raw(&line, &[1]), vec![0.0]);
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_scores(&[3.0, 2.0, 3.0], Orientation::LowerIsBetter), vec![0.0, 1.0, 0.0]);
        assert_eq!(normalize_scores(&[0.1, 0.6931], Orientation::HigherIsBetter), vec![0.0, 1.0]);
        assert_eq!(normalize_scores(&[5.0; 3], Orientation::HigherIsBetter), vec![0.5; 3]);
        assert_eq!(normalize_scores(&[5.0; 3], Orientation::LowerIsBetter), vec![0.5; 3]);
    }

    #[test]
    fn combined_examples() {
        let f = ScoreForm::Complementary;
        assert_eq!(combined_score(0.3, 0.7, 1.0, f), 0.3);
        assert_eq!(combined_score(0.3, 0.7, 0.0, f), 0.7);
        assert!((combined_score(1.0, 0.5, 0.6, f) - 0.8).abs() < 1e-15);
        assert!((combined_score(1.0, 0.5, 0.6, ScoreForm::Literal) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn round_robin_examples() {
        let lists = vec![vec![10, 11], vec![20, 21]];
        let sel = select_batch(&[0, 1], &lists, 3);
        assert_eq!(sel.chosen, vec![10, 20, 11]);
        assert!(!sel.exhausted);
        assert_eq!(select_batch(&[0, 1], &lists, 1).chosen, vec![10]);
        let sel = select_batch(&[1, 0], &lists, 10);
        assert_eq!(sel.chosen, vec![20, 10, 21, 11]);
        assert!(sel.exhausted);
        assert_eq!(
            sel.trace[2],
            Pick {
                round: 1,
                rank: 0,
                cluster: 1,
                index: 21
            }
        );
    }

    #[test]
    fn short_clusters_are_skipped() {
        let lists = vec![vec![1], vec![2, 3, 4], vec![]];
        let sel = select_batch(&[2, 0, 1], &lists, 4);
        assert_eq!(sel.chosen, vec![1, 2, 3, 4]);
        assert!(!sel.exhausted);
    }

    #[test]
    fn baseline_examples() {
        assert_eq!(entropy_baseline(&[0.5, 0.99, 0.6], 1), vec![0]);
        assert_eq!(entropy_baseline(&[0.5, 0.99, 0.6], 3), vec![0, 2, 1]);
        assert_eq!(entropy_baseline(&[0.4, 0.6], 1), vec![0]);
        assert_eq!(entropy_baseline(&[0.6, 0.4], 1), vec![0]);
    }

    #[test]
    fn cluster_scores_sorted_with_index_ties() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![5.0]]);
        let members = vec![vec![2, 1, 0], vec![3]];
        let scores = score_clusters(&x, &members, |_| 0.5, 0.6, ScoreForm::Complementary);
        let order: Vec<usize> = scores[0].iter().map(|s| s.index).collect();
        assert_eq!(order, vec![1, 0, 2]);
        assert_eq!(scores[1][0].combined, 0.5);
        assert!(scores.iter().flatten().all(|s| (0.0..=1.0).contains(&s.combined)));
    }

    #[test]
    fn config_validation() {
        assert!(AcquisitionConfig::default().validate().is_ok());
        assert!(AcquisitionConfig { beta: 1.5, ..Default::default() }.validate().is_err());
        assert!(AcquisitionConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }
}
