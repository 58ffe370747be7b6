//! Fairness-penalized KMeans.
//!
//! Minimizes
//!
//! ```text
//! O = Σ_C Σ_{x∈C} ‖x − μ_C‖²  +  λ · Σ_C (|C|/|X|)² · Σ_S (1/|V_S|) Σ_{v∈V_S} (Fr_C(v) − Fr_X(v))²
//! ```
//!
//! by alternating a greedy assignment step with a mean centroid step. During
//! the assignment step centroids stay fixed and points are visited in a seeded
//! random order; each point moves to the cluster with the lowest change in
//! `O`, where the fairness part of the change is exact for the current
//! cluster counts. Both steps can only lower `O`, so the recorded objective
//! history is nonincreasing. With `λ = 0` the assignment step is exactly a
//! Lloyd step (ties go to the smaller cluster id).
//!
//! Sensitive attributes are passed attribute-major: `sensitive[a][i]` is the
//! code of point `i` for attribute `a`. Codes are arbitrary integers; the value
//! set of each attribute is taken over all clustered points.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::squared_distance;
use crate::{derive_seed, par, Matrix};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("need at least k = {k} points, got {m}")]
    TooFewPoints { m: usize, k: usize },
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("invalid clustering config: {0}")]
    InvalidConfig(String),
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("sensitive codes have length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairKMConfig {
    pub k: usize,
    /// Weight of the fairness term.
    pub lambda: f64,
    pub max_iters: usize,
    /// Relative objective improvement below which fitting stops.
    pub tol: f64,
    pub seed: u64,
    /// Independent k-means++ restarts; the lowest final objective wins.
    pub n_init: usize,
    /// After the alternating phase, relocate single points while the exact
    /// objective (centroid shift included) still drops.
    pub refine: bool,
}

impl Default for FairKMConfig {
    fn default() -> Self {
        Self {
            k: 8,
            lambda: 0.0,
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
            n_init: 10,
            refine: true,
        }
    }
}

impl FairKMConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.k == 0 {
            return Err(ClusterError::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(ClusterError::InvalidConfig("lambda must be finite and >= 0".into()));
        }
        if self.max_iters == 0 {
            return Err(ClusterError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(ClusterError::InvalidConfig("tol must be > 0".into()));
        }
        if self.n_init == 0 {
            return Err(ClusterError::InvalidConfig("n_init must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Matrix,
    /// Cluster id of every clustered point, in input order.
    pub assignment: Vec<usize>,
    /// Final value of the combined objective.
    pub objective: f64,
    /// Cluster-specific fairness deviation; lower is fairer.
    pub per_cluster_fairness: Vec<f64>,
    /// Cluster ids from most fair to least fair.
    pub ranking: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Objective after initialization and after every iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Centroids the winning restart started from.
    pub initial_centroids: Matrix,
    /// Seed of the winning restart (drives its k-means++ draw and visit order).
    pub restart_seed: u64,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    /// Member indices (into the clustered point set) of every cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn rank(&self) -> Vec<usize> {
        rank_clusters(&self.per_cluster_fairness)
    }
}

/// Share of each value of one attribute within a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFractions {
    pub fractions: BTreeMap<usize, f64>,
}

impl GroupFractions {
    pub fn of(points: &[usize], codes: &[usize]) -> Self {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &p in points {
            *counts.entry(codes[p]).or_default() += 1;
        }
        let n = points.len() as f64;
        Self {
            fractions: counts.into_iter().map(|(v, c)| (v, c as f64 / n)).collect(),
        }
    }

    pub fn get(&self, value: usize) -> f64 {
        self.fractions.get(&value).copied().unwrap_or(0.0)
    }
}

/// Normalized deviation of one attribute's value mix in `cluster` from its
/// mix in `all`: the mean over the values present in `all` of the squared
/// difference of fractions.
pub fn attribute_deviation(
    cluster: &[usize],
    all: &[usize],
    codes: &[usize],
) -> Result<f64, ClusterError> {
    if cluster.is_empty() {
        return Err(ClusterError::EmptyCluster);
    }
    let global = GroupFractions::of(all, codes);
    let local = GroupFractions::of(cluster, codes);
    let n_values = global.fractions.len() as f64;
    let sum: f64 = global
        .fractions
        .iter()
        .map(|(&v, &fx)| {
            let d = local.get(v) - fx;
            d * d
        })
        .sum();
    Ok(sum / n_values)
}

/// Size-weighted fairness deviation of one cluster, summed over attributes.
pub fn cluster_fairness_score(
    cluster: &[usize],
    all: &[usize],
    sensitive: &[Vec<usize>],
) -> Result<f64, ClusterError> {
    if cluster.is_empty() {
        return Err(ClusterError::EmptyCluster);
    }
    let w = cluster.len() as f64 / all.len() as f64;
    let mut dev = 0.0;
    for codes in sensitive {
        dev += attribute_deviation(cluster, all, codes)?;
    }
    Ok(w * w * dev)
}

/// Sum of the cluster-specific scores over every cluster of `model`.
pub fn total_fairness_deviation(
    model: &ClusterModel,
    sensitive: &[Vec<usize>],
) -> Result<f64, ClusterError> {
    let all: Vec<usize> = (0..model.assignment.len()).collect();
    let mut total = 0.0;
    for members in model.members() {
        total += cluster_fairness_score(&members, &all, sensitive)?;
    }
    Ok(total)
}

/// Cluster ids sorted by ascending score; ties keep the smaller id first.
pub fn rank_clusters(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

/// k-means++ seeding on squared Euclidean distance.
pub fn init_centroids(x: &Matrix, k: usize, seed: u64) -> Result<Matrix, ClusterError> {
    let m = x.rows();
    if m < k {
        return Err(ClusterError::TooFewPoints { m, k });
    }
    if k == 0 {
        return Ok(Matrix::zeros(0, x.cols()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.random_range(0..m)];
    let mut nearest: Vec<f64> = (0..m)
        .map(|i| squared_distance(x.row(i), x.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            let w = WeightedIndex::new(&nearest).expect("nonnegative weights with positive sum");
            w.sample(&mut rng)
        } else {
            // Every point coincides with a chosen centroid.
            let free: Vec<usize> = (0..m).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(x.row(i), x.row(next)));
        }
    }
    Ok(x.select_rows(&chosen))
}

/// Seed of restart `r` under `cfg.seed`.
pub fn restart_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, 1000 + r as u64)
}

/// Fits `cfg.n_init` times from k-means++ initializations and keeps the
/// model with the lowest objective (earliest restart on ties).
pub fn fit(
    x: &Matrix,
    sensitive: &[Vec<usize>],
    cfg: &FairKMConfig,
) -> Result<ClusterModel, ClusterError> {
    cfg.validate()?;
    check_input(x, sensitive, cfg.k)?;
    let mut best: Option<ClusterModel> = None;
    for r in 0..cfg.n_init {
        let seed = restart_seed(cfg.seed, r);
        let init = init_centroids(x, cfg.k, seed)?;
        let model = fit_from(x, sensitive, &FairKMConfig { seed, ..*cfg }, &init, None)?;
        if best.as_ref().map_or(true, |b| model.objective < b.objective) {
            best = Some(model);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// Single fit from explicit initial centroids. `cfg.seed` drives the visit
/// order and `cfg.n_init` is ignored.
///
/// `visit_order`, when given, replaces the seeded per-iteration shuffle and is
/// used for every assignment step.
pub fn fit_from(
    x: &Matrix,
    sensitive: &[Vec<usize>],
    cfg: &FairKMConfig,
    init: &Matrix,
    visit_order: Option<&[usize]>,
) -> Result<ClusterModel, ClusterError> {
    cfg.validate()?;
    check_input(x, sensitive, cfg.k)?;
    if init.rows() != cfg.k || init.cols() != x.cols() || !init.is_finite() {
        return Err(ClusterError::InvalidConfig(
            "initial centroids do not match k or feature dimension".into(),
        ));
    }
    if let Some(order) = visit_order {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..x.rows()).collect::<Vec<_>>() {
            return Err(ClusterError::InvalidConfig(
                "visit order must be a permutation of the points".into(),
            ));
        }
    }

    let m = x.rows();
    let k = cfg.k;
    let groups = Groups::new(sensitive, m);
    let mut centroids = init.clone();
    let mut state = State::new(k, &groups);

    // Initial nearest-centroid assignment.
    let dist = distance_table(x, &centroids);
    let mut assignment: Vec<usize> = (0..m)
        .map(|i| argmin(&dist[i * k..(i + 1) * k]))
        .collect();
    reseed_empty(x, &centroids, &mut assignment, k);
    for (i, &c) in assignment.iter().enumerate() {
        state.add(&groups, i, c);
    }
    update_centroids(x, &assignment, &mut centroids);

    let mut objective = state.objective(x, &centroids, &assignment, cfg.lambda);
    let mut history = vec![objective];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let mut order: Vec<usize> = visit_order.map_or_else(|| (0..m).collect(), <[usize]>::to_vec);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        if visit_order.is_none() {
            order.shuffle(&mut rng);
        }
        let dist = distance_table(x, &centroids);
        let mut moves = 0usize;
        for &i in &order {
            let from = assignment[i];
            if state.sizes[from] == 1 {
                continue;
            }
            let row = &dist[i * k..(i + 1) * k];
            let fair = cfg.lambda > 0.0;
            let leave = if fair { state.leave_delta(&groups, i, from) } else { 0.0 };
            let mut best = from;
            let mut best_delta = 0.0;
            for to in 0..k {
                if to == from {
                    continue;
                }
                let mut delta = row[to] - row[from];
                if fair {
                    delta += cfg.lambda * (leave + state.join_delta(&groups, i, to));
                }
                if delta < best_delta || (delta == best_delta && to < best) {
                    best = to;
                    best_delta = delta;
                }
            }
            if best != from {
                state.remove(&groups, i, from);
                state.add(&groups, i, best);
                assignment[i] = best;
                moves += 1;
            }
        }
        update_centroids(x, &assignment, &mut centroids);
        let next = state.objective(x, &centroids, &assignment, cfg.lambda);
        assert!(
            next <= objective + 1e-9 * objective.abs().max(1.0),
            "objective increased from {objective} to {next}"
        );
        history.push(next);
        let improvement = (objective - next) / objective.abs().max(f64::MIN_POSITIVE);
        objective = next;
        if moves == 0 || improvement < cfg.tol {
            converged = true;
            break;
        }
    }

    if cfg.refine {
        objective = relocate(
            x,
            &groups,
            cfg,
            &mut assignment,
            &mut centroids,
            &mut state,
            objective,
            &mut history,
            &mut rng,
            visit_order,
        );
    }

    let all: Vec<usize> = (0..m).collect();
    let mut members = vec![Vec::new(); k];
    for (i, &c) in assignment.iter().enumerate() {
        members[c].push(i);
    }
    let per_cluster_fairness = members
        .iter()
        .map(|mem| cluster_fairness_score(mem, &all, sensitive))
        .collect::<Result<Vec<_>, _>>()?;
    let ranking = rank_clusters(&per_cluster_fairness);

    Ok(ClusterModel {
        centroids,
        assignment,
        objective,
        per_cluster_fairness,
        ranking,
        sizes: state.sizes,
        history,
        iterations,
        converged,
        initial_centroids: init.clone(),
        restart_seed: cfg.seed,
    })
}

/// Single-point relocation with exact objective deltas. Each pass visits
/// every point and moves it to the cluster that lowers the objective most,
/// updating the two affected means immediately. Stops after a pass without
/// moves or after `cfg.max_iters` passes. Returns the final objective.
#[allow(clippy::too_many_arguments)]
fn relocate(
    x: &Matrix,
    groups: &Groups,
    cfg: &FairKMConfig,
    assignment: &mut [usize],
    centroids: &mut Matrix,
    state: &mut State,
    mut objective: f64,
    history: &mut Vec<f64>,
    rng: &mut ChaCha8Rng,
    visit_order: Option<&[usize]>,
) -> f64 {
    let m = x.rows();
    let k = cfg.k;
    let mut order: Vec<usize> = visit_order.map_or_else(|| (0..m).collect(), <[usize]>::to_vec);
    for _ in 0..cfg.max_iters {
        if visit_order.is_none() {
            order.shuffle(rng);
        }
        let slack = 1e-12 * objective.abs().max(1.0);
        let mut moves = 0usize;
        for &i in &order {
            let from = assignment[i];
            let n_from = state.sizes[from];
            if n_from == 1 {
                continue;
            }
            let xi = x.row(i);
            let leave = n_from as f64 / (n_from - 1) as f64 * squared_distance(xi, centroids.row(from));
            let fair = cfg.lambda > 0.0;
            let fair_leave = if fair { state.leave_delta(groups, i, from) } else { 0.0 };
            let mut best = from;
            let mut best_delta = -slack;
            for to in 0..k {
                if to == from {
                    continue;
                }
                let n_to = state.sizes[to] as f64;
                let mut delta = n_to / (n_to + 1.0) * squared_distance(xi, centroids.row(to)) - leave;
                if fair {
                    delta += cfg.lambda * (fair_leave + state.join_delta(groups, i, to));
                }
                if delta < best_delta {
                    best = to;
                    best_delta = delta;
                }
            }
            if best != from {
                let n_to = state.sizes[best] as f64;
                let nf = n_from as f64;
                for (mu, v) in centroids.row_mut(from).iter_mut().zip(xi) {
                    *mu = (nf * *mu - v) / (nf - 1.0);
                }
                for (mu, v) in centroids.row_mut(best).iter_mut().zip(xi) {
                    *mu = (n_to * *mu + v) / (n_to + 1.0);
                }
                state.remove(groups, i, from);
                state.add(groups, i, best);
                assignment[i] = best;
                moves += 1;
            }
        }
        if moves == 0 {
            break;
        }
        update_centroids(x, assignment, centroids);
        let next = state.objective(x, centroids, assignment, cfg.lambda);
        assert!(
            next <= objective + 1e-9 * objective.abs().max(1.0),
            "objective increased from {objective} to {next} during relocation"
        );
        history.push(next);
        objective = next;
    }
    objective
}

/// Combined objective of an arbitrary assignment, with centroids at the
/// member means. Empty clusters contribute nothing.
pub fn objective_of(
    x: &Matrix,
    sensitive: &[Vec<usize>],
    assignment: &[usize],
    k: usize,
    lambda: f64,
) -> f64 {
    let groups = Groups::new(sensitive, x.rows());
    let mut state = State::new(k, &groups);
    for (i, &c) in assignment.iter().enumerate() {
        state.add(&groups, i, c);
    }
    let mut centroids = Matrix::zeros(k, x.cols());
    update_centroids(x, assignment, &mut centroids);
    state.objective(x, &centroids, assignment, lambda)
}

fn check_input(x: &Matrix, sensitive: &[Vec<usize>], k: usize) -> Result<(), ClusterError> {
    if !x.is_finite() {
        return Err(ClusterError::NonFinite);
    }
    if x.rows() < k {
        return Err(ClusterError::TooFewPoints { m: x.rows(), k });
    }
    for codes in sensitive {
        if codes.len() != x.rows() {
            return Err(ClusterError::LengthMismatch {
                expected: x.rows(),
                found: codes.len(),
            });
        }
    }
    Ok(())
}

fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &d) in row.iter().enumerate().skip(1) {
        if d < row[best] {
            best = c;
        }
    }
    best
}

/// Row-major `m × k` table of squared distances.
fn distance_table(x: &Matrix, centroids: &Matrix) -> Vec<f64> {
    let k = centroids.rows();
    par::map_range(x.rows(), |i| {
        let xi = x.row(i);
        (0..k)
            .map(|c| squared_distance(xi, centroids.row(c)))
            .collect::<Vec<f64>>()
    })
    .concat()
}

/// Gives every empty cluster the point farthest from its centroid in the
/// currently largest cluster.
fn reseed_empty(x: &Matrix, centroids: &Matrix, assignment: &mut [usize], k: usize) {
    let mut sizes = vec![0usize; k];
    for &c in assignment.iter() {
        sizes[c] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let largest = (0..k)
            .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
            .expect("k >= 1");
        let far = (0..assignment.len())
            .filter(|&i| assignment[i] == largest)
            .max_by(|&a, &b| {
                let da = squared_distance(x.row(a), centroids.row(largest));
                let db = squared_distance(x.row(b), centroids.row(largest));
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("largest cluster is nonempty");
        assignment[far] = empty;
        sizes[largest] -= 1;
        sizes[empty] += 1;
    }
}

/// Sets each nonempty cluster's centroid to its member mean.
fn update_centroids(x: &Matrix, assignment: &[usize], centroids: &mut Matrix) {
    let k = centroids.rows();
    let d = x.cols();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            continue;
        }
        let n = counts[c] as f64;
        for (dst, s) in centroids.row_mut(c).iter_mut().zip(&sums[c * d..(c + 1) * d]) {
            *dst = s / n;
        }
    }
}

/// Dense per-attribute codes and global value fractions.
struct Groups {
    /// codes[a][i] in 0..n_values[a]
    codes: Vec<Vec<usize>>,
    global: Vec<Vec<f64>>,
    m: usize,
}

impl Groups {
    fn new(sensitive: &[Vec<usize>], m: usize) -> Self {
        let mut codes = Vec::with_capacity(sensitive.len());
        let mut global = Vec::with_capacity(sensitive.len());
        for raw in sensitive {
            let mut values: Vec<usize> = raw.clone();
            values.sort_unstable();
            values.dedup();
            let dense: Vec<usize> = raw
                .iter()
                .map(|v| values.binary_search(v).expect("value present"))
                .collect();
            let mut frac = vec![0.0; values.len()];
            for &c in &dense {
                frac[c] += 1.0;
            }
            frac.iter_mut().for_each(|f| *f /= m as f64);
            codes.push(dense);
            global.push(frac);
        }
        Self { codes, global, m }
    }
}

/// Cluster sizes and per-attribute value counts.
struct State {
    sizes: Vec<usize>,
    /// counts[c][a][v]
    counts: Vec<Vec<Vec<usize>>>,
    /// current[c] == term(c, _, 0)
    current: Vec<f64>,
}

impl State {
    fn new(k: usize, groups: &Groups) -> Self {
        let template: Vec<Vec<usize>> = groups.global.iter().map(|g| vec![0; g.len()]).collect();
        Self {
            sizes: vec![0; k],
            counts: vec![template; k],
            current: vec![0.0; k],
        }
    }

    fn add(&mut self, groups: &Groups, i: usize, c: usize) {
        self.sizes[c] += 1;
        for (a, codes) in groups.codes.iter().enumerate() {
            self.counts[c][a][codes[i]] += 1;
        }
        self.current[c] = self.term(groups, c, i, 0);
    }

    fn remove(&mut self, groups: &Groups, i: usize, c: usize) {
        self.sizes[c] -= 1;
        for (a, codes) in groups.codes.iter().enumerate() {
            self.counts[c][a][codes[i]] -= 1;
        }
        self.current[c] = self.term(groups, c, i, 0);
    }

    /// Fairness term of cluster `c`, with point `i` optionally added (+1) or
    /// removed (-1).
    fn term(&self, groups: &Groups, c: usize, i: usize, change: isize) -> f64 {
        let size = self.sizes[c] as isize + change;
        if size <= 0 {
            return 0.0;
        }
        let size_f = size as f64;
        let mut dev = 0.0;
        for (a, global) in groups.global.iter().enumerate() {
            let own = groups.codes[a][i];
            let mut s = 0.0;
            for (v, fx) in global.iter().enumerate() {
                let mut cnt = self.counts[c][a][v] as isize;
                if v == own {
                    cnt += change;
                }
                let d = cnt as f64 / size_f - fx;
                s += d * d;
            }
            dev += s / global.len() as f64;
        }
        let w = size_f / groups.m as f64;
        w * w * dev
    }

    /// Change of the fairness term when point `i` leaves `from`.
    fn leave_delta(&self, groups: &Groups, i: usize, from: usize) -> f64 {
        self.term(groups, from, i, -1) - self.current[from]
    }

    /// Change of the fairness term when point `i` joins `to`.
    fn join_delta(&self, groups: &Groups, i: usize, to: usize) -> f64 {
        self.term(groups, to, i, 1) - self.current[to]
    }

    /// Change of the fairness term when point `i` moves from `from` to `to`.
    #[cfg(test)]
    fn move_delta(&self, groups: &Groups, i: usize, from: usize, to: usize) -> f64 {
        self.leave_delta(groups, i, from) + self.join_delta(groups, i, to)
    }

    fn objective(
        &self,
        x: &Matrix,
        centroids: &Matrix,
        assignment: &[usize],
        lambda: f64,
    ) -> f64 {
        let dist: f64 = assignment
            .iter()
            .enumerate()
            .map(|(i, &c)| squared_distance(x.row(i), centroids.row(c)))
            .sum();
        if lambda == 0.0 {
            return dist;
        }
        let fair: f64 = self.current.iter().sum();
        dist + lambda * fair
    }
}
