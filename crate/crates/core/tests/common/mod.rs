//! Independent oracles shared by the integration and acceptance tests. None
//! of this calls into the library's algorithm code.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Combined clustering objective written from the definition: squared
/// distances to member means plus λ times the size-weighted, value-averaged
/// squared gaps between cluster and global group fractions.
pub fn naive_objective(
    points: &[Vec<f64>],
    groups: &[Vec<usize>],
    labels: &[usize],
    k: usize,
    lambda: f64,
) -> f64 {
    let m = points.len();
    let d = points[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<usize> = (0..m).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; d];
        for &i in &members {
            for j in 0..d {
                mean[j] += points[i][j];
            }
        }
        for v in mean.iter_mut() {
            *v /= members.len() as f64;
        }
        for &i in &members {
            for j in 0..d {
                total += (points[i][j] - mean[j]).powi(2);
            }
        }
        let mut fair = 0.0;
        for attr in groups {
            let mut values: Vec<usize> = attr.clone();
            values.sort();
            values.dedup();
            let mut s = 0.0;
            for v in &values {
                let in_c = members.iter().filter(|&&i| attr[i] == *v).count() as f64
                    / members.len() as f64;
                let in_x = attr.iter().filter(|&&a| a == *v).count() as f64 / m as f64;
                s += (in_c - in_x).powi(2);
            }
            fair += s / values.len() as f64;
        }
        let w = members.len() as f64 / m as f64;
        total += lambda * w * w * fair;
    }
    total
}

/// Global minimum of [`naive_objective`] over every labeling into exactly
/// `k` nonempty clusters.
pub fn brute_force_minimum(
    points: &[Vec<f64>],
    groups: &[Vec<usize>],
    k: usize,
    lambda: f64,
) -> (f64, Vec<usize>) {
    let m = points.len();
    let mut labels = vec![0usize; m];
    let mut best = (f64::INFINITY, labels.clone());
    loop {
        // Canonical labelings only: first occurrences appear in order 0, 1, ...
        let mut next_new = 0;
        let mut canonical = true;
        for &l in &labels {
            if l > next_new {
                canonical = false;
                break;
            }
            if l == next_new {
                next_new += 1;
            }
        }
        if canonical && next_new == k {
            let v = naive_objective(points, groups, &labels, k, lambda);
            if v < best.0 {
                best = (v, labels.clone());
            }
        }
        // increment base-k counter
        let mut pos = 0;
        loop {
            if pos == m {
                return best;
            }
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
            pos += 1;
        }
    }
}

pub fn random_points(rng: &mut impl Rng, m: usize, d: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect()
}

/// Lloyd's algorithm from given centroids: nearest centroid (ties to the
/// smaller id), member means, until the labeling stops changing. Centroids of
/// empty clusters stay put.
pub fn lloyd(points: &[Vec<f64>], init: &[Vec<f64>], max_iters: usize) -> Vec<usize> {
    let k = init.len();
    let d = points[0].len();
    let mut centroids = init.to_vec();
    let mut labels: Vec<usize> = Vec::new();
    for _ in 0..=max_iters {
        let next: Vec<usize> = points
            .iter()
            .map(|p| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (c, mu) in centroids.iter().enumerate() {
                    let dist: f64 = p.iter().zip(mu).map(|(a, b)| (a - b).powi(2)).sum();
                    if dist < best_d {
                        best = c;
                        best_d = dist;
                    }
                }
                best
            })
            .collect();
        if next == labels {
            break;
        }
        labels = next;
        for c in 0..k {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            for j in 0..d {
                centroids[c][j] = members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    labels
}

/// Algorithm 1's selection loop transcribed literally: rounds j = 1, 2, ...;
/// within a round walk the ranked clusters and take the j-th ranked sample of
/// each while fewer than b are selected. A cluster without a j-th sample
/// contributes nothing that round; the loop ends once no cluster has one.
pub fn algorithm1_selection(ranked: &[usize], ranked_samples: &[Vec<usize>], b: usize) -> Vec<usize> {
    let k = ranked.len();
    let mut selected_samples = 0;
    let mut chosen = Vec::new();
    let mut j = 1;
    while selected_samples < b {
        let mut any = false;
        for i in 1..=k {
            if selected_samples < b {
                let cluster = &ranked_samples[ranked[i - 1]];
                if j <= cluster.len() {
                    chosen.push(cluster[j - 1]);
                    selected_samples += 1;
                    any = true;
                }
            }
        }
        j += 1;
        if !any {
            break;
        }
    }
    chosen
}

/// Naive per-sample counting for the metric oracle.
pub struct NaiveMetrics {
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub gmeans: Option<f64>,
    pub sp: Option<f64>,
    pub eopp: Option<f64>,
    pub eodds: Option<f64>,
}

pub fn naive_metrics(y: &[u8], p: &[u8], s: &[u8]) -> NaiveMetrics {
    let n = y.len();
    let count = |f: &dyn Fn(usize) -> bool| (0..n).filter(|&i| f(i)).count();
    let tp = count(&|i| y[i] == 1 && p[i] == 1) as f64;
    let tn = count(&|i| y[i] == 0 && p[i] == 0) as f64;
    let fp = count(&|i| y[i] == 0 && p[i] == 1) as f64;
    let fn_ = count(&|i| y[i] == 1 && p[i] == 0) as f64;
    let accuracy = (n > 0).then(|| (tp + tn) / n as f64);
    let f1 = if tp + fp + fn_ == 0.0 {
        None
    } else if tp == 0.0 {
        Some(0.0)
    } else {
        let pr = tp / (tp + fp);
        let rc = tp / (tp + fn_);
        Some(2.0 * pr * rc / (pr + rc))
    };
    let gmeans = (tp + fn_ > 0.0 && tn + fp > 0.0).then(|| ((tp / (tp + fn_)) * (tn / (tn + fp))).sqrt());
    let cond = |g: u8, label: Option<u8>| -> Option<f64> {
        let den = count(&|i| s[i] == g && label.map_or(true, |l| y[i] == l));
        let num = count(&|i| s[i] == g && label.map_or(true, |l| y[i] == l) && p[i] == 1);
        (den > 0).then(|| num as f64 / den as f64)
    };
    let gap = |a: Option<f64>, b: Option<f64>| Some(a? - b?);
    let sp = gap(cond(0, None), cond(1, None)).map(f64::abs);
    let tpr_gap = gap(cond(0, Some(1)), cond(1, Some(1)));
    let fpr_gap = gap(cond(0, Some(0)), cond(1, Some(0)));
    let eopp = tpr_gap.map(f64::abs);
    let eodds = match (fpr_gap, tpr_gap) {
        (Some(f), Some(t)) => Some((0.5 * f + 0.5 * t).abs()),
        _ => None,
    };
    NaiveMetrics {
        accuracy,
        f1,
        gmeans,
        sp,
        eopp,
        eodds,
    }
}

/// Writes a small synthetic tabular dataset (`data.csv`) and a config
/// (`config.json`) into `dir`, returning the config path. `extra` holds
/// JSON members overriding the defaults, e.g. `"\"runs\": 2"`.
pub fn write_synthetic(dir: &std::path::Path, n: usize, extra: &str) -> std::path::PathBuf {
    let mut r = rng(n as u64);
    let mut csv = String::from("f1,f2,color,group,label\n");
    for i in 0..n {
        let group = if i % 3 == 0 { "b" } else { "a" };
        let f1: f64 = r.random_range(0.0..10.0);
        let f2: f64 = r.random_range(0.0..5.0) + if group == "b" { 1.0 } else { 0.0 };
        let color = ["red", "green", "blue"][r.random_range(0..3)];
        let noisy = f1 + f2 + r.random_range(-3.0..3.0) > 8.0;
        let label = if noisy || i % 10 == 1 { "yes" } else { "no" };
        csv.push_str(&format!("{f1:.3},{f2:.3},{color},{group},{label}\n"));
    }
    std::fs::write(dir.join("data.csv"), csv).unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(
        r#"{
  "dataset": "data.csv",
  "columns": [
    {"name": "f1", "kind": "numeric"},
    {"name": "f2", "kind": "numeric"},
    {"name": "color", "kind": "categorical"},
    {"name": "group", "kind": "sensitive"},
    {"name": "label", "kind": "label"}
  ],
  "positive_label": "yes",
  "protected_value": "b",
  "k": 3,
  "lambda": 5,
  "batch_size": 10,
  "iterations": 3,
  "runs": 2,
  "folds": 2,
  "c_grid": [0.1, 10],
  "max_iter_grid": [50, 100]
}"#,
    )
    .unwrap();
    let overrides: serde_json::Value = serde_json::from_str(&format!("{{{extra}}}")).unwrap();
    for (key, value) in overrides.as_object().unwrap() {
        cfg[key] = value.clone();
    }
    let cfg = serde_json::to_string_pretty(&cfg).unwrap();
    let path = dir.join("config.json");
    std::fs::write(&path, cfg).unwrap();
    path
}
