use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, RunnerError, Strategy};
use crate::acquisition;
use crate::classifier::{self, LogisticModel, TrainConfig, PROBA_EPS};
use crate::data::{self, Dataset, PreprocessOptions};
use crate::fair_clustering;
use crate::metrics::{self, MetricRecord};
use crate::{derive_seed, par, Matrix};

/// Seed streams derived from a run seed.
const STREAM_SPLIT: u64 = 0;
const STREAM_GRID: u64 = 1;
const STREAM_CLUSTER: u64 = 100;
const STREAM_RANDOM: u64 = 200;
const STREAM_REGRID: u64 = 300;

/// One evaluated iteration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub metrics: MetricRecord,
    pub labeled: usize,
    pub unlabeled: usize,
    pub selected: usize,
    /// The classifier was a constant majority-class predictor.
    pub fallback: bool,
    /// The unlabeled pool ran out; the run stops here.
    pub exhausted: bool,
    pub c: f64,
    pub max_iter: usize,
    /// FNV-1a digest of the picked indices in pick order.
    pub trace_digest: String,
}

/// One picked sample. Cluster fields are empty for the baselines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLine {
    pub run: usize,
    pub iteration: usize,
    pub pick: usize,
    pub index: usize,
    pub label: u8,
    pub round: Option<usize>,
    pub rank: Option<usize>,
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDump {
    pub run: usize,
    pub iteration: usize,
    pub indices: Vec<usize>,
    pub assignment: Vec<usize>,
    pub per_cluster_fairness: Vec<f64>,
    pub ranking: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub version: String,
    /// Sorted by `(run, iteration)`.
    pub records: Vec<RunRecord>,
    pub traces: Vec<TraceLine>,
    pub cluster_dumps: Vec<ClusterDump>,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, RunnerError> {
    let raw = data::load_csv(&cfg.dataset, &cfg.schema()?)?.with_missing_tokens(cfg.missing_tokens.clone());
    let opts = PreprocessOptions {
        include_sensitive_feature: cfg.include_sensitive_feature,
        ..PreprocessOptions::new(cfg.positive_label.clone(), cfg.protected_value.clone())
    };
    let ds = data::preprocess(&raw, &opts)?;
    for w in &ds.warnings {
        log::warn!("{w}");
    }
    Ok(ds)
}

/// Loads the dataset and runs every repetition, with run-level parallelism
/// capped by `FALCUR_THREADS`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, RunnerError> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    run_on_dataset(cfg, &ds, par::threads_from_env())
}

/// Runs every repetition on a preprocessed dataset. Output is independent of
/// `threads`.
pub fn run_on_dataset(cfg: &ExperimentConfig, ds: &Dataset, threads: usize) -> Result<ExperimentResult, RunnerError> {
    cfg.validate()?;
    let outputs = par::with_threads(threads, || par::map_range(cfg.runs, |r| run_once(cfg, ds, r)));
    let mut result = ExperimentResult {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        records: Vec::new(),
        traces: Vec::new(),
        cluster_dumps: Vec::new(),
    };
    for out in outputs {
        let out = out?;
        result.records.extend(out.records);
        result.traces.extend(out.traces);
        result.cluster_dumps.extend(out.cluster_dumps);
    }
    Ok(result)
}

#[derive(Default)]
struct RunOutput {
    records: Vec<RunRecord>,
    traces: Vec<TraceLine>,
    cluster_dumps: Vec<ClusterDump>,
}

enum Predictor {
    Logistic(LogisticModel),
    Majority(u8),
}

impl Predictor {
    fn proba(&self, x: &Matrix) -> Result<Vec<f64>, RunnerError> {
        Ok(match self {
            Predictor::Logistic(m) => m.predict_proba(x)?,
            Predictor::Majority(c) => vec![if *c == 1 { 1.0 - PROBA_EPS } else { PROBA_EPS }; x.rows()],
        })
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<u8>, RunnerError> {
        Ok(match self {
            Predictor::Logistic(m) => m.predict(x, 0.5)?,
            Predictor::Majority(c) => vec![*c; x.rows()],
        })
    }
}

fn majority(y: &[u8]) -> u8 {
    let ones = y.iter().filter(|&&v| v == 1).count();
    u8::from(2 * ones > y.len())
}

fn single_class(y: &[u8]) -> bool {
    !(y.contains(&0) && y.contains(&1))
}

/// Grid-searches `(c, max_iter)` on the labeled rows; falls back to the
/// untuned defaults when the pool cannot be stratified.
fn tune(cfg: &ExperimentConfig, ds: &Dataset, labeled: &[usize], seed: u64) -> Result<TrainConfig, RunnerError> {
    let base = cfg.train_base();
    let y: Vec<u8> = labeled.iter().map(|&i| ds.y[i]).collect();
    if single_class(&y) {
        return Ok(base);
    }
    let x = ds.x.select_rows(labeled);
    match classifier::grid_search(&x, &y, &cfg.grid(seed), &base) {
        Ok(g) => Ok(g.best),
        Err(classifier::ClassifierError::InfeasibleStratification { class, count, folds }) => {
            log::warn!("class {class} has {count} labeled rows, fewer than {folds} folds; using untuned settings");
            Ok(base)
        }
        Err(e) => Err(e.into()),
    }
}

fn train(
    ds: &Dataset,
    labeled: &[usize],
    tc: &TrainConfig,
    warm: Option<&Predictor>,
) -> Result<Predictor, RunnerError> {
    let y: Vec<u8> = labeled.iter().map(|&i| ds.y[i]).collect();
    if single_class(&y) {
        return Ok(Predictor::Majority(majority(&y)));
    }
    let x = ds.x.select_rows(labeled);
    let model = match warm {
        Some(Predictor::Logistic(prev)) => classifier::fit_warm(&x, &y, tc, prev)?,
        _ => classifier::fit(&x, &y, tc)?,
    };
    Ok(Predictor::Logistic(model))
}

fn fnv1a(indices: &[usize]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in indices {
        for b in (i as u64).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

struct Selection {
    chosen: Vec<usize>,
    picks: Vec<(Option<acquisition::Pick>, usize)>,
    dump: Option<ClusterDump>,
}

/// Chooses up to `batch_size` global indices from `pool`.
fn select(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    pool: &[usize],
    proba: &[f64],
    seed: u64,
    run: usize,
    iteration: usize,
) -> Result<Selection, RunnerError> {
    let b = cfg.batch_size;
    match cfg.strategy {
        Strategy::EntropyBaseline => {
            let chosen: Vec<usize> = acquisition::entropy_baseline(proba, b).into_iter().map(|p| pool[p]).collect();
            let picks = chosen.iter().map(|&i| (None, i)).collect();
            Ok(Selection { chosen, picks, dump: None })
        }
        Strategy::RandomBaseline => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_RANDOM + iteration as u64));
            let chosen: Vec<usize> = sample(&mut rng, pool.len(), b.min(pool.len()))
                .into_iter()
                .map(|p| pool[p])
                .collect();
            let picks = chosen.iter().map(|&i| (None, i)).collect();
            Ok(Selection { chosen, picks, dump: None })
        }
        Strategy::Falcur => {
            let mut positions: Vec<usize> = match cfg.pre_filter {
                Some(q) if q < pool.len() => acquisition::entropy_baseline(proba, q),
                _ => (0..pool.len()).collect(),
            };
            positions.sort_unstable();
            let subset: Vec<usize> = positions.iter().map(|&p| pool[p]).collect();
            let k = cfg.k.min(subset.len());
            let cc = fair_clustering::FairKMConfig {
                k,
                ..cfg.clustering(derive_seed(seed, STREAM_CLUSTER + iteration as u64))
            };
            let model = fair_clustering::fit(&ds.x.select_rows(&subset), &ds.sensitive_codes(&subset), &cc)?;
            let members: Vec<Vec<usize>> = model
                .members()
                .into_iter()
                .map(|m| m.into_iter().map(|p| subset[p]).collect())
                .collect();
            let mut lookup = vec![f64::NAN; ds.n()];
            for (&i, &p) in pool.iter().zip(proba) {
                lookup[i] = p;
            }
            let scores = acquisition::score_clusters(&ds.x, &members, |i| lookup[i], cfg.beta, cfg.score_form);
            let sel = acquisition::select_from_scores(&model.ranking, &scores, b);
            let picks = sel.trace.iter().map(|p| (Some(*p), p.index)).collect();
            let dump = cfg.dump_clusters.then(|| ClusterDump {
                run,
                iteration,
                indices: subset.clone(),
                assignment: model.assignment.clone(),
                per_cluster_fairness: model.per_cluster_fairness.clone(),
                ranking: model.ranking.clone(),
            });
            Ok(Selection {
                chosen: sel.chosen,
                picks,
                dump,
            })
        }
    }
}

fn run_once(cfg: &ExperimentConfig, ds: &Dataset, run: usize) -> Result<RunOutput, RunnerError> {
    let seed = cfg.master_seed.wrapping_add(run as u64);
    let n = ds.n();
    let mut pools = data::split(ds, &cfg.split_spec(derive_seed(seed, STREAM_SPLIT)))?;
    let test_x = ds.x.select_rows(&pools.test);
    let test_y: Vec<u8> = pools.test.iter().map(|&i| ds.y[i]).collect();
    let test_s: Vec<u8> = pools.test.iter().map(|&i| ds.s[i]).collect();

    let mut tc = tune(cfg, ds, &pools.labeled, derive_seed(seed, STREAM_GRID))?;
    let mut model = train(ds, &pools.labeled, &tc, None)?;
    let mut out = RunOutput::default();

    for t in 1..=cfg.iterations {
        if pools.unlabeled.is_empty() {
            if let Some(last) = out.records.last_mut() {
                last.exhausted = true;
            }
            break;
        }
        let pool = pools.unlabeled.clone();
        let proba = model.proba(&ds.x.select_rows(&pool))?;
        let sel = select(cfg, ds, &pool, &proba, seed, run, t)?;

        // Simulated oracle: the revealed label is the withheld ground truth.
        for (pick, (p, index)) in sel.picks.iter().enumerate() {
            if cfg.trace {
                out.traces.push(TraceLine {
                    run,
                    iteration: t,
                    pick,
                    index: *index,
                    label: ds.y[*index],
                    round: p.map(|p| p.round),
                    rank: p.map(|p| p.rank),
                    cluster: p.map(|p| p.cluster),
                });
            }
        }
        out.cluster_dumps.extend(sel.dump);
        pools.label(&sel.chosen)?;
        assert!(pools.is_partition_of(n), "labeled, unlabeled and test sets must partition the data");

        if cfg.research_per_iteration {
            tc = tune(cfg, ds, &pools.labeled, derive_seed(seed, STREAM_REGRID + t as u64))?;
        }
        model = train(ds, &pools.labeled, &tc, cfg.warm_start.then_some(&model))?;
        let pred = model.predict(&test_x)?;
        let mut metrics = metrics::evaluate(&test_y, &pred, &test_s, cfg.eodds_variant)?;
        metrics.run = run;
        metrics.iteration = t;
        let exhausted = sel.chosen.len() < cfg.batch_size;
        out.records.push(RunRecord {
            metrics,
            labeled: pools.labeled.len(),
            unlabeled: pools.unlabeled.len(),
            selected: sel.chosen.len(),
            fallback: matches!(model, Predictor::Majority(_)),
            exhausted,
            c: tc.c,
            max_iter: tc.max_iter,
            trace_digest: fnv1a(&sel.chosen),
        });
        if exhausted {
            break;
        }
    }
    Ok(out)
}
