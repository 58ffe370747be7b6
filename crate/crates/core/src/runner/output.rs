use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{ExperimentConfig, ExperimentResult, RunRecord, RunnerError};
use crate::metrics::METRIC_NAMES;

/// Column order of `records.csv`.
pub const RECORD_COLUMNS: [&str; 21] = [
    "run",
    "iteration",
    "labeled",
    "unlabeled",
    "selected",
    "n_test",
    "accuracy",
    "f1",
    "gmeans",
    "sp_diff",
    "eopp_diff",
    "eodds_diff",
    "sp_signed",
    "eopp_signed",
    "eodds_signed",
    "fallback",
    "exhausted",
    "c",
    "max_iter",
    "trace_digest",
    "undefined",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Mean and sample standard deviation; the deviation needs two values.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

fn record_row(r: &RunRecord) -> Vec<String> {
    let m = &r.metrics;
    let mut row = vec![
        m.run.to_string(),
        m.iteration.to_string(),
        r.labeled.to_string(),
        r.unlabeled.to_string(),
        r.selected.to_string(),
        m.n_test.to_string(),
    ];
    row.extend(m.values().iter().map(|v| opt(*v)));
    row.extend([
        r.fallback.to_string(),
        r.exhausted.to_string(),
        r.c.to_string(),
        r.max_iter.to_string(),
        r.trace_digest.clone(),
        m.undefined.join(";"),
    ]);
    row
}

/// Per-iteration mean, standard deviation and count of each metric across
/// runs; undefined values are left out.
pub fn summary_rows(records: &[RunRecord]) -> Vec<Vec<String>> {
    let last = records.iter().map(|r| r.metrics.iteration).max().unwrap_or(0);
    let mut rows = Vec::new();
    for t in 1..=last {
        let at: Vec<&RunRecord> = records.iter().filter(|r| r.metrics.iteration == t).collect();
        if at.is_empty() {
            continue;
        }
        let mut row = vec![t.to_string(), at.len().to_string()];
        for k in 0..METRIC_NAMES.len() {
            let vals: Vec<f64> = at.iter().filter_map(|r| r.metrics.values()[k]).collect();
            let (mean, std) = mean_std(&vals);
            row.extend([opt(mean), opt(std), vals.len().to_string()]);
        }
        rows.push(row);
    }
    rows
}

fn summary_header() -> Vec<String> {
    let mut h = vec!["iteration".to_string(), "runs".to_string()];
    for m in METRIC_NAMES {
        h.extend([format!("{m}_mean"), format!("{m}_std"), format!("{m}_n")]);
    }
    h
}

/// Each run's last record.
pub fn final_records(records: &[RunRecord]) -> Vec<&RunRecord> {
    let mut out: Vec<&RunRecord> = Vec::new();
    for r in records {
        match out.last_mut() {
            Some(prev) if prev.metrics.run == r.metrics.run => *prev = r,
            _ => out.push(r),
        }
    }
    out
}

/// Mean of `metric` over each run's final iteration.
pub fn final_mean(records: &[RunRecord], metric: &str) -> Option<f64> {
    let vals: Vec<f64> = final_records(records).iter().filter_map(|r| r.metrics.get(metric)).collect();
    mean_std(&vals).0
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), RunnerError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RunnerError::Csv(path.display().to_string(), e))?;
    w.write_record(header).map_err(|e| RunnerError::Csv(path.display().to_string(), e))?;
    for row in rows {
        w.write_record(row).map_err(|e| RunnerError::Csv(path.display().to_string(), e))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Serialize)]
struct Echo<'a> {
    version: &'a str,
    config: &'a ExperimentConfig,
}

/// Writes `records.csv`, `summary.csv`, `final.csv` and `config.echo`, plus
/// `trace.jsonl` and `clusters/` when the result carries them.
pub fn write_results(res: &ExperimentResult, out_dir: impl AsRef<Path>) -> Result<(), RunnerError> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let header: Vec<String> = RECORD_COLUMNS.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = res.records.iter().map(record_row).collect();
    write_csv(&dir.join("records.csv"), &header, &rows)?;
    write_csv(&dir.join("summary.csv"), &summary_header(), &summary_rows(&res.records))?;

    let finals = final_records(&res.records);
    let mut final_rows = Vec::new();
    for (k, name) in METRIC_NAMES.iter().enumerate() {
        let last: Vec<f64> = finals.iter().filter_map(|r| r.metrics.values()[k]).collect();
        let all: Vec<f64> = res.records.iter().filter_map(|r| r.metrics.values()[k]).collect();
        let (mean, std) = mean_std(&last);
        final_rows.push(vec![
            name.to_string(),
            opt(mean),
            opt(std),
            last.len().to_string(),
            opt(mean_std(&all).0),
        ]);
    }
    let final_header: Vec<String> = ["metric", "final_mean", "final_std", "final_n", "all_iterations_mean"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_csv(&dir.join("final.csv"), &final_header, &final_rows)?;

    let echo_path = dir.join("config.echo");
    let mut echo = serde_json::to_string_pretty(&Echo {
        version: &res.version,
        config: &res.config,
    })?;
    echo.push('\n');
    fs::write(&echo_path, echo).map_err(io_err(&echo_path))?;

    if !res.traces.is_empty() {
        let path = dir.join("trace.jsonl");
        let mut buf = Vec::new();
        for line in &res.traces {
            serde_json::to_writer(&mut buf, line)?;
            buf.push(b'\n');
        }
        fs::write(&path, buf).map_err(io_err(&path))?;
    }

    if !res.cluster_dumps.is_empty() {
        let cdir = dir.join("clusters");
        fs::create_dir_all(&cdir).map_err(io_err(&cdir))?;
        let header: Vec<String> = ["index", "cluster", "cluster_rank", "cluster_fairness"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for d in &res.cluster_dumps {
            let mut rank = vec![0; d.ranking.len()];
            for (pos, &c) in d.ranking.iter().enumerate() {
                rank[c] = pos;
            }
            let rows: Vec<Vec<String>> = d
                .indices
                .iter()
                .zip(&d.assignment)
                .map(|(i, &c)| {
                    vec![
                        i.to_string(),
                        c.to_string(),
                        rank[c].to_string(),
                        d.per_cluster_fairness[c].to_string(),
                    ]
                })
                .collect();
            write_csv(&cdir.join(format!("run{}_iter{}.csv", d.run, d.iteration)), &header, &rows)?;
        }
    }
    Ok(())
}

/// Appends one line per sweep value with the final-iteration means.
pub fn write_sweep_table(
    path: &Path,
    param: &str,
    entries: &[(String, ExperimentResult)],
) -> Result<(), RunnerError> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    let mut header = vec![param.to_string()];
    header.extend(METRIC_NAMES.iter().map(|m| format!("{m}_final_mean")));
    writeln!(file, "{}", header.join(",")).map_err(io_err(path))?;
    for (value, res) in entries {
        let mut row = vec![value.clone()];
        row.extend(METRIC_NAMES.iter().map(|m| opt(final_mean(&res.records, m))));
        writeln!(file, "{}", row.join(",")).map_err(io_err(path))?;
    }
    Ok(())
}
