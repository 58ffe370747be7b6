use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ColumnKind, DataError, Dataset, RawTable, SensitiveAttribute};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    /// Label token mapped to class 1; every other token maps to 0.
    pub positive_label: String,
    /// Value of the first sensitive column coded as the protected group (s = 1).
    pub protected_value: String,
    /// One-hot encode sensitive columns into the feature matrix as well.
    #[serde(default)]
    pub include_sensitive_feature: bool,
}

impl PreprocessOptions {
    pub fn new(positive_label: impl Into<String>, protected_value: impl Into<String>) -> Self {
        Self {
            positive_label: positive_label.into(),
            protected_value: protected_value.into(),
            include_sensitive_feature: false,
        }
    }
}

/// Turns a raw table into a [`Dataset`].
///
/// Rows holding any missing token are dropped. Categorical columns expand to
/// one indicator per distinct value (sorted); numeric columns are min-max
/// scaled to `[0, 1]`, and constant numeric columns become all zeros with a
/// warning. Label and sensitive columns never enter `x` unless
/// `include_sensitive_feature` is set.
pub fn preprocess(raw: &RawTable, opts: &PreprocessOptions) -> Result<Dataset, DataError> {
    let schema = &raw.schema;
    schema.validate()?;
    let label_col = schema
        .columns
        .iter()
        .position(|c| c.kind == ColumnKind::Label)
        .expect("validated");
    let first_sensitive = schema
        .columns
        .iter()
        .position(|c| c.kind == ColumnKind::Sensitive)
        .expect("validated");

    require_token(raw, label_col, &opts.positive_label)?;
    require_token(raw, first_sensitive, &opts.protected_value)?;

    let kept: Vec<&Vec<String>> = raw
        .rows
        .iter()
        .filter(|r| !r.iter().any(|v| raw.missing_tokens.iter().any(|m| m == v)))
        .collect();
    if kept.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let n = kept.len();

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut feature_names = Vec::new();
    let mut warnings = Vec::new();
    let mut sensitive = Vec::new();
    let mut y = Vec::new();
    let mut s = Vec::new();

    for (j, col) in schema.columns.iter().enumerate() {
        match col.kind {
            ColumnKind::Numeric => {
                let mut vals = Vec::with_capacity(n);
                for (row, r) in kept.iter().enumerate() {
                    let v: f64 = r[j].parse().map_err(|_| DataError::NotNumeric {
                        row,
                        column: col.name.clone(),
                        value: r[j].clone(),
                    })?;
                    if !v.is_finite() {
                        return Err(DataError::NotNumeric {
                            row,
                            column: col.name.clone(),
                            value: r[j].clone(),
                        });
                    }
                    vals.push(v);
                }
                if !min_max_in_place(&mut vals) {
                    warnings.push(format!(
                        "column {:?} is constant; encoded as zeros",
                        col.name
                    ));
                }
                columns.push(vals);
                feature_names.push(col.name.clone());
            }
            ColumnKind::Categorical => {
                one_hot(&kept, j, &col.name, &mut columns, &mut feature_names);
            }
            ColumnKind::Label => {
                y = kept
                    .iter()
                    .map(|r| u8::from(r[j] == opts.positive_label))
                    .collect();
            }
            ColumnKind::Sensitive => {
                let values: Vec<String> = distinct(&kept, j);
                let codes = kept
                    .iter()
                    .map(|r| values.binary_search(&r[j]).expect("value collected above"))
                    .collect();
                if j == first_sensitive {
                    s = kept
                        .iter()
                        .map(|r| u8::from(r[j] == opts.protected_value))
                        .collect();
                }
                sensitive.push(SensitiveAttribute {
                    name: col.name.clone(),
                    values,
                    codes,
                });
                if opts.include_sensitive_feature {
                    one_hot(&kept, j, &col.name, &mut columns, &mut feature_names);
                }
            }
        }
    }

    if !(s.contains(&0) && s.contains(&1)) {
        return Err(DataError::SingleGroup);
    }

    let d = columns.len();
    let mut x = Matrix::zeros(n, d);
    for (c, vals) in columns.iter().enumerate() {
        for (i, v) in vals.iter().enumerate() {
            x.row_mut(i)[c] = *v;
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    Ok(Dataset {
        x,
        y,
        s,
        sensitive,
        feature_names,
        warnings,
    })
}

fn require_token(raw: &RawTable, col: usize, token: &str) -> Result<(), DataError> {
    if raw.rows.iter().any(|r| r[col] == token) {
        Ok(())
    } else {
        Err(DataError::UnknownToken {
            column: raw.schema.columns[col].name.clone(),
            token: token.to_string(),
        })
    }
}

fn distinct(rows: &[&Vec<String>], j: usize) -> Vec<String> {
    rows.iter()
        .map(|r| r[j].clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn one_hot(
    rows: &[&Vec<String>],
    j: usize,
    name: &str,
    columns: &mut Vec<Vec<f64>>,
    names: &mut Vec<String>,
) {
    for value in distinct(rows, j) {
        columns.push(rows.iter().map(|r| f64::from(u8::from(r[j] == value))).collect());
        names.push(format!("{name}={value}"));
    }
}

/// Rescales to `[0, 1]`. Returns false (and zeroes the column) when constant.
fn min_max_in_place(vals: &mut [f64]) -> bool {
    let (lo, hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi > lo {
        let range = hi - lo;
        for v in vals.iter_mut() {
            *v = (*v - lo) / range;
        }
        true
    } else {
        vals.iter_mut().for_each(|v| *v = 0.0);
        false
    }
}
