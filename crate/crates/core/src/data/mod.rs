//! Tabular input: CSV loading, preprocessing and pool splits.
//!
//! Raw rows are kept as strings until [`preprocess`] drops rows with missing
//! tokens, one-hot encodes categorical columns, min-max scales numeric
//! columns and maps the label and sensitive columns to `{0,1}` codes.

mod load;
mod preprocess;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Matrix;

pub use load::load_csv;
pub use preprocess::{preprocess, PreprocessOptions};
pub use split::{split, PoolState, SplitSpec};

/// Tokens treated as missing when none are configured.
pub const DEFAULT_MISSING_TOKENS: [&str; 5] = ["", "NA", "NaN", "Null", "?"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header does not match schema (missing: {missing:?}, unexpected: {unexpected:?})")]
    SchemaMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("token {token:?} does not occur in column {column:?}")]
    UnknownToken { column: String, token: String },
    #[error("row {row}, column {column:?}: {value:?} is not a number")]
    NotNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("no rows left after removing missing values")]
    EmptyDataset,
    #[error("sensitive attribute has a single group after preprocessing")]
    SingleGroup,
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("index {0} is not in the unlabeled pool")]
    NotUnlabeled(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    /// The binary target. Exactly one per schema.
    Label,
    Sensitive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Declared column kinds, in the order the columns are processed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self, DataError> {
        let s = Self { columns };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let labels = self.count(ColumnKind::Label);
        if labels != 1 {
            return Err(DataError::InvalidSchema(format!(
                "expected exactly one label column, found {labels}"
            )));
        }
        if self.count(ColumnKind::Sensitive) == 0 {
            return Err(DataError::InvalidSchema(
                "at least one sensitive column is required".into(),
            ));
        }
        let mut names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(DataError::InvalidSchema(format!(
                "duplicate column {:?}",
                w[0]
            )));
        }
        Ok(())
    }

    fn count(&self, kind: ColumnKind) -> usize {
        self.columns.iter().filter(|c| c.kind == kind).count()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// Unparsed table whose columns follow the schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub schema: Schema,
    pub rows: Vec<Vec<String>>,
    pub missing_tokens: Vec<String>,
}

impl RawTable {
    pub fn new(schema: Schema, rows: Vec<Vec<String>>) -> Result<Self, DataError> {
        schema.validate()?;
        let width = schema.columns.len();
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(DataError::RaggedRow {
                row,
                expected: width,
                found: r.len(),
            });
        }
        Ok(Self {
            schema,
            rows,
            missing_tokens: DEFAULT_MISSING_TOKENS.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn with_missing_tokens(mut self, tokens: Vec<String>) -> Self {
        self.missing_tokens = tokens;
        self
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// One sensitive column in dense-code form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveAttribute {
    pub name: String,
    /// Distinct values, sorted; `codes[i]` indexes into this list.
    pub values: Vec<String>,
    pub codes: Vec<usize>,
}

/// Model-ready data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Features, every entry in `[0, 1]`.
    pub x: Matrix,
    /// 1 = positive class.
    pub y: Vec<u8>,
    /// 1 = protected group (first sensitive column), 0 otherwise.
    pub s: Vec<u8>,
    /// All sensitive columns, used by fair clustering.
    pub sensitive: Vec<SensitiveAttribute>,
    pub feature_names: Vec<String>,
    /// Non-fatal notes from preprocessing (e.g. constant columns).
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// Sensitive codes of every attribute restricted to `idx`, attribute-major.
    pub fn sensitive_codes(&self, idx: &[usize]) -> Vec<Vec<usize>> {
        self.sensitive
            .iter()
            .map(|a| idx.iter().map(|&i| a.codes[i]).collect())
            .collect()
    }

    /// Re-encodes the preprocessed data as a raw table: every feature becomes
    /// a numeric column, followed by `__label` and `__sensitive` columns coded
    /// `"1"`/`"0"`.
    pub fn to_raw_table(&self) -> RawTable {
        let mut cols: Vec<ColumnSpec> = self
            .feature_names
            .iter()
            .map(|n| ColumnSpec::new(n.clone(), ColumnKind::Numeric))
            .collect();
        cols.push(ColumnSpec::new("__label", ColumnKind::Label));
        cols.push(ColumnSpec::new("__sensitive", ColumnKind::Sensitive));
        let rows = (0..self.n())
            .map(|i| {
                let mut r: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
                r.push(self.y[i].to_string());
                r.push(self.s[i].to_string());
                r
            })
            .collect();
        RawTable::new(Schema { columns: cols }, rows).expect("re-encoded table is well formed")
    }
}
