//! Performance and group-fairness metrics for binary predictions.
//!
//! Group codes follow the dataset convention: `s = 1` is the protected group,
//! `s = 0` the non-protected one. Whenever a rate conditions on an empty set
//! the metric is reported as [`MetricError::Undefined`] instead of a number.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("value {0} is not a binary code")]
    NotBinary(u8),
    #[error("{0} is undefined for this input")]
    Undefined(&'static str),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn check_binary(v: &[u8]) -> Result<(), MetricError> {
    match v.iter().find(|&&x| x > 1) {
        Some(&x) => Err(MetricError::NotBinary(x)),
        None => Ok(()),
    }
}

fn check_len(a: &[u8], b: &[u8]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionCounts, MetricError> {
    check_len(y_true, y_pred)?;
    check_binary(y_true)?;
    check_binary(y_pred)?;
    let mut c = ConfusionCounts::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (1, 0) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize, name: &'static str) -> Result<f64, MetricError> {
    if den == 0 {
        Err(MetricError::Undefined(name))
    } else {
        Ok(num as f64 / den as f64)
    }
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64, MetricError> {
    ratio(c.tp + c.tn, c.total(), "accuracy")
}

pub fn error_rate(c: &ConfusionCounts) -> Result<f64, MetricError> {
    ratio(c.fp + c.fn_, c.total(), "error rate")
}

/// Geometric mean of sensitivity and specificity.
pub fn gmeans(c: &ConfusionCounts) -> Result<f64, MetricError> {
    let tpr = ratio(c.tp, c.tp + c.fn_, "gmeans")?;
    let tnr = ratio(c.tn, c.tn + c.fp, "gmeans")?;
    Ok((tpr * tnr).sqrt())
}

/// F1 score. Zero when there are no true positives but some errors; undefined
/// when the input holds no positives at all.
pub fn f1(c: &ConfusionCounts) -> Result<f64, MetricError> {
    if c.tp + c.fp + c.fn_ == 0 {
        return Err(MetricError::Undefined("f1"));
    }
    if c.tp == 0 {
        return Ok(0.0);
    }
    let precision = c.tp as f64 / (c.tp + c.fp) as f64;
    let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Per-group rates, indexed by group code. `None` marks an empty
/// conditioning set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    /// P(ŷ=1 | S=g)
    pub positive_rate: [Option<f64>; 2],
    /// P(ŷ=1 | S=g, y=1)
    pub tpr: [Option<f64>; 2],
    /// P(ŷ=1 | S=g, y=0)
    pub fpr: [Option<f64>; 2],
}

pub fn group_rates(y_true: &[u8], y_pred: &[u8], s: &[u8]) -> Result<GroupRates, MetricError> {
    check_len(y_true, y_pred)?;
    check_len(y_true, s)?;
    check_binary(y_true)?;
    check_binary(y_pred)?;
    check_binary(s)?;
    // [group][label] -> (count, predicted positive)
    let mut cells = [[(0usize, 0usize); 2]; 2];
    for ((&t, &p), &g) in y_true.iter().zip(y_pred).zip(s) {
        let cell = &mut cells[g as usize][t as usize];
        cell.0 += 1;
        cell.1 += p as usize;
    }
    let rate = |n: usize, pos: usize| (n > 0).then(|| pos as f64 / n as f64);
    let mut r = GroupRates::default();
    for g in 0..2 {
        let [neg, pos] = cells[g];
        r.positive_rate[g] = rate(neg.0 + pos.0, neg.1 + pos.1);
        r.tpr[g] = rate(pos.0, pos.1);
        r.fpr[g] = rate(neg.0, neg.1);
    }
    Ok(r)
}

fn signed_gap(pair: [Option<f64>; 2], name: &'static str) -> Result<f64, MetricError> {
    match pair {
        [Some(a), Some(b)] => Ok(a - b),
        _ => Err(MetricError::Undefined(name)),
    }
}

/// P(ŷ=1|S=0) − P(ŷ=1|S=1).
pub fn statistical_parity_signed(y_pred: &[u8], s: &[u8]) -> Result<f64, MetricError> {
    // Labels do not enter the positive rate.
    let r = group_rates(y_pred, y_pred, s)?;
    signed_gap(r.positive_rate, "statistical parity")
}

pub fn statistical_parity_diff(y_pred: &[u8], s: &[u8]) -> Result<f64, MetricError> {
    statistical_parity_signed(y_pred, s).map(f64::abs)
}

/// TPR(S=0) − TPR(S=1).
pub fn equal_opportunity_signed(y_true: &[u8], y_pred: &[u8], s: &[u8]) -> Result<f64, MetricError> {
    let r = group_rates(y_true, y_pred, s)?;
    signed_gap(r.tpr, "equal opportunity")
}

pub fn equal_opportunity_diff(y_true: &[u8], y_pred: &[u8], s: &[u8]) -> Result<f64, MetricError> {
    equal_opportunity_signed(y_true, y_pred, s).map(f64::abs)
}

/// How the FPR and TPR gaps are combined into one equalized-odds number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualizedOddsVariant {
    /// |½(FPR₀ − FPR₁) + ½(TPR₀ − TPR₁)|; opposite gaps can cancel.
    #[default]
    Literal,
    /// ½|FPR₀ − FPR₁| + ½|TPR₀ − TPR₁|.
    AbsoluteAverage,
}

/// ½(FPR₀ − FPR₁) + ½(TPR₀ − TPR₁).
pub fn avg_equalized_odds_signed(y_true: &[u8], y_pred: &[u8], s: &[u8]) -> Result<f64, MetricError> {
    let r = group_rates(y_true, y_pred, s)?;
    let fpr = signed_gap(r.fpr, "equalized odds")?;
    let tpr = signed_gap(r.tpr, "equalized odds")?;
    Ok(0.5 * fpr + 0.5 * tpr)
}

pub fn avg_equalized_odds_diff(
    y_true: &[u8],
    y_pred: &[u8],
    s: &[u8],
    variant: EqualizedOddsVariant,
) -> Result<f64, MetricError> {
    match variant {
        EqualizedOddsVariant::Literal => avg_equalized_odds_signed(y_true, y_pred, s).map(f64::abs),
        EqualizedOddsVariant::AbsoluteAverage => {
            let r = group_rates(y_true, y_pred, s)?;
            let fpr = signed_gap(r.fpr, "equalized odds")?;
            let tpr = signed_gap(r.tpr, "equalized odds")?;
            Ok(0.5 * fpr.abs() + 0.5 * tpr.abs())
        }
    }
}

/// Every metric for one evaluation. Undefined metrics are `None` and listed
/// in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run: usize,
    pub iteration: usize,
    pub n_test: usize,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub gmeans: Option<f64>,
    pub sp_diff: Option<f64>,
    pub eopp_diff: Option<f64>,
    pub eodds_diff: Option<f64>,
    pub sp_signed: Option<f64>,
    pub eopp_signed: Option<f64>,
    pub eodds_signed: Option<f64>,
    pub undefined: Vec<String>,
}

/// Names of the metric columns, in record order.
pub const METRIC_NAMES: [&str; 9] = [
    "accuracy",
    "f1",
    "gmeans",
    "sp_diff",
    "eopp_diff",
    "eodds_diff",
    "sp_signed",
    "eopp_signed",
    "eodds_signed",
];

impl MetricRecord {
    pub fn values(&self) -> [Option<f64>; 9] {
        [
            self.accuracy,
            self.f1,
            self.gmeans,
            self.sp_diff,
            self.eopp_diff,
            self.eodds_diff,
            self.sp_signed,
            self.eopp_signed,
            self.eodds_signed,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let i = METRIC_NAMES.iter().position(|n| *n == name)?;
        self.values()[i]
    }
}

/// Evaluates predictions. Only shape errors (length, non-binary codes) fail;
/// undefined metrics are recorded.
pub fn evaluate(
    y_true: &[u8],
    y_pred: &[u8],
    s: &[u8],
    variant: EqualizedOddsVariant,
) -> Result<MetricRecord, MetricError> {
    let c = confusion(y_true, y_pred)?;
    group_rates(y_true, y_pred, s)?;
    let mut undefined = Vec::new();
    let mut keep = |name: &str, r: Result<f64, MetricError>| match r {
        Ok(v) => Some(v),
        Err(MetricError::Undefined(_)) => {
            undefined.push(name.to_string());
            None
        }
        Err(e) => unreachable!("shape already checked: {e}"),
    };
    let accuracy = keep("accuracy", accuracy(&c));
    let f1 = keep("f1", f1(&c));
    let gmeans = keep("gmeans", gmeans(&c));
    let sp_signed = keep("sp_diff", statistical_parity_signed(y_pred, s));
    let eopp_signed = keep("eopp_diff", equal_opportunity_signed(y_true, y_pred, s));
    let eodds_diff = keep("eodds_diff", avg_equalized_odds_diff(y_true, y_pred, s, variant));
    let eodds_signed = avg_equalized_odds_signed(y_true, y_pred, s).ok();
    Ok(MetricRecord {
        run: 0,
        iteration: 0,
        n_test: y_true.len(),
        accuracy,
        f1,
        gmeans,
        sp_diff: sp_signed.map(f64::abs),
        eopp_diff: eopp_signed.map(f64::abs),
        eodds_diff,
        sp_signed,
        eopp_signed,
        eodds_signed,
        undefined,
    })
}
