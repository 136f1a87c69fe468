//! Per-item error rates and the error-rate regression.
//!
//! Each item contributes one observation: its error rate, explained by the
//! displayed-to-truth PWLD, the displayed word length, and whether the
//! correct answer was offered (coded 1 = offered, 2 = not offered). Items
//! are weighted by how many answers they received.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::{ScoredResponse, Task};

pub const CSV_HEADER: [&str; 8] = [
    "task_id",
    "pwld",
    "word_length",
    "existence_code",
    "n_responses",
    "n_incorrect",
    "error_rate",
    "weight",
];

const COLUMN_NAMES: [&str; 4] = ["intercept", "pwld", "word_length", "existence_code"];
const MIN_ITEMS: usize = 5;
/// A column whose QR diagonal falls below this share of its own norm is
/// treated as a linear combination of the columns before it.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ExistenceCode {
    Exists = 1,
    Missing = 2,
}

impl ExistenceCode {
    pub fn from_listed(listed: bool) -> Self {
        if listed {
            ExistenceCode::Exists
        } else {
            ExistenceCode::Missing
        }
    }

    pub fn value(self) -> u8 {
        self as u8
    }
}

impl From<ExistenceCode> for u8 {
    fn from(code: ExistenceCode) -> u8 {
        code.value()
    }
}

impl TryFrom<u8> for ExistenceCode {
    type Error = AnalyticsError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(ExistenceCode::Exists),
            2 => Ok(ExistenceCode::Missing),
            other => Err(AnalyticsError::ExistenceCode(other)),
        }
    }
}

impl fmt::Display for ExistenceCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no responses for the item")]
    NoResponses,
    #[error("response for task {found} mixed into item {expected}")]
    MixedTasks { expected: String, found: String },
    #[error("response to task {0} is unscored")]
    Unscored(String),
    #[error("task {0} has no ground truth, its PWLD is undefined")]
    NoTruth(String),
    #[error("existence code must be 1 or 2, got {0}")]
    ExistenceCode(u8),
    #[error("regression needs at least {MIN_ITEMS} items, got {0}")]
    TooFewItems(usize),
    #[error("observation {index}: weight must be positive and finite, got {weight}")]
    Weight { index: usize, weight: f64 },
    #[error("total weight {0} leaves no residual degrees of freedom")]
    NoResidualDf(f64),
    #[error("design matrix is rank deficient: `{column}` is collinear with {others:?}")]
    Collinear {
        column: &'static str,
        others: Vec<&'static str>,
    },
    #[error("csv line {line}: {message}")]
    CsvRow { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Aggregated responses of one item plus its regression predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemStats {
    pub task_id: String,
    pub n_responses: u64,
    pub n_incorrect: u64,
    pub error_rate: f64,
    pub weight: u64,
    pub pwld: f64,
    pub word_length: u64,
    pub existence_code: ExistenceCode,
}

impl ItemStats {
    pub fn observation(&self) -> Observation {
        Observation {
            pwld: self.pwld,
            word_length: self.word_length as f64,
            existence_code: f64::from(self.existence_code.value()),
            response: self.error_rate,
            weight: self.weight as f64,
        }
    }
}

/// Error-rate statistics of one task from its scored responses.
pub fn item_error_rate(
    task: &Task,
    responses: &[ScoredResponse],
) -> Result<ItemStats, AnalyticsError> {
    if responses.is_empty() {
        return Err(AnalyticsError::NoResponses);
    }
    let pwld = task
        .complexity()
        .ok_or_else(|| AnalyticsError::NoTruth(task.id().to_owned()))?;
    let mut n_incorrect = 0;
    for r in responses {
        if r.task_id != task.id() {
            return Err(AnalyticsError::MixedTasks {
                expected: task.id().to_owned(),
                found: r.task_id.clone(),
            });
        }
        if !r.is_scored() {
            return Err(AnalyticsError::Unscored(r.task_id.clone()));
        }
        if !r.is_exact {
            n_incorrect += 1;
        }
    }
    let n_responses = responses.len() as u64;
    Ok(ItemStats {
        task_id: task.id().to_owned(),
        n_responses,
        n_incorrect,
        error_rate: n_incorrect as f64 / n_responses as f64,
        weight: n_responses,
        pwld,
        word_length: task.word_length() as u64,
        existence_code: ExistenceCode::from_listed(task.truth_listed()),
    })
}

/// Groups responses by task and aggregates every task that has at least one
/// scored response. Output is sorted by task id.
pub fn aggregate_items(
    tasks: &[Task],
    responses: &[ScoredResponse],
) -> Result<Vec<ItemStats>, AnalyticsError> {
    let mut by_task: BTreeMap<&str, Vec<ScoredResponse>> = BTreeMap::new();
    for r in responses.iter().filter(|r| r.is_scored()) {
        by_task
            .entry(r.task_id.as_str())
            .or_default()
            .push(r.clone());
    }
    let mut items = Vec::new();
    for task in tasks {
        if let Some(rs) = by_task.get(task.id()) {
            items.push(item_error_rate(task, rs)?);
        }
    }
    items.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok(items)
}

/// One weighted observation for [`fit_ols`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub pwld: f64,
    pub word_length: f64,
    pub existence_code: f64,
    pub response: f64,
    pub weight: f64,
}

impl Observation {
    fn row(&self) -> [f64; 4] {
        [1.0, self.pwld, self.word_length, self.existence_code]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub intercept: f64,
    pub coef_pwld: f64,
    pub coef_length: f64,
    pub coef_existence: f64,
    pub r_squared: f64,
    pub f_statistic: f64,
    /// Model and residual degrees of freedom.
    pub df: (f64, f64),
}

impl RegressionModel {
    /// The model fitted on the pilot study data.
    pub fn published() -> Self {
        RegressionModel {
            intercept: -0.425,
            coef_pwld: 3.918,
            coef_length: -0.142,
            coef_existence: 2.545,
            r_squared: 0.653,
            f_statistic: 135.238,
            df: (3.0, 216.0),
        }
    }

    pub fn coefficients(&self) -> [f64; 4] {
        [
            self.intercept,
            self.coef_pwld,
            self.coef_length,
            self.coef_existence,
        ]
    }

    /// Predicted error rate. Not clamped: the weighted scale can leave [0, 1].
    ///
    /// The continuous part is snapped to the binary grid of the existence
    /// coefficient, so the code 2 and code 1 predictions differ by exactly
    /// that coefficient whenever both fit the grid (|prediction| < 16 for the
    /// published model).
    pub fn predict(&self, pwld: f64, word_length: u64, existence: ExistenceCode) -> f64 {
        let rest = self.intercept + self.coef_pwld * pwld + self.coef_length * word_length as f64;
        snap(rest, grid_step(self.coef_existence))
            + self.coef_existence * f64::from(existence.value())
    }
}

/// Value of the lowest set mantissa bit of `x`.
fn grid_step(x: f64) -> Option<f64> {
    if !x.is_normal() {
        return None;
    }
    let bits = x.abs().to_bits();
    let exponent = ((bits >> 52) & 0x7ff) as i32;
    let mantissa = (bits & ((1 << 52) - 1)) | (1 << 52);
    Some(2f64.powi(exponent - 1075 + mantissa.trailing_zeros() as i32))
}

fn snap(x: f64, step: Option<f64>) -> f64 {
    match step {
        Some(q) if (x / q).abs() < 2f64.powi(53) => (x / q).round() * q,
        _ => x,
    }
}

pub fn predict_error_rate(
    model: &RegressionModel,
    pwld: f64,
    word_length: u64,
    existence: ExistenceCode,
) -> f64 {
    model.predict(pwld, word_length, existence)
}

/// Fits error rate on PWLD, word length and existence code by weighted least
/// squares, treating weights as frequency weights.
///
/// Solved through a QR factorization of the weight-scaled design matrix.
/// The residual degrees of freedom are `sum(weights) - 4`.
pub fn fit_ols(observations: &[Observation]) -> Result<RegressionModel, AnalyticsError> {
    let n = observations.len();
    if n < MIN_ITEMS {
        return Err(AnalyticsError::TooFewItems(n));
    }
    for (index, o) in observations.iter().enumerate() {
        if !(o.weight.is_finite() && o.weight > 0.0) {
            return Err(AnalyticsError::Weight {
                index,
                weight: o.weight,
            });
        }
    }
    let total_weight: f64 = observations.iter().map(|o| o.weight).sum();
    let df_residual = total_weight - 4.0;
    if df_residual <= 0.0 {
        return Err(AnalyticsError::NoResidualDf(total_weight));
    }

    let x = DMatrix::from_fn(n, 4, |i, j| {
        observations[i].weight.sqrt() * observations[i].row()[j]
    });
    let y = DVector::from_fn(n, |i, _| {
        observations[i].weight.sqrt() * observations[i].response
    });

    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..4 {
        let norm = x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOLERANCE * norm {
            return Err(AnalyticsError::Collinear {
                column: COLUMN_NAMES[j],
                others: COLUMN_NAMES[..j].to_vec(),
            });
        }
    }
    let rhs = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&rhs)
        .expect("R has a non-zero diagonal");

    let mean = observations
        .iter()
        .map(|o| o.weight * o.response)
        .sum::<f64>()
        / total_weight;
    let (mut sst, mut sse) = (0.0, 0.0);
    for o in observations {
        let fitted: f64 = o.row().iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
        sst += o.weight * (o.response - mean).powi(2);
        sse += o.weight * (o.response - fitted).powi(2);
    }
    let ssr = (sst - sse).max(0.0);
    let r_squared = if sst > 0.0 {
        (1.0 - sse / sst).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let f_statistic = if sse > 0.0 {
        (ssr / 3.0) / (sse / df_residual)
    } else if ssr > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };

    Ok(RegressionModel {
        intercept: beta[0],
        coef_pwld: beta[1],
        coef_length: beta[2],
        coef_existence: beta[3],
        r_squared,
        f_statistic,
        df: (3.0, df_residual),
    })
}

pub fn fit_items(items: &[ItemStats]) -> Result<RegressionModel, AnalyticsError> {
    let observations: Vec<Observation> = items.iter().map(ItemStats::observation).collect();
    fit_ols(&observations)
}

/// Renders item statistics as CSV, rows sorted by task id.
pub fn export_csv(items: &[ItemStats]) -> String {
    let mut sorted: Vec<&ItemStats> = items.iter().collect();
    sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for item in sorted {
        w.write_record([
            item.task_id.clone(),
            format!("{:.6}", item.pwld),
            item.word_length.to_string(),
            item.existence_code.to_string(),
            item.n_responses.to_string(),
            item.n_incorrect.to_string(),
            format!("{:.6}", item.error_rate),
            item.weight.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

/// Parses CSV written by [`export_csv`]. The error rate is recomputed from
/// the counts and must agree with the stored column.
pub fn parse_items_csv(data: &str) -> Result<Vec<ItemStats>, AnalyticsError> {
    let mut reader = csv::Reader::from_reader(data.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(AnalyticsError::CsvRow {
            line: 1,
            message: format!("header must be `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut items = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| AnalyticsError::CsvRow { line, message };
        let field = |i: usize| record.get(i).unwrap_or_default();
        let float = |i: usize| {
            field(i)
                .parse::<f64>()
                .map_err(|e| bad(format!("{}: {e}", CSV_HEADER[i])))
        };
        let int = |i: usize| {
            field(i)
                .parse::<u64>()
                .map_err(|e| bad(format!("{}: {e}", CSV_HEADER[i])))
        };
        let code = u8::try_from(int(3)?).map_err(|e| bad(format!("existence_code: {e}")))?;
        let existence_code = ExistenceCode::try_from(code).map_err(|e| bad(e.to_string()))?;
        let n_responses = int(4)?;
        let n_incorrect = int(5)?;
        if n_responses == 0 || n_incorrect > n_responses {
            return Err(bad(format!(
                "inconsistent counts: {n_incorrect} incorrect of {n_responses}"
            )));
        }
        let error_rate = n_incorrect as f64 / n_responses as f64;
        if (float(6)? - error_rate).abs() > 5e-7 {
            return Err(bad(format!(
                "error_rate does not match {n_incorrect}/{n_responses}"
            )));
        }
        items.push(ItemStats {
            task_id: field(0).to_owned(),
            pwld: float(1)?,
            word_length: int(2)?,
            existence_code,
            n_responses,
            n_incorrect,
            error_rate,
            weight: int(7)?,
        });
    }
    Ok(items)
}
