//! SRCC, PLCC and prediction-error histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("degenerate input: {0} is constant")]
    DegenerateInput(&'static str),
    #[error("length mismatch: {pred} predictions vs {truth} ground-truth values")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("at least 2 points are required, got {0}")]
    TooFew(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("bin width must be positive, got {0}")]
    BadBinWidth(f64),
}

/// Correlations and error histogram of one prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub srcc: f64,
    pub plcc: f64,
    pub n: usize,
    /// `(bin_center, relative_proportion)` sorted by center.
    pub error_histogram: Vec<(f64, f64)>,
}

fn check(pred: &[f64], truth: &[f64]) -> Result<(), MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    if pred.len() < 2 {
        return Err(MetricError::TooFew(pred.len()));
    }
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite("predictions"));
    }
    if truth.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite("ground truth"));
    }
    let constant = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
    if constant(pred) {
        return Err(MetricError::DegenerateInput("predictions"));
    }
    if constant(truth) {
        return Err(MetricError::DegenerateInput("ground truth"));
    }
    Ok(())
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Fractional ranks (1-based); tied values share the average of their
/// positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end (0-based) share rank mean(start+1..=end)
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Pearson linear correlation coefficient.
pub fn plcc(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    check(pred, truth)?;
    Ok(pearson_unchecked(pred, truth))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn srcc(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    check(pred, truth)?;
    Ok(pearson_unchecked(&average_ranks(pred), &average_ranks(truth)))
}

/// Histogram of `pred - truth` over bins of `bin_width` centered on integer
/// multiples of the width. Proportions sum to 1.
pub fn error_distribution(pred: &[f64], truth: &[f64], bin_width: f64) -> Result<Vec<(f64, f64)>, MetricError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(MetricError::BadBinWidth(bin_width));
    }
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    if pred.is_empty() {
        return Ok(Vec::new());
    }
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for (p, t) in pred.iter().zip(truth) {
        let err = p - t;
        if !err.is_finite() {
            return Err(MetricError::NonFinite("errors"));
        }
        *bins.entry((err / bin_width).round() as i64).or_default() += 1;
    }
    let n = pred.len() as f64;
    Ok(bins.into_iter().map(|(b, c)| (b as f64 * bin_width, c as f64 / n)).collect())
}

/// Bin width of the error histograms in run reports.
pub const DEFAULT_BIN_WIDTH: f64 = 0.25;

pub fn metric_report(pred: &[f64], truth: &[f64], bin_width: f64) -> Result<MetricReport, MetricError> {
    Ok(MetricReport {
        srcc: srcc(pred, truth)?,
        plcc: plcc(pred, truth)?,
        n: pred.len(),
        error_histogram: error_distribution(pred, truth, bin_width)?,
    })
}
