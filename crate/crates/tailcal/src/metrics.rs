//! Calibration metrics: ECE, classwise SCE, adaptive ACE, and the
//! reliability-diagram bin table.
//!
//! Binning convention: equal-width bins partition (0, 1] with membership
//! `conf in (low, high]`; a confidence of exactly 0 lands in the first
//! bin. Empty bins carry count 0 and contribute nothing to the metric
//! sums. `ece` is defined as the weighted gap read off the same table
//! `reliability_table` returns, so the two can never drift apart.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binning scheme for the reliability table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinScheme {
    EqualWidth,
    EqualMass,
}

impl std::fmt::Display for BinScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BinScheme::EqualWidth => "equal_width",
            BinScheme::EqualMass => "equal_mass",
        })
    }
}

impl std::str::FromStr for BinScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal_width" => Ok(BinScheme::EqualWidth),
            "equal_mass" => Ok(BinScheme::EqualMass),
            other => Err(Error::InvalidParam(format!(
                "unknown scheme {other:?}, expected equal_width or equal_mass"
            ))),
        }
    }
}

/// Per-bin sample count, mean confidence, and accuracy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinStats {
    /// `bins + 1` non-decreasing edges in [0, 1].
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Mean confidence per bin; 0 for empty bins.
    pub confidence: Vec<f64>,
    /// Accuracy per bin; 0 for empty bins.
    pub accuracy: Vec<f64>,
    pub scheme: BinScheme,
}

impl BinStats {
    /// Weighted |accuracy - confidence| gap over the table.
    pub fn weighted_gap(&self) -> f64 {
        let n: u64 = self.counts.iter().sum();
        if n == 0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for ((&count, &conf), &hit) in self
            .counts
            .iter()
            .zip(&self.confidence)
            .zip(&self.accuracy)
        {
            if count > 0 {
                acc += count as f64 / n as f64 * (hit - conf).abs();
            }
        }
        acc
    }

    /// CSV rows `bin_low,bin_high,count,confidence,accuracy` with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count,confidence,accuracy\n");
        for i in 0..self.counts.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.edges[i], self.edges[i + 1], self.counts[i], self.confidence[i], self.accuracy[i]
            ));
        }
        out
    }
}

fn validate_probs(probs: &ArrayView2<f64>) -> Result<()> {
    for (row, r) in probs.outer_iter().enumerate() {
        let sum: f64 = r.sum();
        if (sum - 1.0).abs() > 1e-4 {
            return Err(Error::ShapeMismatch(format!(
                "row {row} sums to {sum}, not a probability vector"
            )));
        }
    }
    Ok(())
}

/// Max probability and argmax per row; ties break toward the lowest index.
pub fn confidences(probs: ArrayView2<f64>) -> Result<(Vec<f64>, Vec<usize>)> {
    validate_probs(&probs)?;
    let mut conf = Vec::with_capacity(probs.nrows());
    let mut pred = Vec::with_capacity(probs.nrows());
    for r in probs.outer_iter() {
        let mut best = 0usize;
        for (j, &v) in r.iter().enumerate() {
            if v > r[best] {
                best = j;
            }
        }
        conf.push(r[best]);
        pred.push(best);
    }
    Ok((conf, pred))
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(probs: ArrayView2<f64>, labels: &[u32]) -> Result<f64> {
    let (_, pred) = confidences(probs)?;
    check_labels(&probs, labels)?;
    let hits = pred
        .iter()
        .zip(labels)
        .filter(|&(&p, &y)| p == y as usize)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

fn check_labels(probs: &ArrayView2<f64>, labels: &[u32]) -> Result<()> {
    if labels.len() != probs.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "probs have {} rows but labels have {}",
            probs.nrows(),
            labels.len()
        )));
    }
    let c = probs.ncols();
    for (row, &label) in labels.iter().enumerate() {
        if label as usize >= c {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                classes: c,
            });
        }
    }
    Ok(())
}

/// Equal-width bin index over (0, 1]: values in (i/B, (i+1)/B] map to i,
/// with 0 assigned to the first bin.
fn bin_index(value: f64, bins: usize) -> usize {
    if value <= 0.0 {
        return 0;
    }
    let idx = (value * bins as f64).ceil() as usize;
    idx.saturating_sub(1).min(bins - 1)
}

fn bin_values(
    values: &[f64],
    hits: &[bool],
    bins: usize,
    scheme: BinScheme,
) -> (Vec<f64>, Vec<u64>, Vec<f64>, Vec<f64>) {
    match scheme {
        BinScheme::EqualWidth => {
            let mut counts = vec![0u64; bins];
            let mut conf_sum = vec![0.0f64; bins];
            let mut hit_sum = vec![0u64; bins];
            for (&v, &h) in values.iter().zip(hits) {
                let b = bin_index(v, bins);
                counts[b] += 1;
                conf_sum[b] += v;
                hit_sum[b] += h as u64;
            }
            let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
            let confidence: Vec<f64> = counts
                .iter()
                .zip(&conf_sum)
                .map(|(&c, &s)| if c > 0 { s / c as f64 } else { 0.0 })
                .collect();
            let acc: Vec<f64> = counts
                .iter()
                .zip(&hit_sum)
                .map(|(&c, &s)| if c > 0 { s as f64 / c as f64 } else { 0.0 })
                .collect();
            (edges, counts, confidence, acc)
        }
        BinScheme::EqualMass => {
            // Rank-based groups; remainder samples go to the first groups.
            let n = values.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let base = n / bins;
            let extra = n % bins;
            let mut edges = Vec::with_capacity(bins + 1);
            let mut counts = Vec::with_capacity(bins);
            let mut confidence = Vec::with_capacity(bins);
            let mut acc = Vec::with_capacity(bins);
            edges.push(0.0);
            let mut cursor = 0usize;
            for g in 0..bins {
                let size = base + usize::from(g < extra);
                let group = &order[cursor..cursor + size];
                cursor += size;
                if group.is_empty() {
                    counts.push(0);
                    confidence.push(0.0);
                    acc.push(0.0);
                } else {
                    counts.push(group.len() as u64);
                    confidence
                        .push(group.iter().map(|&i| values[i]).sum::<f64>() / group.len() as f64);
                    acc.push(
                        group.iter().filter(|&&i| hits[i]).count() as f64 / group.len() as f64,
                    );
                }
                let edge = if g + 1 == bins {
                    1.0
                } else if cursor > 0 && cursor < n {
                    0.5 * (values[order[cursor - 1]] + values[order[cursor]])
                } else {
                    *edges.last().unwrap()
                };
                edges.push(edge.max(*edges.last().unwrap()).min(1.0));
            }
            (edges, counts, confidence, acc)
        }
    }
}

/// Bin table of confidence vs accuracy for reliability diagrams.
pub fn reliability_table(
    probs: ArrayView2<f64>,
    labels: &[u32],
    bins: usize,
    scheme: BinScheme,
) -> Result<BinStats> {
    if bins == 0 {
        return Err(Error::InvalidParam("bins must be >= 1".into()));
    }
    check_labels(&probs, labels)?;
    let (conf, pred) = confidences(probs)?;
    let hits: Vec<bool> = pred
        .iter()
        .zip(labels)
        .map(|(&p, &y)| p == y as usize)
        .collect();
    let (edges, counts, confidence, accuracy) = bin_values(&conf, &hits, bins, scheme);
    Ok(BinStats {
        edges,
        counts,
        confidence,
        accuracy,
        scheme,
    })
}

/// Expected calibration error: the count-weighted |accuracy - confidence|
/// gap over equal-width confidence bins.
pub fn ece(probs: ArrayView2<f64>, labels: &[u32], bins: usize) -> Result<f64> {
    Ok(reliability_table(probs, labels, bins, BinScheme::EqualWidth)?.weighted_gap())
}

/// Static (classwise) calibration error: the ECE-style gap applied to each
/// class's probability column, averaged over classes. Per column, a sample
/// counts as a hit when its label is that class.
pub fn sce(probs: ArrayView2<f64>, labels: &[u32], bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::InvalidParam("bins must be >= 1".into()));
    }
    check_labels(&probs, labels)?;
    validate_probs(&probs)?;
    let n = probs.nrows();
    let c = probs.ncols();
    let mut total = 0.0;
    for class in 0..c {
        let values: Vec<f64> = (0..n).map(|i| probs[[i, class]]).collect();
        let hits: Vec<bool> = labels.iter().map(|&y| y as usize == class).collect();
        let (_, counts, confidence, acc) = bin_values(&values, &hits, bins, BinScheme::EqualWidth);
        let mut class_gap = 0.0;
        for ((&count, &conf), &hit) in counts.iter().zip(&confidence).zip(&acc) {
            if count > 0 {
                class_gap += count as f64 / n as f64 * (hit - conf).abs();
            }
        }
        total += class_gap;
    }
    Ok(total / c as f64)
}

/// Adaptive calibration error: per class, the sorted probability column is
/// split into `ranges` equal-count cells (remainder spread over the first
/// cells) and |accuracy - confidence| is averaged uniformly over all
/// `C * ranges` cells.
pub fn ace(probs: ArrayView2<f64>, labels: &[u32], ranges: usize) -> Result<f64> {
    if ranges == 0 {
        return Err(Error::InvalidParam("ranges must be >= 1".into()));
    }
    let n = probs.nrows();
    if n < ranges {
        return Err(Error::InvalidParam(format!(
            "need at least as many samples as ranges: {n} < {ranges}"
        )));
    }
    check_labels(&probs, labels)?;
    validate_probs(&probs)?;
    let c = probs.ncols();
    let mut total = 0.0;
    for class in 0..c {
        let values: Vec<f64> = (0..n).map(|i| probs[[i, class]]).collect();
        let hits: Vec<bool> = labels.iter().map(|&y| y as usize == class).collect();
        let (_, counts, confidence, acc) = bin_values(&values, &hits, ranges, BinScheme::EqualMass);
        for ((&count, &conf), &hit) in counts.iter().zip(&confidence).zip(&acc) {
            debug_assert!(count > 0, "equal-count cells cannot be empty when n >= ranges");
            if count > 0 {
                total += (hit - conf).abs();
            }
        }
    }
    Ok(total / (c * ranges) as f64)
}

/// The summary block the CLI persists per method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub ece: f64,
    pub sce: f64,
    pub ace: f64,
    pub accuracy: f64,
    pub n: usize,
    pub bins: usize,
}

/// Compute all summary metrics in one pass over a probability matrix.
pub fn metric_report(
    probs: ArrayView2<f64>,
    labels: &[u32],
    bins: usize,
    ranges: usize,
) -> Result<MetricReport> {
    Ok(MetricReport {
        ece: ece(probs, labels, bins)?,
        sce: sce(probs, labels, bins)?,
        ace: ace(probs, labels, ranges)?,
        accuracy: accuracy(probs, labels)?,
        n: probs.nrows(),
        bins,
    })
}
