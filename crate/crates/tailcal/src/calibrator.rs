//! Temperature scaling under plain and importance-weighted objectives.
//!
//! The objective is the weighted mean cross-entropy of `softmax(z/T)`
//! against the labels, normalized by the total weight so values are
//! comparable across weighting schemes. The scalar search runs a coarse
//! log-spaced grid followed by golden-section refinement; both passes are
//! deterministic, so repeated fits on the same inputs agree bit for bit.

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which objective produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// No calibration; the identity temperature T = 1.
    Base,
    PlainTs,
    WeightedTs,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Base => "base",
            Method::PlainTs => "plain_ts",
            Method::WeightedTs => "weighted_ts",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Method::Base),
            "plain_ts" => Ok(Method::PlainTs),
            "weighted_ts" => Ok(Method::WeightedTs),
            other => Err(Error::InvalidParam(format!(
                "unknown method {other:?}, expected base, plain_ts, or weighted_ts"
            ))),
        }
    }
}

/// Result of a temperature search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub temperature: f64,
    /// Weighted mean NLL at `temperature`.
    pub objective_value: f64,
    pub method: Method,
    /// The coarse grid pass: (T, objective) pairs in evaluation order.
    pub search_trace: Vec<(f64, f64)>,
}

const GRID_POINTS: usize = 64;
const REFINE_TOL: f64 = 1e-4;
/// Fixed block size for the deterministic parallel reduction.
const CHUNK_ROWS: usize = 1024;

fn validate_inputs(logits: &ArrayView2<f32>, labels: &[u32], weights: &[f64]) -> Result<()> {
    let n = logits.nrows();
    if n == 0 {
        return Err(Error::ShapeMismatch("logits have no rows".into()));
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "logits have {n} rows but labels have {}",
            labels.len()
        )));
    }
    if weights.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "logits have {n} rows but weights have {}",
            weights.len()
        )));
    }
    let c = logits.ncols();
    if let Some((row, &label)) = labels
        .iter()
        .enumerate()
        .find(|(_, &label)| label as usize >= c)
    {
        return Err(Error::LabelOutOfRange {
            row,
            label,
            classes: c,
        });
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidParam("weights must be positive".into()));
    }
    Ok(())
}

/// Cross-entropy of one row at temperature `t`, via log-sum-exp.
fn row_ce(row: &[f32], label: usize, t: f64) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &v in row {
        let s = v as f64 / t;
        if s > max {
            max = s;
        }
    }
    let mut sum = 0.0;
    for &v in row {
        sum += (v as f64 / t - max).exp();
    }
    let lse = max + sum.ln();
    lse - row[label] as f64 / t
}

/// Weighted mean cross-entropy of `softmax(z/T)`:
/// `sum_i w_i * CE_i / sum_i w_i`.
///
/// Samples are reduced in fixed-size blocks whose partial sums are combined
/// in block order, so the result does not depend on the worker count.
pub fn weighted_nll(
    logits: ArrayView2<f32>,
    labels: &[u32],
    weights: &[f64],
    t: f64,
) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParam(format!(
            "temperature must be positive and finite, got {t}"
        )));
    }
    validate_inputs(&logits, labels, weights)?;

    let n = logits.nrows();
    let blocks: Vec<(usize, usize)> = (0..n)
        .step_by(CHUNK_ROWS)
        .map(|start| (start, (start + CHUNK_ROWS).min(n)))
        .collect();

    let partials: Vec<(f64, f64)> = blocks
        .par_iter()
        .map(|&(start, end)| {
            let mut num = 0.0;
            let mut den = 0.0;
            let mut row_buf = Vec::with_capacity(logits.ncols());
            for i in start..end {
                row_buf.clear();
                row_buf.extend(logits.row(i).iter().copied());
                let ce = row_ce(&row_buf, labels[i] as usize, t);
                num += weights[i] * ce;
                den += weights[i];
            }
            (num, den)
        })
        .collect();

    let (num, den) = partials
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    Ok(num / den)
}

/// Minimize the weighted NLL over `T in [t_min, t_max]`: 64-point
/// log-spaced grid, then golden-section refinement of the bracketing
/// interval to `|delta T| < 1e-4`.
pub fn fit_temperature(
    logits: ArrayView2<f32>,
    labels: &[u32],
    weights: &[f64],
    bounds: (f64, f64),
    method: Method,
) -> Result<TemperatureFit> {
    let (t_min, t_max) = bounds;
    if !(t_min > 0.0 && t_min < t_max && t_max.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "bounds must satisfy 0 < t_min < t_max, got [{t_min}, {t_max}]"
        )));
    }
    validate_inputs(&logits, labels, weights)?;

    let objective = |t: f64| weighted_nll(logits, labels, weights, t).expect("validated inputs");

    let log_min = t_min.ln();
    let log_max = t_max.ln();
    let mut trace = Vec::with_capacity(GRID_POINTS);
    let mut best = 0usize;
    for j in 0..GRID_POINTS {
        let t = (log_min + j as f64 * (log_max - log_min) / (GRID_POINTS - 1) as f64).exp();
        let obj = objective(t);
        trace.push((t, obj));
        if obj < trace[best].1 {
            best = j;
        }
    }

    let mut a = if best == 0 { t_min } else { trace[best - 1].0 };
    let mut b = if best + 1 == GRID_POINTS {
        t_max
    } else {
        trace[best + 1].0
    };

    // Golden-section: keep the bracket invariant a < x1 < x2 < b.
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    while b - a > REFINE_TOL {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = objective(x2);
        }
    }
    let temperature = if f1 <= f2 { x1 } else { x2 };
    let objective_value = objective(temperature);

    Ok(TemperatureFit {
        temperature,
        objective_value,
        method,
        search_trace: trace,
    })
}

/// Row-wise `softmax(z/T)`. Strictly monotone in the logits, so the
/// per-row argmax is unchanged for every `T > 0`.
pub fn apply_temperature(logits: ArrayView2<f32>, t: f64) -> Result<ndarray::Array2<f64>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParam(format!(
            "temperature must be positive and finite, got {t}"
        )));
    }
    let mut out = ndarray::Array2::<f64>::zeros((logits.nrows(), logits.ncols()));
    for (i, row) in logits.outer_iter().enumerate() {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64 / t));
        let mut sum = 0.0;
        for (k, &v) in row.iter().enumerate() {
            let e = (v as f64 / t - max).exp();
            out[[i, k]] = e;
            sum += e;
        }
        out.index_axis_mut(Axis(0), i).mapv_inplace(|v| v / sum);
    }
    Ok(out)
}
