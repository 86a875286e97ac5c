//! Head-to-tail knowledge transfer and importance weights.
//!
//! For each tail class, distances to every head class (Wasserstein-2 on the
//! source statistics) are turned into attention scores, the head statistics
//! are merged into an estimate of the tail class's balanced distribution,
//! and each validation sample is weighted by the clipped ratio of the
//! merged density over the source density of its own class. Head samples
//! keep weight 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{HeadTailPartition, LabeledEmbeddingSet};
use crate::error::{Error, Result};
use crate::gaussian::{wasserstein2, ClassGaussian};

/// How head-class contributions are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Softmax over negated, dimension-scaled distances.
    #[default]
    Attention,
    /// Every head class contributes equally.
    Uniform,
    /// Only the nearest head class contributes.
    Onehot,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(Strategy::Attention),
            "uniform" => Ok(Strategy::Uniform),
            "onehot" => Ok(Strategy::Onehot),
            other => Err(Error::InvalidParam(format!(
                "unknown strategy {other:?}, expected attention, uniform, or onehot"
            ))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::Attention => "attention",
            Strategy::Uniform => "uniform",
            Strategy::Onehot => "onehot",
        };
        f.write_str(s)
    }
}

/// Scores from precomputed distances. `feature_dim` scales the softmax
/// the same way attention scales dot products. Onehot ties break toward
/// the lowest index.
pub fn scores_from_distances(
    distances: &[f64],
    feature_dim: usize,
    strategy: Strategy,
) -> Result<Vec<f64>> {
    if distances.is_empty() {
        return Err(Error::InvalidParam("head list is empty".into()));
    }
    match strategy {
        Strategy::Uniform => {
            let w = 1.0 / distances.len() as f64;
            Ok(vec![w; distances.len()])
        }
        Strategy::Onehot => {
            let mut best = 0;
            for (i, &d) in distances.iter().enumerate() {
                if d < distances[best] {
                    best = i;
                }
            }
            let mut s = vec![0.0; distances.len()];
            s[best] = 1.0;
            Ok(s)
        }
        Strategy::Attention => {
            let scale = (feature_dim as f64).sqrt();
            let neg: Vec<f64> = distances.iter().map(|&d| -d / scale).collect();
            let max = neg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = neg.iter().map(|&v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            Ok(exps.iter().map(|&e| e / sum).collect())
        }
    }
}

/// Attention of one tail class over the ordered head list.
pub fn attention_scores(
    tail: &ClassGaussian,
    heads: &[&ClassGaussian],
    strategy: Strategy,
) -> Result<Vec<f64>> {
    if heads.is_empty() {
        return Err(Error::InvalidParam("head list is empty".into()));
    }
    let distances: Vec<f64> = heads
        .iter()
        .map(|h| wasserstein2(tail, h))
        .collect::<Result<_>>()?;
    scores_from_distances(&distances, tail.dim(), strategy)
}

/// Convex combination of the tail statistics with the score-weighted head
/// statistics: `mu* = alpha*mu_c + (1-alpha)*sum_k s_k*mu_k`, same for the
/// elementwise standard deviations. The count carries over from the tail.
pub fn merge_statistics(
    tail: &ClassGaussian,
    heads: &[&ClassGaussian],
    scores: &[f64],
    alpha: f64,
) -> Result<ClassGaussian> {
    if scores.len() != heads.len() {
        return Err(Error::DimMismatch {
            expected: heads.len(),
            got: scores.len(),
        });
    }
    let d = tail.dim();
    let mut mean = vec![0.0f64; d];
    let mut std = vec![0.0f64; d];
    for (h, &s) in heads.iter().zip(scores) {
        if h.dim() != d {
            return Err(Error::DimMismatch {
                expected: d,
                got: h.dim(),
            });
        }
        for k in 0..d {
            mean[k] += s * h.mean[k];
            std[k] += s * h.std[k];
        }
    }
    for k in 0..d {
        mean[k] = alpha * tail.mean[k] + (1.0 - alpha) * mean[k];
        std[k] = alpha * tail.std[k] + (1.0 - alpha) * std[k];
    }
    ClassGaussian::new(mean, std, tail.count)
}

/// Attention vectors and merged balanced-distribution estimates for every
/// tail class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferPlan {
    /// Head classes in ascending order; attention vectors index into this.
    pub head_order: Vec<usize>,
    /// Per tail class: non-negative scores over `head_order`, summing to 1.
    pub attention: BTreeMap<usize, Vec<f64>>,
    /// Per tail class: merged statistics (mu*, sqrt-Sigma*).
    pub merged: BTreeMap<usize, ClassGaussian>,
    pub alpha: f64,
    pub strategy: Strategy,
}

impl TransferPlan {
    /// Build the plan from source statistics and a head/tail partition.
    pub fn build(
        stats: &BTreeMap<usize, ClassGaussian>,
        partition: &HeadTailPartition,
        alpha: f64,
        strategy: Strategy,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParam(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        if partition.head.is_empty() {
            return Err(Error::EmptyHead { zeta: partition.zeta });
        }
        let heads: Vec<&ClassGaussian> = partition
            .head
            .iter()
            .map(|c| stats.get(c).ok_or(Error::MissingClassStats { class: *c }))
            .collect::<Result<_>>()?;

        let mut attention = BTreeMap::new();
        let mut merged = BTreeMap::new();
        for &c in &partition.tail {
            let tail = stats.get(&c).ok_or(Error::MissingClassStats { class: c })?;
            let scores = attention_scores(tail, &heads, strategy)?;
            let m = merge_statistics(tail, &heads, &scores, alpha)?;
            attention.insert(c, scores);
            merged.insert(c, m);
        }
        Ok(Self {
            head_order: partition.head.clone(),
            attention,
            merged,
            alpha,
            strategy,
        })
    }
}

/// Per-sample clipped density-ratio weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceWeights {
    pub weights: Vec<f64>,
    pub clip_low: f64,
    pub clip_high: f64,
}

/// Weight every sample of `set`: head classes get exactly 1; tail classes
/// get the merged-over-source density ratio of their own class, computed
/// in log space and clipped to `[eta1, eta2]`.
pub fn importance_weights(
    set: &LabeledEmbeddingSet,
    source_stats: &BTreeMap<usize, ClassGaussian>,
    plan: &TransferPlan,
    partition: &HeadTailPartition,
    eta1: f64,
    eta2: f64,
) -> Result<ImportanceWeights> {
    if !(eta1 > 0.0 && eta2 >= eta1) {
        return Err(Error::InvalidParam(format!(
            "clip range must satisfy 0 < eta1 <= eta2, got [{eta1}, {eta2}]"
        )));
    }
    let mut weights = Vec::with_capacity(set.len());
    let mut x = vec![0.0f64; set.feature_dim()];
    for (i, &y) in set.labels().iter().enumerate() {
        let class = y as usize;
        if partition.is_head(class) {
            weights.push(1.0);
            continue;
        }
        let source = source_stats
            .get(&class)
            .ok_or(Error::MissingClassStats { class })?;
        let target = plan
            .merged
            .get(&class)
            .ok_or(Error::MissingClassStats { class })?;
        for (k, &v) in set.features().row(i).iter().enumerate() {
            x[k] = v as f64;
        }
        let log_ratio = target.log_density(&x)? - source.log_density(&x)?;
        weights.push(log_ratio.exp().clamp(eta1, eta2));
    }
    Ok(ImportanceWeights {
        weights,
        clip_low: eta1,
        clip_high: eta2,
    })
}

/// Equal-width histogram over the clip range, for the weight-distribution
/// diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightHistogram {
    /// `bins + 1` edges spanning `[clip_low, clip_high]`.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Counts normalized so the histogram integrates to 1.
    pub densities: Vec<f64>,
}

impl WeightHistogram {
    /// CSV rows `bin_left,bin_right,count,density` with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count,density\n");
        for i in 0..self.counts.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.edges[i],
                self.edges[i + 1],
                self.counts[i],
                self.densities[i]
            ));
        }
        out
    }
}

/// Bin the weights into `bins` equal-width cells over `[clip_low, clip_high]`.
pub fn weight_histogram(w: &ImportanceWeights, bins: usize) -> Result<WeightHistogram> {
    if bins == 0 {
        return Err(Error::InvalidParam("bins must be >= 1".into()));
    }
    let lo = w.clip_low;
    let hi = w.clip_high;
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| {
            if i == bins {
                hi
            } else {
                lo + i as f64 * width
            }
        })
        .collect();
    let mut counts = vec![0u64; bins];
    for &v in &w.weights {
        let idx = if width > 0.0 {
            (((v - lo) / width).floor() as usize).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    let n = w.weights.len() as f64;
    let densities = counts
        .iter()
        .map(|&c| {
            if n > 0.0 && width > 0.0 {
                c as f64 / (n * width)
            } else {
                0.0
            }
        })
        .collect();
    Ok(WeightHistogram {
        edges,
        counts,
        densities,
    })
}
