//! Dataset containers and the head/tail class partition.
//!
//! A [`LabeledEmbeddingSet`] holds one split (train/val/test) of a feature
//! dump exported from a trained classifier: penultimate-layer features,
//! logits, and integer labels. Containers are immutable after construction
//! and validated on entry so downstream numeric code never sees NaN rows,
//! ragged shapes, or out-of-range labels.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Features, logits, and labels for one dataset split.
#[derive(Debug, Clone)]
pub struct LabeledEmbeddingSet {
    features: Array2<f32>,
    logits: Array2<f32>,
    labels: Vec<u32>,
    class_counts: Vec<u64>,
}

impl LabeledEmbeddingSet {
    /// Build a validated set. `class_counts` is derived from `labels`; the
    /// number of classes is the logit width.
    pub fn new(features: Array2<f32>, logits: Array2<f32>, labels: Vec<u32>) -> Result<Self> {
        let n = features.nrows();
        let d = features.ncols();
        let c = logits.ncols();

        if n == 0 {
            return Err(Error::ShapeMismatch("dataset has no rows".into()));
        }
        if d == 0 {
            return Err(Error::ShapeMismatch("feature dimension is zero".into()));
        }
        if c < 2 {
            return Err(Error::ShapeMismatch(format!(
                "need at least 2 classes, logits have {c} columns"
            )));
        }
        if logits.nrows() != n {
            return Err(Error::ShapeMismatch(format!(
                "features have {n} rows but logits have {}",
                logits.nrows()
            )));
        }
        if labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "features have {n} rows but labels have {}",
                labels.len()
            )));
        }

        for (row, r) in features.outer_iter().enumerate() {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    matrix: "features",
                    row,
                });
            }
        }
        for (row, r) in logits.outer_iter().enumerate() {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    matrix: "logits",
                    row,
                });
            }
        }

        let mut class_counts = vec![0u64; c];
        for (row, &label) in labels.iter().enumerate() {
            if (label as usize) >= c {
                return Err(Error::LabelOutOfRange {
                    row,
                    label,
                    classes: c,
                });
            }
            class_counts[label as usize] += 1;
        }

        Ok(Self {
            features,
            logits,
            labels,
            class_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimension D.
    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of classes C (logit width).
    pub fn num_classes(&self) -> usize {
        self.logits.ncols()
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn logits(&self) -> &Array2<f32> {
        &self.logits
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Per-class sample counts, length C.
    pub fn class_counts(&self) -> &[u64] {
        &self.class_counts
    }
}

/// Head/tail split of the class set at a count threshold.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HeadTailPartition {
    /// Classes with count >= zeta, ascending.
    pub head: Vec<usize>,
    /// Classes with count < zeta, ascending.
    pub tail: Vec<usize>,
    /// The threshold used.
    pub zeta: u64,
}

impl HeadTailPartition {
    pub fn is_head(&self, class: usize) -> bool {
        self.head.binary_search(&class).is_ok()
    }

    pub fn num_classes(&self) -> usize {
        self.head.len() + self.tail.len()
    }
}

/// Split classes into head (`count >= zeta`) and tail (`count < zeta`).
///
/// Errors when no class reaches the threshold, since the transfer step
/// needs at least one head class to borrow statistics from.
pub fn partition(counts: &[u64], zeta: u64) -> Result<HeadTailPartition> {
    if zeta == 0 {
        return Err(Error::InvalidParam("zeta must be >= 1".into()));
    }
    let mut head = Vec::new();
    let mut tail = Vec::new();
    for (class, &count) in counts.iter().enumerate() {
        if count >= zeta {
            head.push(class);
        } else {
            tail.push(class);
        }
    }
    if head.is_empty() {
        return Err(Error::EmptyHead { zeta });
    }
    Ok(HeadTailPartition { head, tail, zeta })
}
