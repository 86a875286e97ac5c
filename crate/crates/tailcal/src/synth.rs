//! Synthetic long-tailed feature/logit bundles for desk-scale experiments.
//!
//! Class-conditional features are Gaussian with distinct unit-norm mean
//! directions at a fixed separation and shared isotropic unit covariance.
//! Logits are the class-conditional log-density scores scaled by an
//! overconfidence factor, optionally biased by the log training count of
//! each class, which reproduces the head-class overconfidence a classifier
//! picks up from long-tailed training data. Everything is reproducible
//! from the seed.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::LabeledEmbeddingSet;
use crate::error::{Error, Result};

/// Distance of each class mean from the origin, in units of the balanced
/// within-class standard deviation.
const MEAN_SEPARATION: f64 = 2.5;

/// Collapse constant: train/val features of a class with n instances are
/// drawn at std n^2 / (n^2 + N0^2). Rare classes occupy a collapsed region
/// of feature space, the way under-trained classes do, while the balanced
/// test split draws at the full width.
const COLLAPSE_N0: f64 = 40.0;

/// Norm-shrink constant: train/val features of a class with n instances
/// center on n^2 / (n^2 + A^2) times the class mean. Rare classes sit at
/// reduced feature norm, again mirroring under-trained classes, so their
/// source-split samples are systematically harder than their balanced
/// test-split samples.
const SHRINK_A: f64 = 36.0;

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Ratio of the largest to smallest class count, >= 1.
    pub imbalance_factor: f64,
    /// Count of the largest class.
    pub max_count: u64,
    /// Multiplier on the log-density logits; > 1 induces overconfidence.
    pub overconfidence_scale: f64,
    /// Add log(train count) to each class logit, mimicking the prior a
    /// model absorbs from imbalanced training data.
    pub prior_bias: bool,
    pub seed: u64,
    /// Per-class count of the balanced test split.
    pub test_per_class: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            feature_dim: 16,
            imbalance_factor: 100.0,
            max_count: 500,
            overconfidence_scale: 2.5,
            prior_bias: true,
            seed: 0,
            test_per_class: 1000,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidParam(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidParam("feature_dim must be >= 1".into()));
        }
        if !(self.imbalance_factor >= 1.0) {
            return Err(Error::InvalidParam(format!(
                "imbalance_factor must be >= 1, got {}",
                self.imbalance_factor
            )));
        }
        if self.max_count == 0 {
            return Err(Error::InvalidParam("max_count must be >= 1".into()));
        }
        if !(self.overconfidence_scale > 0.0) {
            return Err(Error::InvalidParam(format!(
                "overconfidence_scale must be > 0, got {}",
                self.overconfidence_scale
            )));
        }
        if self.test_per_class == 0 {
            return Err(Error::InvalidParam("test_per_class must be >= 1".into()));
        }
        Ok(())
    }

    /// Exponentially decaying long-tail counts: `n_c = round(n_1 * IF^(-(c-1)/(C-1)))`,
    /// floored at 1 sample.
    pub fn class_counts(&self) -> Vec<u64> {
        let c_max = (self.num_classes - 1) as f64;
        (0..self.num_classes)
            .map(|c| {
                let frac = c as f64 / c_max;
                let n = self.max_count as f64 * self.imbalance_factor.powf(-frac);
                (n.round() as u64).max(1)
            })
            .collect()
    }

    /// Per-class 80/20 train/val split of the long-tailed counts.
    pub fn split_counts(&self) -> (Vec<u64>, Vec<u64>) {
        let counts = self.class_counts();
        let train: Vec<u64> = counts
            .iter()
            .map(|&n| ((0.8 * n as f64).round() as u64).min(n))
            .collect();
        let val: Vec<u64> = counts.iter().zip(&train).map(|(&n, &t)| n - t).collect();
        (train, val)
    }
}

struct Generator<'a> {
    spec: &'a SyntheticSpec,
    means: Vec<Vec<f64>>,
    log_prior: Vec<f64>,
}

impl Generator<'_> {
    /// Log N(x | mu_j, I) for every class, scaled and prior-shifted.
    fn logits_for(&self, x: &[f64]) -> Vec<f32> {
        let d = self.spec.feature_dim as f64;
        let norm = -0.5 * d * (2.0 * std::f64::consts::PI).ln();
        self.means
            .iter()
            .zip(&self.log_prior)
            .map(|(mu, &prior)| {
                let sq: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                (self.spec.overconfidence_scale * (norm - 0.5 * sq) + prior) as f32
            })
            .collect()
    }

    fn sample_split(
        &self,
        rng: &mut ChaCha8Rng,
        counts: &[u64],
        class_std: &[f64],
        class_scale: &[f64],
    ) -> Result<LabeledEmbeddingSet> {
        let d = self.spec.feature_dim;
        let c = self.spec.num_classes;
        let n: u64 = counts.iter().sum();
        let mut features = Array2::<f32>::zeros((n as usize, d));
        let mut logits = Array2::<f32>::zeros((n as usize, c));
        let mut labels = Vec::with_capacity(n as usize);

        let mut row = 0;
        for (class, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                let mut x = vec![0.0f64; d];
                for (k, xv) in x.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    *xv = class_scale[class] * self.means[class][k] + class_std[class] * z;
                }
                // Store as f32, then score the stored values so the saved
                // bundle is self-consistent.
                let stored: Vec<f32> = x.iter().map(|&v| v as f32).collect();
                let x64: Vec<f64> = stored.iter().map(|&v| v as f64).collect();
                let z = self.logits_for(&x64);
                for k in 0..d {
                    features[[row, k]] = stored[k];
                }
                for (k, &v) in z.iter().enumerate() {
                    logits[[row, k]] = v;
                }
                labels.push(class as u32);
                row += 1;
            }
        }
        LabeledEmbeddingSet::new(features, logits, labels)
    }
}

/// Generate (train, val, test) splits per the spec. Train and val follow
/// the long-tailed counts; test is balanced.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
) -> Result<(LabeledEmbeddingSet, LabeledEmbeddingSet, LabeledEmbeddingSet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Unit-norm mean directions scaled by the fixed separation.
    let separation = MEAN_SEPARATION;
    let mut means = Vec::with_capacity(spec.num_classes);
    for _ in 0..spec.num_classes {
        let mut v: Vec<f64> = (0..spec.feature_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        for x in v.iter_mut() {
            *x = *x / norm * separation;
        }
        means.push(v);
    }

    let counts = spec.class_counts();
    let (train_counts, val_counts) = spec.split_counts();
    let log_prior: Vec<f64> = if spec.prior_bias {
        train_counts
            .iter()
            .map(|&n| (n.max(1) as f64).ln())
            .collect()
    } else {
        vec![0.0; spec.num_classes]
    };

    // Source splits show the sample-starvation pathology (collapsed width,
    // shrunken feature norm); the balanced test split draws at full scale.
    let n0 = COLLAPSE_N0;
    let a = SHRINK_A;
    let src_std: Vec<f64> = counts
        .iter()
        .map(|&n| {
            let nn = (n as f64) * (n as f64);
            nn / (nn + n0 * n0)
        })
        .collect();
    let src_scale: Vec<f64> = counts
        .iter()
        .map(|&n| {
            let nn = (n as f64) * (n as f64);
            nn / (nn + a * a)
        })
        .collect();
    let full_std = vec![1.0; spec.num_classes];
    let full_scale = vec![1.0; spec.num_classes];

    let gen = Generator {
        spec,
        means,
        log_prior,
    };

    let train = gen.sample_split(&mut rng, &train_counts, &src_std, &src_scale)?;
    let val = gen.sample_split(&mut rng, &val_counts, &src_std, &src_scale)?;
    let test_counts = vec![spec.test_per_class; spec.num_classes];
    let test = gen.sample_split(&mut rng, &test_counts, &full_std, &full_scale)?;
    Ok((train, val, test))
}
