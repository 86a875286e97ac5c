//! Post-hoc calibration for classifiers trained on long-tailed data.
//!
//! A model trained on a long-tailed class distribution and evaluated on
//! balanced data is systematically overconfident on head classes, and a
//! temperature fitted on a long-tailed validation split inherits that skew.
//! This crate estimates, for every tail-class validation sample, an
//! importance weight approximating the balanced-over-longtailed density
//! ratio, by modelling each class's features as a diagonal Gaussian and
//! borrowing head-class statistics in proportion to Wasserstein-distance
//! attention. The temperature is then fitted under the weighted objective,
//! and calibration quality is scored with ECE/SCE/ACE and reliability
//! tables.
//!
//! Modules
//! - [`dataset`]: validated feature/logit containers and the head/tail split.
//! - [`io`]: binary and CSV bundle formats plus JSON manifests.
//! - [`synth`]: seeded synthetic long-tailed generator.
//! - [`gaussian`]: per-class diagonal Gaussians, Wasserstein-2, densities,
//!   and the second moment of density ratios.
//! - [`transfer`]: attention over head classes, statistic merging, and
//!   clipped importance weights.
//! - [`calibrator`]: plain and weighted temperature fitting.
//! - [`metrics`]: ECE, SCE, ACE, reliability tables.
//! - [`theory`]: Monte-Carlo checks of the weight-error bound and the
//!   density-ratio crossover points.

pub mod calibrator;
pub mod dataset;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod metrics;
pub mod synth;
pub mod theory;
pub mod transfer;

pub use calibrator::{apply_temperature, fit_temperature, weighted_nll, Method, TemperatureFit};
pub use dataset::{partition, HeadTailPartition, LabeledEmbeddingSet};
pub use error::{Error, Result};
pub use gaussian::{
    fit_class_gaussians, renyi_d2, wasserstein2, ClassGaussian, D2, EPS_STD,
};
pub use io::{load_set, save_set, FileFormat, Manifest};
pub use metrics::{
    ace, accuracy, confidences, ece, metric_report, reliability_table, sce, BinScheme, BinStats,
    MetricReport,
};
pub use synth::{generate_synthetic, SyntheticSpec};
pub use theory::{check_bound, crossover_points, BoundCheck};
pub use transfer::{
    attention_scores, importance_weights, merge_statistics, weight_histogram, ImportanceWeights,
    Strategy, TransferPlan, WeightHistogram,
};
