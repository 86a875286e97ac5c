//! Per-class Gaussian statistics with diagonal covariance.
//!
//! Covariance is kept diagonal throughout: the statistic-merging step
//! manipulates elementwise standard deviations and the attention step only
//! needs distances, so the Wasserstein and density formulas below are exact
//! for this family. Variances use the population (1/n) convention so a
//! one-sample class is still defined; standard deviations are floored at
//! [`EPS_STD`] to keep densities and ratios finite.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledEmbeddingSet;
use crate::error::{Error, Result};

/// Standard-deviation floor applied to every fitted or merged statistic.
pub const EPS_STD: f64 = 1e-6;

/// Mean vector, per-dimension standard deviation, and sample count for one
/// class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGaussian {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: u64,
}

impl ClassGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>, count: u64) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::DimMismatch {
                expected: mean.len(),
                got: std.len(),
            });
        }
        if std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParam(
                "standard deviations must be positive and finite".into(),
            ));
        }
        Ok(Self { mean, std, count })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Exact log density of the diagonal Gaussian at `x`, accumulated in
    /// log space.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        const HALF_LN_2PI: f64 = 0.918_938_533_204_672_74; // ln(2*pi)/2
        let mut acc = 0.0;
        for ((&xv, &m), &s) in x.iter().zip(&self.mean).zip(&self.std) {
            let z = (xv - m) / s;
            acc += -HALF_LN_2PI - s.ln() - 0.5 * z * z;
        }
        Ok(acc)
    }
}

/// Closed-form Wasserstein-2 distance between diagonal Gaussians:
/// `sqrt(|mu_a - mu_b|^2 + |std_a - std_b|^2)`.
pub fn wasserstein2(a: &ClassGaussian, b: &ClassGaussian) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let mut acc = 0.0;
    for (((&ma, &mb), &sa), &sb) in a.mean.iter().zip(&b.mean).zip(&a.std).zip(&b.std) {
        acc += (ma - mb) * (ma - mb) + (sa - sb) * (sa - sb);
    }
    Ok(acc.sqrt())
}

/// Second moment of the density ratio q/p under p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum D2 {
    Finite(f64),
    /// The defining integral diverges; `dim` is the first offending
    /// dimension (where `2*var_p - var_q <= 0`).
    Divergent { dim: usize },
}

impl D2 {
    pub fn finite(&self) -> Option<f64> {
        match *self {
            D2::Finite(v) => Some(v),
            D2::Divergent { .. } => None,
        }
    }
}

/// `d2(q||p) = E_p[(q(x)/p(x))^2]`, evaluated per dimension in closed form
/// and multiplied across dimensions. Divergence is a value, not an error.
///
/// Per dimension, with `g = 2*var_p - var_q` and `delta = mu_q - mu_p`:
/// `d2 = var_p / sqrt(var_q * g) * exp(delta^2 / g)`, finite iff `g > 0`.
pub fn renyi_d2(q: &ClassGaussian, p: &ClassGaussian) -> Result<D2> {
    if q.dim() != p.dim() {
        return Err(Error::DimMismatch {
            expected: q.dim(),
            got: p.dim(),
        });
    }
    let mut log_acc = 0.0;
    for (dim, ((&mq, &mp), (&sq, &sp))) in q
        .mean
        .iter()
        .zip(&p.mean)
        .zip(q.std.iter().zip(&p.std))
        .enumerate()
    {
        let vq = sq * sq;
        let vp = sp * sp;
        let g = 2.0 * vp - vq;
        if g <= 0.0 {
            return Ok(D2::Divergent { dim });
        }
        let delta = mq - mp;
        log_acc += vp.ln() - 0.5 * vq.ln() - 0.5 * g.ln() + delta * delta / g;
    }
    Ok(D2::Finite(log_acc.exp()))
}

/// Fit per-class diagonal Gaussians from the features of a split.
///
/// Means are per-class feature means; standard deviations are population
/// (1/n) per-dimension deviations floored at [`EPS_STD`]. Errors if any
/// class has zero samples.
pub fn fit_class_gaussians(set: &LabeledEmbeddingSet) -> Result<BTreeMap<usize, ClassGaussian>> {
    let c = set.num_classes();
    let d = set.feature_dim();
    for (class, &count) in set.class_counts().iter().enumerate() {
        if count == 0 {
            return Err(Error::EmptyClass { class });
        }
    }

    let mut sums = vec![vec![0.0f64; d]; c];
    for (i, &y) in set.labels().iter().enumerate() {
        let row = set.features().row(i);
        let s = &mut sums[y as usize];
        for (k, &v) in row.iter().enumerate() {
            s[k] += v as f64;
        }
    }
    let counts = set.class_counts();
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(counts)
        .map(|(s, &n)| s.iter().map(|&v| v / n as f64).collect())
        .collect();

    let mut sq = vec![vec![0.0f64; d]; c];
    for (i, &y) in set.labels().iter().enumerate() {
        let row = set.features().row(i);
        let m = &means[y as usize];
        let s = &mut sq[y as usize];
        for (k, &v) in row.iter().enumerate() {
            let dvi = v as f64 - m[k];
            s[k] += dvi * dvi;
        }
    }

    let mut out = BTreeMap::new();
    for class in 0..c {
        let n = counts[class] as f64;
        let std: Vec<f64> = sq[class]
            .iter()
            .map(|&v| (v / n).sqrt().max(EPS_STD))
            .collect();
        out.insert(
            class,
            ClassGaussian {
                mean: means[class].clone(),
                std,
                count: counts[class],
            },
        );
    }
    Ok(out)
}

/// One entry of the serialized statistics file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassStatsEntry {
    pub class: usize,
    pub count: u64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Convert fitted statistics to a stable, class-sorted list for JSON.
pub fn stats_to_entries(stats: &BTreeMap<usize, ClassGaussian>) -> Vec<ClassStatsEntry> {
    stats
        .iter()
        .map(|(&class, g)| ClassStatsEntry {
            class,
            count: g.count,
            mean: g.mean.clone(),
            std: g.std.clone(),
        })
        .collect()
}

/// Rebuild the statistics map from serialized entries.
pub fn entries_to_stats(entries: &[ClassStatsEntry]) -> Result<BTreeMap<usize, ClassGaussian>> {
    let mut out = BTreeMap::new();
    for e in entries {
        out.insert(e.class, ClassGaussian::new(e.mean.clone(), e.std.clone(), e.count)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn g1(mu: f64, sigma: f64) -> ClassGaussian {
        ClassGaussian::new(vec![mu], vec![sigma], 1).unwrap()
    }

    #[test]
    fn fit_mean_and_std_hand_check() {
        // All four points in class 0, one point in class 1.
        let features = array![
            [0.0f32, 0.0],
            [2.0, 0.0],
            [0.0, 2.0],
            [2.0, 2.0],
            [3.0, 3.0]
        ];
        let logits = Array2::from_elem((5, 2), 0.5f32);
        let set = LabeledEmbeddingSet::new(features, logits, vec![0, 0, 0, 0, 1]).unwrap();
        let stats = fit_class_gaussians(&set).unwrap();
        let g0 = &stats[&0];
        assert_eq!(g0.mean, vec![1.0, 1.0]);
        assert_eq!(g0.std, vec![1.0, 1.0]);
        assert_eq!(g0.count, 4);
        // Single point: degenerate variance hits the floor.
        let g1 = &stats[&1];
        assert_eq!(g1.mean, vec![3.0, 3.0]);
        assert_eq!(g1.std, vec![EPS_STD, EPS_STD]);
    }

    #[test]
    fn fit_rejects_empty_class() {
        let features = array![[0.0f32], [1.0]];
        let logits = array![[0.0f32, 1.0, 2.0], [0.0, 1.0, 2.0]];
        let set = LabeledEmbeddingSet::new(features, logits, vec![0, 0]).unwrap();
        let err = fit_class_gaussians(&set).unwrap_err();
        assert!(matches!(err, Error::EmptyClass { class: 1 }), "{err}");
    }

    #[test]
    fn repeated_point_hits_std_floor() {
        let features = array![[3.0f32, 3.0], [3.0, 3.0], [4.0, 4.0]];
        let logits = Array2::from_elem((3, 2), 0.0f32);
        let set = LabeledEmbeddingSet::new(features, logits, vec![0, 0, 1]).unwrap();
        let stats = fit_class_gaussians(&set).unwrap();
        assert_eq!(stats[&0].mean, vec![3.0, 3.0]);
        assert_eq!(stats[&0].std, vec![EPS_STD, EPS_STD]);
    }

    #[test]
    fn wasserstein_identical_is_zero() {
        let a = g1(0.3, 1.2);
        assert_eq!(wasserstein2(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn wasserstein_mean_shift() {
        let a = g1(0.0, 1.0);
        let b = g1(3.0, 1.0);
        assert!((wasserstein2(&a, &b).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_scale_shift() {
        let a = g1(0.0, 1.0);
        let b = g1(0.0, 2.0);
        assert!((wasserstein2(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_symmetric() {
        let a = ClassGaussian::new(vec![0.0, 1.0], vec![1.0, 0.5], 1).unwrap();
        let b = ClassGaussian::new(vec![2.0, -1.0], vec![0.3, 1.5], 1).unwrap();
        assert_eq!(wasserstein2(&a, &b).unwrap(), wasserstein2(&b, &a).unwrap());
    }

    #[test]
    fn wasserstein_dim_mismatch() {
        let a = g1(0.0, 1.0);
        let b = ClassGaussian::new(vec![0.0, 0.0], vec![1.0, 1.0], 1).unwrap();
        assert!(wasserstein2(&a, &b).is_err());
    }

    #[test]
    fn log_density_standard_normal_at_zero() {
        let g = g1(0.0, 1.0);
        let expected = -(2.0 * std::f64::consts::PI).sqrt().ln();
        assert!((g.log_density(&[0.0]).unwrap() - expected).abs() < 1e-12);
        assert!((g.log_density(&[0.0]).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn log_density_peaks_at_mean() {
        let g = ClassGaussian::new(vec![1.0, -2.0], vec![0.7, 1.3], 1).unwrap();
        let at_mean = g.log_density(&[1.0, -2.0]).unwrap();
        for d in [0.01, -0.01, 0.5] {
            assert!(g.log_density(&[1.0 + d, -2.0]).unwrap() < at_mean);
            assert!(g.log_density(&[1.0, -2.0 + d]).unwrap() < at_mean);
        }
    }

    #[test]
    fn log_density_factorizes() {
        let g2 = ClassGaussian::new(vec![0.5, -1.0], vec![1.1, 0.6], 1).unwrap();
        let ga = g1(0.5, 1.1);
        let gb = g1(-1.0, 0.6);
        let x = [0.2, 0.9];
        let joint = g2.log_density(&x).unwrap();
        let split = ga.log_density(&[x[0]]).unwrap() + gb.log_density(&[x[1]]).unwrap();
        assert!((joint - split).abs() < 1e-12);
    }

    #[test]
    fn d2_identical_is_one() {
        let g = g1(0.4, 1.7);
        match renyi_d2(&g, &g).unwrap() {
            D2::Finite(v) => assert!((v - 1.0).abs() < 1e-12, "{v}"),
            other => panic!("expected finite, got {other:?}"),
        }
    }

    #[test]
    fn d2_unit_shift_is_e() {
        let q = g1(1.0, 1.0);
        let p = g1(0.0, 1.0);
        match renyi_d2(&q, &p).unwrap() {
            D2::Finite(v) => assert!((v - std::f64::consts::E).abs() < 1e-12, "{v}"),
            other => panic!("expected finite, got {other:?}"),
        }
    }

    #[test]
    fn d2_wide_q_diverges() {
        let q = g1(0.0, 3.0);
        let p = g1(0.0, 1.0);
        assert_eq!(renyi_d2(&q, &p).unwrap(), D2::Divergent { dim: 0 });
        // Boundary: var_q exactly 2*var_p also diverges.
        let qb = g1(0.0, std::f64::consts::SQRT_2);
        assert_eq!(renyi_d2(&qb, &p).unwrap(), D2::Divergent { dim: 0 });
    }

    #[test]
    fn d2_multidim_product_and_dim_report() {
        let q = ClassGaussian::new(vec![1.0, 0.0], vec![1.0, 1.0], 1).unwrap();
        let p = ClassGaussian::new(vec![0.0, 0.0], vec![1.0, 1.0], 1).unwrap();
        match renyi_d2(&q, &p).unwrap() {
            D2::Finite(v) => assert!((v - std::f64::consts::E).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let q_bad = ClassGaussian::new(vec![0.0, 0.0], vec![1.0, 5.0], 1).unwrap();
        assert_eq!(renyi_d2(&q_bad, &p).unwrap(), D2::Divergent { dim: 1 });
    }

    #[test]
    fn density_integrates_to_one_on_grid() {
        // Trapezoid over +-10 sigma at fine resolution.
        let g = g1(0.7, 1.9);
        let lo = 0.7 - 10.0 * 1.9;
        let hi = 0.7 + 10.0 * 1.9;
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * g.log_density(&[x]).unwrap().exp();
        }
        acc *= h;
        assert!((acc - 1.0).abs() < 1e-6, "integral {acc}");
    }

    #[test]
    fn stats_entries_roundtrip_full_precision() {
        let mut stats = BTreeMap::new();
        stats.insert(
            3usize,
            ClassGaussian::new(vec![0.1 + 0.2, 1.0 / 3.0], vec![std::f64::consts::PI, 1e-6], 17)
                .unwrap(),
        );
        let entries = stats_to_entries(&stats);
        let json = serde_json::to_string(&entries).unwrap();
        let back: Vec<ClassStatsEntry> = serde_json::from_str(&json).unwrap();
        let rebuilt = entries_to_stats(&back).unwrap();
        assert_eq!(rebuilt, stats);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn gauss_strategy() -> impl Strategy<Value = ClassGaussian> {
            (
                prop::collection::vec(-5.0f64..5.0, 3),
                prop::collection::vec(0.05f64..3.0, 3),
            )
                .prop_map(|(mean, std)| ClassGaussian::new(mean, std, 1).unwrap())
        }

        proptest! {
            #[test]
            fn wasserstein_metric_axioms(a in gauss_strategy(), b in gauss_strategy(), c in gauss_strategy()) {
                let dab = wasserstein2(&a, &b).unwrap();
                let dba = wasserstein2(&b, &a).unwrap();
                prop_assert!((dab - dba).abs() < 1e-12);
                prop_assert!(dab >= 0.0);
                let dac = wasserstein2(&a, &c).unwrap();
                let dcb = wasserstein2(&c, &b).unwrap();
                prop_assert!(dab <= dac + dcb + 1e-9, "triangle: {dab} > {dac} + {dcb}");
                prop_assert!((wasserstein2(&a, &a).unwrap()).abs() < 1e-12);
            }

            #[test]
            fn d2_at_least_one_when_convergent(
                mu_q in -1.5f64..1.5,
                sd_q in 0.3f64..1.2,
                mu_p in -1.5f64..1.5,
                sd_p in 0.9f64..1.5,
            ) {
                let q = ClassGaussian::new(vec![mu_q], vec![sd_q], 1).unwrap();
                let p = ClassGaussian::new(vec![mu_p], vec![sd_p], 1).unwrap();
                if let D2::Finite(v) = renyi_d2(&q, &p).unwrap() {
                    prop_assert!(v >= 1.0 - 1e-12, "d2 = {v} < 1");
                }
            }
        }
    }
}
