//! Numerical checks of the importance-weight error bound and the 1-D
//! density-ratio crossover analysis.
//!
//! `epsilon = E_p[(w - w*)^2]`, with `w = q/p` and `w* = q*/p`, is
//! sandwiched between `(sqrt(d2(q||p)) - sqrt(d2(q*||p)))^2` and
//! `d2(q||p) + d2(q*||p)` whenever both second moments converge. The
//! checks estimate epsilon by Monte Carlo over draws from `p` and compare
//! against the closed-form bounds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{renyi_d2, ClassGaussian, D2};

/// Outcome of one bound check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    /// Monte-Carlo estimate of `E_p[(w - w*)^2]` with unclipped ratios.
    pub epsilon: f64,
    pub lower: f64,
    pub upper: f64,
    pub mc_samples: u64,
    /// Standard error of the epsilon estimate.
    pub mc_stderr: f64,
}

impl BoundCheck {
    /// Whether epsilon sits inside the closed-form bounds, allowing
    /// `sigmas` standard errors of Monte-Carlo slack.
    pub fn holds(&self, sigmas: f64) -> bool {
        let slack = sigmas * self.mc_stderr;
        self.epsilon >= self.lower - slack && self.epsilon <= self.upper + slack
    }
}

/// Samples per Monte-Carlo shard; shards are reduced in index order so the
/// estimate is independent of the worker count.
const SHARD: u64 = 1 << 16;

fn require_finite(name: &str, d2: D2) -> Result<f64> {
    match d2 {
        D2::Finite(v) => Ok(v),
        D2::Divergent { dim } => Err(Error::InvalidParam(format!(
            "d2({name}) diverges in dimension {dim}; the bound is undefined for this triple"
        ))),
    }
}

/// Estimate epsilon for the triple (p, q, q*) and report the closed-form
/// bounds. Refuses divergent second moments, naming the offending
/// dimension.
pub fn check_bound(
    p: &ClassGaussian,
    q: &ClassGaussian,
    q_star: &ClassGaussian,
    samples: u64,
    seed: u64,
) -> Result<BoundCheck> {
    if q.dim() != p.dim() || q_star.dim() != p.dim() {
        return Err(Error::DimMismatch {
            expected: p.dim(),
            got: q.dim().max(q_star.dim()),
        });
    }
    if samples < 10_000 {
        return Err(Error::InvalidParam(format!(
            "need at least 10^4 Monte-Carlo samples, got {samples}"
        )));
    }
    let d2_q = require_finite("q||p", renyi_d2(q, p)?)?;
    let d2_qs = require_finite("q*||p", renyi_d2(q_star, p)?)?;

    let lower = {
        let diff = d2_q.sqrt() - d2_qs.sqrt();
        diff * diff
    };
    let upper = d2_q + d2_qs;

    // Seed one RNG per shard up front so the stream layout is fixed.
    let num_shards = samples.div_ceil(SHARD);
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let shard_seeds: Vec<u64> = (0..num_shards).map(|_| seeder.random()).collect();

    let dim = p.dim();
    let partials: Vec<(f64, f64, u64)> = shard_seeds
        .par_iter()
        .enumerate()
        .map(|(idx, &shard_seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(shard_seed);
            let count = SHARD.min(samples - idx as u64 * SHARD);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut x = vec![0.0f64; dim];
            for _ in 0..count {
                for (k, xv) in x.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    *xv = p.mean[k] + p.std[k] * z;
                }
                let log_p = p.log_density(&x).expect("dims checked");
                let w = (q.log_density(&x).expect("dims checked") - log_p).exp();
                let w_star = (q_star.log_density(&x).expect("dims checked") - log_p).exp();
                let sq = (w - w_star) * (w - w_star);
                sum += sq;
                sum_sq += sq * sq;
            }
            (sum, sum_sq, count)
        })
        .collect();

    let (sum, sum_sq, count) = partials
        .iter()
        .fold((0.0, 0.0, 0u64), |(a, b, c), &(x, y, z)| {
            (a + x, b + y, c + z)
        });
    let n = count as f64;
    let epsilon = sum / n;
    let variance = (sum_sq / n - epsilon * epsilon).max(0.0);
    let mc_stderr = (variance / n).sqrt();

    Ok(BoundCheck {
        epsilon,
        lower,
        upper,
        mc_samples: count,
        mc_stderr,
    })
}

/// Closed-form crossover points of the 1-D density ratio `w(x) = q(x)/p(x)`
/// for `p = N(mu_a, sigma_a^2)`, `q = N(mu_b, sigma_b^2)` with
/// `sigma_a^2 < sigma_b^2`. `w` equals 1 at both points, dips below 1
/// between them, and exceeds 1 outside.
pub fn crossover_points(p: &ClassGaussian, q: &ClassGaussian) -> Result<(f64, f64)> {
    if p.dim() != 1 || q.dim() != 1 {
        return Err(Error::DimMismatch {
            expected: 1,
            got: p.dim().max(q.dim()),
        });
    }
    let (mu_a, sd_a) = (p.mean[0], p.std[0]);
    let (mu_b, sd_b) = (q.mean[0], q.std[0]);
    let va = sd_a * sd_a;
    let vb = sd_b * sd_b;
    if va >= vb {
        return Err(Error::InvalidParam(format!(
            "crossover analysis requires var_p < var_q, got {va} >= {vb}"
        )));
    }
    let delta = ((mu_a - mu_b) * (mu_a - mu_b) + (vb - va) * (vb.ln() - va.ln())).sqrt();
    let denom = vb - va;
    let tau1 = (mu_a * vb - mu_b * va - sd_a * sd_b * delta) / denom;
    let tau2 = (mu_a * vb - mu_b * va + sd_a * sd_b * delta) / denom;
    Ok((tau1, tau2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(mu: f64, sigma: f64) -> ClassGaussian {
        ClassGaussian::new(vec![mu], vec![sigma], 1).unwrap()
    }

    #[test]
    fn identical_q_and_qstar_give_exact_zero() {
        let p = g1(0.0, 1.0);
        let q = g1(0.5, 0.9);
        let check = check_bound(&p, &q, &q, 20_000, 7).unwrap();
        assert_eq!(check.epsilon, 0.0);
        assert_eq!(check.lower, 0.0);
        assert!(check.upper > 0.0);
        assert!(check.holds(3.0));
    }

    #[test]
    fn qstar_equals_p_matches_identity() {
        // w* = 1, so epsilon = d2(q||p) - 1.
        let p = g1(0.0, 1.0);
        let q = g1(0.6, 1.0);
        let check = check_bound(&p, &q, &p, 400_000, 3).unwrap();
        let d2 = renyi_d2(&q, &p).unwrap().finite().unwrap();
        let expected = d2 - 1.0;
        assert!(
            (check.epsilon - expected).abs() < 4.0 * check.mc_stderr,
            "epsilon {} vs identity {expected} (stderr {})",
            check.epsilon,
            check.mc_stderr
        );
        assert!(check.holds(3.0));
    }

    #[test]
    fn divergent_triple_is_refused_with_dimension() {
        let p = g1(0.0, 1.0);
        let q = g1(0.0, 3.0);
        let err = check_bound(&p, &q, &p, 20_000, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dimension 0"), "{msg}");
    }

    #[test]
    fn too_few_samples_rejected() {
        let p = g1(0.0, 1.0);
        assert!(check_bound(&p, &p, &p, 100, 1).is_err());
    }

    #[test]
    fn bound_check_deterministic() {
        let p = g1(0.0, 1.0);
        let q = g1(0.3, 1.1);
        let qs = g1(0.1, 1.05);
        let a = check_bound(&p, &q, &qs, 50_000, 42).unwrap();
        let b = check_bound(&p, &q, &qs, 50_000, 42).unwrap();
        assert_eq!(a.epsilon.to_bits(), b.epsilon.to_bits());
        assert_eq!(a.mc_stderr.to_bits(), b.mc_stderr.to_bits());
    }

    #[test]
    fn crossover_symmetric_case() {
        // p = N(0,1), q = N(0,4): tau = +-sqrt((8/3) ln 2).
        let (t1, t2) = crossover_points(&g1(0.0, 1.0), &g1(0.0, 2.0)).unwrap();
        let expected = (8.0 / 3.0 * std::f64::consts::LN_2).sqrt();
        assert!((t2 - expected).abs() < 1e-12, "{t2} vs {expected}");
        assert!((t1 + expected).abs() < 1e-12);
        assert!((t1 + t2).abs() < 1e-12, "symmetric means give tau1 = -tau2");
    }

    #[test]
    fn crossovers_are_unit_ratio_points() {
        let p = g1(0.4, 0.8);
        let q = g1(-0.3, 1.7);
        let (t1, t2) = crossover_points(&p, &q).unwrap();
        assert!(t1 < t2);
        for t in [t1, t2] {
            let w = (q.log_density(&[t]).unwrap() - p.log_density(&[t]).unwrap()).exp();
            assert!((w - 1.0).abs() < 1e-9, "w({t}) = {w}");
        }
    }

    #[test]
    fn ratio_sign_pattern() {
        let p = g1(0.2, 1.0);
        let q = g1(-0.5, 1.9);
        let (t1, t2) = crossover_points(&p, &q).unwrap();
        let sd_b = 1.9;
        let grid = 1000;
        for i in 0..=grid {
            let x = -0.5 - 6.0 * sd_b + 12.0 * sd_b * i as f64 / grid as f64;
            let w = (q.log_density(&[x]).unwrap() - p.log_density(&[x]).unwrap()).exp();
            let margin = 1e-9;
            if x < t1 - margin || x > t2 + margin {
                assert!(w > 1.0, "expected w > 1 at x={x}, got {w}");
            } else if x > t1 + margin && x < t2 - margin {
                assert!(w < 1.0, "expected w < 1 at x={x}, got {w}");
            }
        }
    }

    #[test]
    fn equal_or_narrower_q_rejected() {
        assert!(crossover_points(&g1(0.0, 1.0), &g1(1.0, 1.0)).is_err());
        assert!(crossover_points(&g1(0.0, 1.0), &g1(1.0, 0.5)).is_err());
    }
}
