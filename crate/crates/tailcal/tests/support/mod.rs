//! Independent numeric oracles shared by the integration tests.
//!
//! Everything here is deliberately separate from the library's code paths:
//! quantile-based Wasserstein integration, bisection root finding, a
//! hand-rolled normal quantile, and plain Monte-Carlo estimators.

#![allow(dead_code)]

/// Acklam's rational approximation to the standard normal quantile.
/// Max relative error about 1.15e-9 over the full open interval.
pub fn inv_norm_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239e0,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838e0,
        -2.549_732_539_343_734e0,
        4.374_664_141_464_968e0,
        2.938_163_982_698_783e0,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996e0,
        3.754_408_661_907_416e0,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Tanh-sinh quadrature of `f` over (0, 1). `f` receives `(u, 1 - u)` with
/// the small side computed stably, so integrands may probe the endpoints.
pub fn tanh_sinh<F: Fn(f64, f64) -> f64>(f: F, levels: u32) -> f64 {
    let h = 4.0 / (1u64 << levels) as f64;
    let n = (4.0 / h) as i64;
    let mut acc = 0.0;
    for k in -n..=n {
        let t = k as f64 * h;
        let s = std::f64::consts::FRAC_PI_2 * t.sinh();
        // u = sigmoid(2s), 1-u = sigmoid(-2s)
        let u = 1.0 / (1.0 + (-2.0 * s).exp());
        let um1 = 1.0 / (1.0 + (2.0 * s).exp());
        if u <= 0.0 || um1 <= 0.0 {
            continue;
        }
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() / (2.0 * s.cosh().powi(2));
        if !w.is_finite() || w < 1e-300 {
            continue;
        }
        acc += w * f(u, um1);
    }
    acc * h
}

/// Quantile-coupling Wasserstein-2 between 1-D Gaussians:
/// `sqrt(int_0^1 (F_a^{-1}(u) - F_b^{-1}(u))^2 du)`.
pub fn w2_quantile_oracle(mu_a: f64, sd_a: f64, mu_b: f64, sd_b: f64) -> f64 {
    let integral = tanh_sinh(
        |u, um1| {
            let z = if u <= 0.5 {
                inv_norm_cdf(u)
            } else {
                -inv_norm_cdf(um1)
            };
            let diff = (mu_a - mu_b) + (sd_a - sd_b) * z;
            diff * diff
        },
        6,
    );
    integral.sqrt()
}

/// 1-D normal log density, written out so the oracle shares nothing with
/// the library implementation.
pub fn normal_log_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Bisection on `f` over `[lo, hi]`, assuming a sign change.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    assert!(
        flo * f(hi) <= 0.0,
        "bisection bracket must straddle a root: f({lo}), f({hi})"
    );
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if flo * fm <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    0.5 * (lo + hi)
}

/// Spearman rank correlation. Inputs are paired; ties get their first-seen
/// rank order (inputs here are continuous, so ties do not arise).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let ranks = |v: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in order.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    };
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..xs.len() {
        num += (rx[i] - mean) * (ry[i] - mean);
        dx += (rx[i] - mean).powi(2);
        dy += (ry[i] - mean).powi(2);
    }
    num / (dx * dy).sqrt()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// A simple deterministic xorshift generator for oracle-side sampling, so
/// oracle draws do not depend on the library's RNG choices.
pub struct OracleRng(u64);

impl OracleRng {
    pub fn new(seed: u64) -> Self {
        Self(seed.max(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    /// Uniform in (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let v = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            if v > 0.0 && v < 1.0 {
                return v;
            }
        }
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via inverse transform.
    pub fn normal(&mut self) -> f64 {
        inv_norm_cdf(self.uniform())
    }
}
