//! Monte Carlo summaries and distribution distances.

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_replicas: u64,
    pub seed: Option<RngStream>,
}

impl MomentEstimate {
    /// Mean and standard error, summed in slice order.
    pub fn from_samples(xs: &[f64], seed: Option<RngStream>) -> Self {
        let n = xs.len();
        assert!(n > 0, "no samples");
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n_replicas: n as u64, seed }
    }

    pub fn exact(value: f64) -> Self {
        Self { mean: value, stderr: 0.0, n_replicas: 1, seed: None }
    }

    /// `(mean - target) / stderr`; zero when both the gap and the error vanish.
    pub fn z(&self, target: f64) -> f64 {
        z_score(self.mean - target, self.stderr)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { mean: self.mean * c, stderr: self.stderr * c.abs(), ..self.clone() }
    }
}

pub fn z_score(gap: f64, se: f64) -> f64 {
    if se > 0.0 {
        gap / se
    } else if gap == 0.0 {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    }
}

pub fn combined_stderr(a: &MomentEstimate, b: &MomentEstimate) -> f64 {
    a.stderr.hypot(b.stderr)
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `P(Z > x)` without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Kolmogorov distance between the empirical law of `xs` and a continuous `cdf`.
pub fn ks_distance(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    ks_distance_atoms(xs, &cdf, &cdf)
}

/// Kolmogorov distance for a law with atoms: `cdf_left(x)` is `P(X < x)`.
/// Tied samples are compared as one jump.
pub fn ks_distance_atoms(xs: &[f64], cdf: impl Fn(f64) -> f64, cdf_left: impl Fn(f64) -> f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        let x = s[i];
        let mut j = i + 1;
        while j < s.len() && s[j] == x {
            j += 1;
        }
        d = d.max(j as f64 / n - cdf(x)).max(cdf_left(x) - i as f64 / n);
        i = j;
    }
    d
}

/// Largest amount by which the empirical CDF of `upper` exceeds that of
/// `lower`. Small values mean `upper` is stochastically larger.
pub fn one_sided_ks(lower: &[f64], upper: &[f64]) -> f64 {
    let mut a = lower.to_vec();
    let mut b = upper.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max(j as f64 / nb - i as f64 / na);
    }
    d
}
