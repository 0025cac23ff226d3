//! Moderate-deviation observables read off a quenched kernel.

use serde::{Deserialize, Serialize};

use crate::lattice::{log_binom_pmf, QuenchedKernel};
use crate::measure::{Centering, ModerateDeviationScaling};
use crate::quad::{integrate, integrate_decaying, integrate_line, QuadOptions};
use crate::rng::RngStream;
use crate::she::{heat_kernel, she_moment2_bridge};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    Constant { value: f64 },
    Indicator { lo: f64, hi: f64 },
    Gaussian { center: f64, width: f64 },
    /// `exp(-1 / (1 - r^2))` on `|r| < 1`, `r = (x - center) / radius`.
    Bump { center: f64, radius: f64 },
}

impl TestFunction {
    pub fn evaluate(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Constant { value } => value,
            TestFunction::Indicator { lo, hi } => {
                if x >= lo && x <= hi {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::Gaussian { center, width } => {
                let r = (x - center) / width;
                (-0.5 * r * r).exp()
            }
            TestFunction::Bump { center, radius } => {
                let r = (x - center) / radius;
                if r.abs() < 1.0 {
                    (-1.0 / (1.0 - r * r)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            TestFunction::Constant { .. } | TestFunction::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            TestFunction::Indicator { lo, hi } => (lo, hi),
            TestFunction::Bump { center, radius } => (center - radius, center + radius),
        }
    }

    pub fn smoothness(&self) -> &'static str {
        match self {
            TestFunction::Indicator { .. } => "discontinuous",
            _ => "smooth",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TestFunction::Constant { value } => value.is_finite(),
            TestFunction::Indicator { lo, hi } => lo < hi,
            TestFunction::Gaussian { width, .. } => width > 0.0,
            TestFunction::Bump { radius, .. } => radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("degenerate test function {self:?}")))
        }
    }

    pub fn label(&self) -> String {
        match *self {
            TestFunction::Constant { value } => format!("const({value})"),
            TestFunction::Indicator { lo, hi } => format!("ind[{lo};{hi}]"),
            TestFunction::Gaussian { center, width } => format!("gauss({center};{width})"),
            TestFunction::Bump { center, radius } => format!("bump({center};{radius})"),
        }
    }

    /// Integration range: the support, or a window where the function is
    /// below 1e-17 of its peak.
    pub fn window(&self, t: f64) -> (f64, f64) {
        match *self {
            TestFunction::Gaussian { center, width } => (center - 9.0 * width, center + 9.0 * width),
            TestFunction::Constant { .. } => (-12.0 * t.sqrt(), 12.0 * t.sqrt()),
            _ => self.support(),
        }
    }

    /// `int phi(y) p_t(y) dy`.
    pub fn heat_pairing(&self, t: f64) -> Result<f64> {
        if let TestFunction::Constant { value } = *self {
            return Ok(value);
        }
        let (lo, hi) = self.window(t);
        let f = |y: f64| self.evaluate(y) * heat_kernel(t, y).unwrap_or(0.0);
        let opts = QuadOptions { abs_tol: 1e-15, rel_tol: 1e-12, max_intervals: 2000 };
        Ok(integrate(f, lo, hi, opts)?.value)
    }
}

/// Per-environment field values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub x_field: f64,
    pub q_field: f64,
    pub tail_values: Vec<(f64, f64)>,
    pub env_seed: RngStream,
}

/// How `K[u, inf)` is read at a non-integer `u`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TailConvention {
    /// `K[ceil(u), inf)`.
    #[default]
    Inclusive,
    /// Each atom spread uniformly over the cell `[y - 1, y + 1)`.
    Cell,
}

fn check_step(k: &QuenchedKernel<f64>, s: &ModerateDeviationScaling) -> Result<()> {
    if k.n != s.n {
        return Err(Error::Contract(format!("kernel has {} steps, scaling expects {}", k.n, s.n)));
    }
    Ok(())
}

/// `sum_u w(u) phi(x(u)) K(u)`.
pub fn x_field(
    k: &QuenchedKernel<f64>,
    s: &ModerateDeviationScaling,
    phi: &TestFunction,
    centering: Centering,
) -> Result<f64> {
    check_step(k, s)?;
    let tilt = s.tilt(centering, k.n);
    let mut acc = 0.0;
    for (u, p) in k.sites() {
        if p == 0.0 {
            continue;
        }
        let f = phi.evaluate(s.x_of(u as f64, k.n));
        if f != 0.0 {
            acc += f * (tilt.log_weight(u as f64) + p.ln()).exp();
        }
    }
    Ok(acc)
}

/// Environment average of `x_field`: the same sum against the simple random
/// walk law.
pub fn annealed_x_field(s: &ModerateDeviationScaling, phi: &TestFunction, centering: Centering) -> f64 {
    let tilt = s.tilt(centering, s.n);
    let mut acc = 0.0;
    for j in 0..=s.n {
        let u = 2.0 * j as f64 - s.n as f64;
        let f = phi.evaluate(s.x_of(u, s.n));
        if f != 0.0 {
            acc += f * (log_binom_pmf(s.n, j, 0.5) + tilt.log_weight(u)).exp();
        }
    }
    acc
}

/// Running Riemann sum for the quadratic martingale field.
#[derive(Clone, Debug)]
pub struct QFieldAccumulator {
    scaling: ModerateDeviationScaling,
    psi: TestFunction,
    centering: Centering,
    sum: f64,
}

impl QFieldAccumulator {
    pub fn new(scaling: ModerateDeviationScaling, psi: TestFunction, centering: Centering) -> Self {
        Self { scaling, psi, centering, sum: 0.0 }
    }

    /// Adds the term of `K_m`; steps `m >= n` contribute nothing.
    pub fn push(&mut self, k: &QuenchedKernel<f64>) {
        let m = k.n;
        if m >= self.scaling.n {
            return;
        }
        let tilt = self.scaling.tilt(self.centering, m);
        let mut acc = 0.0;
        for (u, p) in k.sites() {
            if p == 0.0 {
                continue;
            }
            let f = self.psi.evaluate(self.scaling.x_of(u as f64, m));
            if f != 0.0 {
                acc += f * (2.0 * (tilt.log_weight(u as f64) + p.ln())).exp();
            }
        }
        self.sum += acc * self.scaling.nf().sqrt() / self.scaling.nf();
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// `(1/N) sum_{m < n} N^{1/2} sum_u w(u, m)^2 psi(x_m(u)) K_m(u)^2`.
pub fn q_field_accumulate<'a>(
    kernels: impl IntoIterator<Item = &'a QuenchedKernel<f64>>,
    s: &ModerateDeviationScaling,
    psi: &TestFunction,
    centering: Centering,
) -> f64 {
    let mut acc = QFieldAccumulator::new(*s, *psi, centering);
    for k in kernels {
        acc.push(k);
    }
    acc.value()
}

fn tail_at(k: &QuenchedKernel<f64>, u: f64, conv: TailConvention) -> f64 {
    match conv {
        TailConvention::Inclusive => k.tail(u.ceil() as i64),
        TailConvention::Cell => k.cell_tail(u),
    }
}

/// `N^{1/4} w(u(x)) K[u(x), inf)`.
pub fn tail_field(
    k: &QuenchedKernel<f64>,
    s: &ModerateDeviationScaling,
    x: f64,
    centering: Centering,
    conv: TailConvention,
) -> Result<f64> {
    check_step(k, s)?;
    let u = s.u(x);
    let tail = tail_at(k, u, conv);
    if tail <= 0.0 {
        return Ok(0.0);
    }
    let lw = s.tilt(centering, k.n).log_weight(u);
    Ok(s.nf().powf(0.25) * (lw + tail.ln()).exp())
}

/// Environment average of `tail_field`.
pub fn annealed_tail_field(s: &ModerateDeviationScaling, x: f64, centering: Centering, conv: TailConvention) -> f64 {
    let u = s.u(x);
    let lw = s.tilt(centering, s.n).log_weight(u);
    let mut acc = 0.0;
    for j in (0..=s.n).rev() {
        let y = 2.0 * j as f64 - s.n as f64;
        let w = match conv {
            TailConvention::Inclusive => {
                if y >= u.ceil() {
                    1.0
                } else {
                    0.0
                }
            }
            TailConvention::Cell => ((y + 1.0 - u) / 2.0).clamp(0.0, 1.0),
        };
        if w == 0.0 {
            break;
        }
        acc += w * (log_binom_pmf(s.n, j, 0.5) + lw).exp();
    }
    s.nf().powf(0.25) * acc
}

/// `N^{1/4} E[exp(-N^{1/4}(B_t - x)) 1{B_t >= x}]` by quadrature.
pub fn tail_first_moment_oracle(big_n: u64, t: f64, x: f64) -> Result<f64> {
    let q = (big_n as f64).powf(0.25);
    let f = |y: f64| (-q * (y - x)).exp() * heat_kernel(t, y).unwrap_or(0.0);
    let step = (1.0 / q).min(t.sqrt());
    let r = integrate_decaying(f, x, step, 1e-18, QuadOptions::default())?;
    Ok(q * r.value)
}

/// Same oracle through the normal tail function.
pub fn tail_first_moment_closed(big_n: u64, t: f64, x: f64) -> f64 {
    let q = (big_n as f64).powf(0.25);
    q * (0.5 * q * q * t + q * x).exp() * crate::stats::normal_sf((x + q * t) / t.sqrt())
}

/// Finite-`N` counterpart of the two-point limit: both points smoothed by
/// `q e^{-q y} 1{y >= 0}`, `q = N^{1/4}`, against the second moment of the
/// heat equation with noise `sigma`.
pub fn tail_two_point_oracle(big_n: u64, t: f64, x: f64, y: f64, sigma: f64) -> Result<f64> {
    let q = (big_n as f64).powf(0.25);
    let opts = QuadOptions { abs_tol: 1e-12, rel_tol: 1e-9, max_intervals: 400 };
    let mut err = None;
    let outer = integrate_decaying(
        |a| match integrate_decaying(
            |b| (-q * (a + b)).exp() * she_moment2_bridge(t, x + a, y + b, sigma).unwrap_or(0.0),
            0.0,
            1.0 / q,
            1e-16,
            opts,
        ) {
            Ok(r) => r.value,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        0.0,
        1.0 / q,
        1e-16,
        opts,
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(q * q * outer.value),
    }
}

/// `(1 - K[m + 1, inf))^k`, the quenched probability that `k` independent
/// walkers all end at or below `m`.
pub fn max_cdf(k_kernel: &QuenchedKernel<f64>, k: u64, m: i64) -> f64 {
    let p = k_kernel.tail(m + 1);
    (k as f64 * (-p).ln_1p()).exp()
}

/// `K(-inf, m]`, summed from the left.
pub fn left_cdf(k: &QuenchedKernel<f64>, m: i64) -> f64 {
    k.sites().take_while(|&(y, _)| y <= m).map(|(_, p)| p).sum()
}

/// `int phi p_t` computed over the whole line, for comparisons.
pub fn gaussian_pairing_line(phi: &TestFunction, t: f64) -> Result<f64> {
    let f = |y: f64| phi.evaluate(y) * heat_kernel(t, y).unwrap_or(0.0);
    Ok(integrate_line(f, 0.0, t.sqrt(), 1e-20, QuadOptions::default())?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{binomial_kernel, evolve, EnvKind, EnvModel};
    use crate::rng::derive_stream;

    fn sc(n: u64) -> ModerateDeviationScaling {
        ModerateDeviationScaling::new(n, 1.0).unwrap()
    }

    #[test]
    fn delta_kernel_examples() {
        let k = QuenchedKernel::<f64>::delta0();
        let s = ModerateDeviationScaling { big_n: 64, t: 1.0, n: 0 };
        let phi = TestFunction::Gaussian { center: 0.0, width: 1.0 };
        assert_eq!(x_field(&k, &s, &phi, Centering::Lattice).unwrap(), 1.0);
        // u(x) here uses t = 1 with n = 0, so place the query by hand
        let s0 = ModerateDeviationScaling { big_n: 16, t: 0.0, n: 0 };
        let f = tail_field(&k, &s0, -0.5, Centering::Continuum, TailConvention::Inclusive).unwrap();
        assert!((f - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(tail_field(&k, &s0, 0.5, Centering::Continuum, TailConvention::Inclusive).unwrap(), 0.0);
    }

    #[test]
    fn x_field_wrong_step_is_contract_error() {
        let k = binomial_kernel(10);
        assert!(matches!(
            x_field(&k, &sc(16), &TestFunction::Constant { value: 1.0 }, Centering::Lattice),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn constant_half_matches_enumeration() {
        let s = sc(16);
        let k = evolve::<f64>(&EnvModel::new(EnvKind::ConstantHalf, 16).unwrap(), &derive_stream(0, &[]), 16).unwrap();
        let phi = TestFunction::Indicator { lo: -1.0, hi: 1.0 };
        // sites u = 2j - 16 with |u - 8| <= 4, weight C(16,j) 2^-16 e^{th u}/cosh(th)^16
        let th = 0.5f64.atanh();
        let mut brute = 0.0;
        let mut c = 1.0f64;
        for j in 0..=16u64 {
            if j > 0 {
                c = c * (17 - j) as f64 / j as f64;
            }
            let u = 2.0 * j as f64 - 16.0;
            if (u - 8.0).abs() <= 4.0 {
                brute += c / 65536.0 * (th * u).exp() / th.cosh().powi(16);
            }
        }
        let v = x_field(&k, &s, &phi, Centering::Lattice).unwrap();
        assert!((v - brute).abs() < 1e-13, "{v} vs {brute}");
        assert!((annealed_x_field(&s, &phi, Centering::Lattice) - brute).abs() < 1e-13);
    }

    #[test]
    fn annealed_constant_is_one() {
        for n in [4u64, 64, 4096] {
            let v = annealed_x_field(&sc(n), &TestFunction::Constant { value: 1.0 }, Centering::Lattice);
            assert!((v - 1.0).abs() < 1e-12, "N={n}: {v}");
        }
    }

    #[test]
    fn q_field_one_atom() {
        // omega = 1 everywhere: K_m = delta_m
        let s = sc(16);
        let psi = TestFunction::Constant { value: 1.0 };
        let ks: Vec<QuenchedKernel<f64>> =
            (0..=16).map(|m| QuenchedKernel { n: m, offset: m as i64, probs: vec![1.0] }).collect();
        let th = 0.5f64.atanh();
        let lc = th.cosh().ln();
        let expect: f64 = (0..16).map(|m| (2.0 * (th * m as f64 - m as f64 * lc)).exp()).sum::<f64>() * 4.0 / 16.0;
        let got = q_field_accumulate(&ks, &s, &psi, Centering::Lattice);
        assert!((got - expect).abs() < 1e-12 * expect);
        assert_eq!(q_field_accumulate(&ks[..1], &ModerateDeviationScaling { n: 0, ..s }, &psi, Centering::Lattice), 0.0);
    }

    #[test]
    fn tail_oracles_agree() {
        for &(n, x) in &[(16u64, 0.0), (4096, -0.5), (4096, 0.5), (256, 1.3)] {
            let a = tail_first_moment_oracle(n, 1.0, x).unwrap();
            let b = tail_first_moment_closed(n, 1.0, x);
            assert!((a - b).abs() < 1e-10 * b, "{n} {x}: {a} {b}");
            assert!(a <= 1.0 / (2.0 * std::f64::consts::PI).sqrt());
        }
    }

    #[test]
    fn smoothed_two_point_limits() {
        let free = tail_two_point_oracle(1024, 1.0, 0.2, -0.3, 1e-12).unwrap();
        let prod = tail_first_moment_closed(1024, 1.0, 0.2) * tail_first_moment_closed(1024, 1.0, -0.3);
        assert!((free / prod - 1.0).abs() < 1e-8, "{free} {prod}");
        let far = tail_two_point_oracle(1 << 40, 1.0, 0.0, 0.0, 1.0).unwrap();
        let limit = crate::she::she_moment2_bridge(1.0, 0.0, 0.0, 1.0).unwrap();
        assert!((far / limit - 1.0).abs() < 2e-3, "{far} {limit}");
    }

    #[test]
    fn max_cdf_examples() {
        let k = binomial_kernel(2);
        assert_eq!(max_cdf(&k, 1, 0), 0.75);
        assert_eq!(max_cdf(&k, 5, 2), 1.0);
        assert!((max_cdf(&k, 2, 0) - 0.5625).abs() < 1e-16);
        assert!((max_cdf(&k, 2, -2) - 0.0625).abs() < 1e-16);
        assert!((left_cdf(&k, 0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn heat_pairings() {
        let g = TestFunction::Gaussian { center: 0.0, width: 0.5 };
        let exact = 0.5 / (1.25f64).sqrt();
        assert!((g.heat_pairing(1.0).unwrap() - exact).abs() < 1e-12);
        assert!((gaussian_pairing_line(&g, 1.0).unwrap() - exact).abs() < 1e-12);
        let ind = TestFunction::Indicator { lo: -1.0, hi: 1.0 };
        assert!((ind.heat_pairing(1.0).unwrap() - 0.682_689_492_137_085_9).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn detilted_tail_nonincreasing(seed in 0u64..500, x in -1.5f64..1.5, dx in 0.0f64..0.5) {
            let s = sc(256);
            let m = EnvModel::new(EnvKind::two_point_for(0.5), 256).unwrap();
            let k = evolve::<f64>(&m, &derive_stream(seed, &[]), 256).unwrap();
            for conv in [TailConvention::Inclusive, TailConvention::Cell] {
                let q = s.nf().powf(0.25);
                let a = tail_field(&k, &s, x, Centering::Continuum, conv).unwrap() * (-q * x).exp();
                let b = tail_field(&k, &s, x + dx, Centering::Continuum, conv).unwrap() * (-q * (x + dx)).exp();
                proptest::prop_assert!(b <= a * (1.0 + 1e-12));
            }
        }

        #[test]
        fn sum_of_squares_at_most_one(seed in 0u64..500, n in 0u64..300) {
            let m = EnvModel::new(EnvKind::two_point_for(0.5), 256).unwrap();
            let k = evolve::<f64>(&m, &derive_stream(seed, &[]), n).unwrap();
            proptest::prop_assert!(k.sum_sq() <= 1.0 + 1e-12);
        }

        #[test]
        fn x_field_nonnegative(seed in 0u64..500, c in -2.0f64..2.0) {
            let s = sc(64);
            let m = EnvModel::new(EnvKind::two_point_for(0.5), 64).unwrap();
            let k = evolve::<f64>(&m, &derive_stream(seed, &[]), 64).unwrap();
            let v = x_field(&k, &s, &TestFunction::Bump { center: c, radius: 1.0 }, Centering::Lattice).unwrap();
            proptest::prop_assert!(v >= 0.0 && v.is_finite());
        }
    }
}
