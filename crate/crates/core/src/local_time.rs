//! Local time at zero of Brownian bridges: exact tail law, sampling,
//! exponential moments and occupation-time estimators.
//!
//! Local time is normalized against the quadratic variation,
//! `L = lim (1/2eps) int 1{|X| < eps} d<X, X>`, so `|X| - L` is a martingale.

use serde::{Deserialize, Serialize};

use crate::quad::{integrate, QuadOptions};
use crate::rng::CounterRng;
use crate::{Real, Result};

/// Standard bridge from `a` to `a + b` on `[0, 1]` with an exponential
/// moment parameter `theta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeSpec<T> {
    pub a: T,
    pub b: T,
    pub theta: T,
}

impl<T: Real> BridgeSpec<T> {
    pub fn new(a: T, b: T, theta: T) -> Self {
        Self { a, b, theta }
    }

    pub fn with_theta(self, theta: T) -> Self {
        Self { theta, ..self }
    }

    /// `|a| + |a + b|`.
    fn reach(&self) -> T {
        self.a.abs() + (self.a + self.b).abs()
    }

    /// Mass of the atom at zero (bridge never visits the origin).
    pub fn atom_mass(&self) -> T {
        T::one() - bridge_lt_tail(self, T::zero())
    }
}

/// `P(L > v) = exp(b^2/2 - (|a| + |a+b| + v)^2 / 2)`.
pub fn bridge_lt_tail<T: Real>(spec: &BridgeSpec<T>, v: T) -> T {
    let h = T::lit(0.5);
    let s = spec.reach() + v.max(T::zero());
    (h * spec.b * spec.b - h * s * s).exp().min(T::one()).max(T::zero())
}

/// Inverse-CDF sample from a uniform `u` in `(0, 1]`.
#[inline]
pub fn bridge_lt_from_uniform(a: f64, b: f64, u: f64) -> f64 {
    let c = a.abs() + (a + b).abs();
    let v = (b * b - 2.0 * u.ln()).sqrt() - c;
    v.max(0.0)
}

pub fn sample_bridge_local_time(spec: &BridgeSpec<f64>, rng: &mut CounterRng) -> f64 {
    bridge_lt_from_uniform(spec.a, spec.b, rng.open_uniform())
}

/// Local time over one grid step of a rate-`rate` process that moves from
/// `d0` to `d1` in time `dt`, sampled exactly given the endpoints.
#[inline]
pub fn bridge_step_lt(d0: f64, d1: f64, dt: f64, rate: f64, rng: &mut CounterRng) -> f64 {
    if d0 != 0.0 && d1 != 0.0 && (d0 > 0.0) == (d1 > 0.0) {
        let s = (rate * dt).sqrt();
        let (a, b) = (d0 / s, (d1 - d0) / s);
        let c = a.abs() + (a + b).abs();
        let gap = 0.5 * (c * c - b * b);
        if gap > 700.0 {
            return 0.0;
        }
        let u = rng.open_uniform();
        if u >= (-gap).exp() {
            return 0.0;
        }
        return s * bridge_lt_from_uniform(a, b, u);
    }
    let s = (rate * dt).sqrt();
    s * bridge_lt_from_uniform(d0 / s, (d1 - d0) / s, rng.open_uniform())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpMoment<T> {
    pub value: T,
    pub quad_error: T,
    pub v_cut: T,
    pub evals: usize,
}

/// `E[exp(theta L)] = 1 + theta int_0^inf e^{theta v} P(L > v) dv`.
pub fn bridge_exp_moment<T: Real>(spec: &BridgeSpec<T>) -> Result<ExpMoment<T>> {
    let th = spec.theta;
    if th == T::zero() {
        return Ok(ExpMoment { value: T::one(), quad_error: T::zero(), v_cut: T::zero(), evals: 0 });
    }
    let c = spec.reach();
    let h = T::lit(0.5);
    let b2 = h * spec.b * spec.b;
    // log-integrand is concave with curvature one; below 1e-16 of the peak
    // beyond this point
    let peak_at = (th - c).max(T::zero());
    let v_cut = peak_at + (T::lit(2.0) * T::lit(1e16).ln()).sqrt();
    let g = |v: T| (th * v + b2 - h * (c + v) * (c + v)).exp();
    let opts = QuadOptions { abs_tol: T::lit(1e-300), rel_tol: T::lit(1e-13).max(T::epsilon() * T::lit(64.0)), max_intervals: 500 };
    let r = if peak_at > T::zero() {
        let a = integrate(g, T::zero(), peak_at, opts)?;
        let b = integrate(g, peak_at, v_cut, opts)?;
        crate::quad::QuadResult { value: a.value + b.value, error: a.error + b.error, evals: a.evals + b.evals }
    } else {
        integrate(g, T::zero(), v_cut, opts)?
    };
    Ok(ExpMoment { value: T::one() + th * r.value, quad_error: th.abs() * r.error, v_cut, evals: r.evals })
}

/// Closed form of the same moment through the normal tail function.
pub fn bridge_exp_moment_closed(spec: &BridgeSpec<f64>) -> f64 {
    let (th, b) = (spec.theta, spec.b);
    let c = spec.a.abs() + (spec.a + b).abs();
    let log_pref = 0.5 * b * b + 0.5 * th * th - th * c;
    1.0 + th * (2.0 * std::f64::consts::PI).sqrt() * log_pref.exp() * crate::stats::normal_sf(c - th)
}

/// Envelope `1 + theta sqrt(2 pi) e^{theta^2/2}` for `theta >= 0`.
pub fn exp_moment_envelope<T: Real>(theta: T) -> T {
    T::one() + theta * (T::lit(2.0) * T::PI()).sqrt() * (T::lit(0.5) * theta * theta).exp()
}

/// Standard spec and scale such that the local time of a rate-`rate` bridge
/// from 0 to `z` on `[0, t]` equals `scale` times the standard one in law.
pub fn rescale_bridge_lt<T: Real>(t: T, rate: T, z: T) -> (BridgeSpec<T>, T) {
    let scale = (rate * t).sqrt();
    (BridgeSpec { a: T::zero(), b: z / scale, theta: T::zero() }, scale)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OccupationLt {
    /// Cumulative estimate at every grid point.
    pub ell: Vec<f64>,
    /// Set when `eps` is under three typical grid increments.
    pub coarse: bool,
}

/// `(rate / 2 eps) sum dt 1{|path| < eps}`, left Riemann sums.
pub fn occupation_local_time(path: &[f64], dt: f64, rate: f64, eps: f64) -> OccupationLt {
    let mut ell = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    let inc = rate * dt / (2.0 * eps);
    ell.push(0.0);
    for x in &path[..path.len().saturating_sub(1)] {
        if x.abs() < eps {
            acc += inc;
        }
        ell.push(acc);
    }
    OccupationLt { ell, coarse: eps < 3.0 * (rate * dt).sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_examples() {
        let s = BridgeSpec::new(0.0, 0.0, 0.0);
        assert_eq!(bridge_lt_tail(&s, 0.0), 1.0);
        assert!((bridge_lt_tail(&s, 1.0) - (-0.5f64).exp()).abs() < 1e-16);
        let far = BridgeSpec::new(5.0, 0.0, 0.0);
        assert!((bridge_lt_tail(&far, 0.0) / (-50.0f64).exp() - 1.0).abs() < 1e-14);
        assert!((far.atom_mass() - 1.0).abs() < 1e-20);
    }

    #[test]
    fn exp_moment_matches_closed_form() {
        for &(a, b, th) in &[(0.0, 0.0, 1.0), (0.3, -1.2, 2.5), (-1.0, 0.5, 0.2), (0.0, 2.0, -1.5), (2.0, 1.0, 4.0)] {
            let s = BridgeSpec::new(a, b, th);
            let q = bridge_exp_moment(&s).unwrap().value;
            let c = bridge_exp_moment_closed(&s);
            assert!((q - c).abs() < 1e-11 * c, "{a} {b} {th}: {q} vs {c}");
        }
    }

    #[test]
    fn exp_moment_generic_in_f32() {
        let s = BridgeSpec::new(0.0f32, 0.0, 1.0);
        let v = bridge_exp_moment(&s).unwrap().value;
        let e = bridge_exp_moment_closed(&BridgeSpec::new(0.0, 0.0, 1.0));
        assert!((v as f64 - e).abs() < 1e-5);
    }

    #[test]
    fn rescale_identity_and_scaling() {
        let (s, k) = rescale_bridge_lt(1.0, 1.0, 0.0);
        assert_eq!((s.a, s.b, k), (0.0, 0.0, 1.0));
        let (_, k) = rescale_bridge_lt(4.0, 1.0, 0.0);
        assert_eq!(k, 2.0);
        let (s, k) = rescale_bridge_lt(1.0, 2.0, 1.0);
        assert_eq!(k, 2f64.sqrt());
        assert!((s.b - 1.0 / 2f64.sqrt()).abs() < 1e-16);
    }

    #[test]
    fn occupation_on_far_path_is_zero() {
        let p = vec![1.0; 100];
        let o = occupation_local_time(&p, 0.01, 1.0, 0.5);
        assert_eq!(*o.ell.last().unwrap(), 0.0);
        assert!(!o.coarse);
    }

    proptest::proptest! {
        #[test]
        fn tail_nonincreasing(a in -3.0f64..3.0, b in -3.0f64..3.0, v in 0.0f64..5.0, dv in 0.0f64..1.0) {
            let s = BridgeSpec::new(a, b, 0.0);
            let (p, q) = (bridge_lt_tail(&s, v), bridge_lt_tail(&s, v + dv));
            proptest::prop_assert!(q <= p && (0.0..=1.0).contains(&p));
        }

        #[test]
        fn envelope_holds(a in -3.0f64..3.0, b in -3.0f64..3.0, th in 0.0f64..4.0) {
            let m = bridge_exp_moment(&BridgeSpec::new(a, b, th)).unwrap().value;
            proptest::prop_assert!(m >= 1.0 - 1e-14);
            proptest::prop_assert!(m <= exp_moment_envelope(th) * (1.0 + 1e-12));
        }
    }
}
