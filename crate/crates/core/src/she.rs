//! Moments of the stochastic heat equation `dZ = (1/2) Z'' dt + sqrt(sigma) Z dW`
//! (in the normalization where pair local times enter with weight
//! `sigma / 2`) started from a Dirac mass.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::local_time::{bridge_exp_moment, bridge_step_lt, occupation_local_time, rescale_bridge_lt};
use crate::quad::{integrate, integrate_decaying, QuadOptions};
use crate::rng::{CounterRng, RngStream};
use crate::stats::MomentEstimate;
use crate::{par, Error, Real, Result};

pub fn heat_kernel<T: Real>(t: T, x: T) -> Result<T> {
    if !(t > T::zero()) {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t:?}")));
    }
    let two = T::lit(2.0);
    Ok((-(x * x) / (two * t)).exp() / (two * T::PI() * t).sqrt())
}

/// `p_t(x) p_t(y) E[exp((sigma/2) L)]`, `L` the local time at zero of a
/// rate-2 bridge from 0 to `x - y` on `[0, t]`.
pub fn she_moment2_bridge<T: Real>(t: T, x: T, y: T, sigma: T) -> Result<T> {
    let pp = heat_kernel(t, x)? * heat_kernel(t, y)?;
    let (spec, scale) = rescale_bridge_lt(t, T::lit(2.0), x - y);
    let m = bridge_exp_moment(&spec.with_theta(T::lit(0.5) * sigma * scale))?;
    Ok(pp * m.value)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec<T> {
    pub r1: T,
    pub r2: T,
    pub z_max: T,
    pub n_nodes: usize,
}

impl<T: Real> ContourSpec<T> {
    /// `r1 = 0`, `r2 = sigma + 1`, `z_max = max(8, sqrt(64/t))` (Gaussian
    /// truncation below `e^{-32}`), node spacing `z_max / 2000`.
    pub fn default_for(t: T, sigma: T) -> Self {
        Self {
            r1: T::zero(),
            r2: sigma + T::one(),
            z_max: T::lit(8.0).max((T::lit(64.0) / t).sqrt()),
            n_nodes: 4001,
        }
    }

    pub fn check(&self, sigma: T) -> Result<()> {
        if !(self.r2 > self.r1 + sigma) {
            return Err(Error::Contract(format!(
                "contour r2 = {:?} must exceed r1 + sigma = {:?}",
                self.r2,
                self.r1 + sigma
            )));
        }
        if !(self.z_max > T::zero()) || self.n_nodes < 3 {
            return Err(Error::Contract("contour needs z_max > 0 and at least 3 nodes".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourValue<T> {
    pub value: T,
    /// Imaginary part of the truncated sum; zero up to rounding.
    pub imag: T,
    /// `exp(-t z_max^2 / 2)`, the relative size of the discarded tails.
    pub truncation: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContourIntegrand {
    Full,
    /// The pole ratio replaced by one; the integral then factorizes.
    PoleFree,
}

/// Double contour integral
/// `oint oint (z2 - z1)/(z2 - z1 - sigma) e^{(t/2)(z1^2 + z2^2) + x z1 + y z2}`
/// over `Re z1 = r1`, `Re z2 = r2`, by the trapezoid rule. The two spatial
/// arguments are taken in decreasing order.
pub fn she_moment2_contour<T: Real>(
    t: T,
    x: T,
    y: T,
    sigma: T,
    spec: &ContourSpec<T>,
) -> Result<ContourValue<T>> {
    she_moment2_contour_with(t, x, y, sigma, spec, ContourIntegrand::Full)
}

pub fn she_moment2_contour_with<T: Real>(
    t: T,
    x: T,
    y: T,
    sigma: T,
    spec: &ContourSpec<T>,
    integrand: ContourIntegrand,
) -> Result<ContourValue<T>> {
    if !(t > T::zero()) {
        return Err(Error::Domain("contour moment needs t > 0".into()));
    }
    spec.check(sigma)?;
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    let n = spec.n_nodes;
    let h = T::lit(2.0) * spec.z_max / T::from_usize(n - 1).expect("node count");
    let half_t = T::lit(0.5) * t;
    let line = |r: T, pos: T| -> (Vec<Complex<T>>, Vec<Complex<T>>) {
        let mut zs = Vec::with_capacity(n);
        let mut es = Vec::with_capacity(n);
        for j in 0..n {
            let s = -spec.z_max + h * T::from_usize(j).expect("index");
            let z = Complex::new(r, s);
            zs.push(z);
            es.push((z * z * half_t + z * pos).exp());
        }
        (zs, es)
    };
    let (z1, e1) = line(spec.r1, hi);
    let (z2, e2) = line(spec.r2, lo);
    let s1 = e1.iter().fold(Complex::new(T::zero(), T::zero()), |a, &b| a + b);
    let s2 = e2.iter().fold(Complex::new(T::zero(), T::zero()), |a, &b| a + b);
    let mut total = s1 * s2;
    if integrand == ContourIntegrand::Full {
        let sig = Complex::new(sigma, T::zero());
        let mut extra = Complex::new(T::zero(), T::zero());
        for i in 0..n {
            let mut row = Complex::new(T::zero(), T::zero());
            for j in 0..n {
                row = row + e2[j] / (z2[j] - z1[i] - sig);
            }
            extra = extra + e1[i] * row;
        }
        total = total + extra * sig;
    }
    let norm = h * h / (T::lit(4.0) * T::PI() * T::PI());
    Ok(ContourValue {
        value: total.re * norm,
        imag: total.im * norm,
        truncation: (-half_t * spec.z_max * spec.z_max).exp(),
    })
}

/// `int int phi(x) phi(y) E[Z_t(x) Z_t(y)] dx dy` over `[lo, hi]^2`.
pub fn pairing_moment2(t: f64, sigma: f64, phi: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    let opts = QuadOptions { abs_tol: 1e-13, rel_tol: 1e-9, max_intervals: 400 };
    let mut err = None;
    let outer = integrate(
        |x| {
            let fx = phi(x);
            if fx == 0.0 {
                return 0.0;
            }
            let inner = integrate(
                |y| {
                    let fy = phi(y);
                    if fy == 0.0 {
                        return 0.0;
                    }
                    match she_moment2_bridge(t, x, y, sigma) {
                        Ok(v) => fy * v,
                        Err(e) => {
                            err.get_or_insert(e);
                            0.0
                        }
                    }
                },
                lo,
                hi,
                opts,
            );
            match inner {
                Ok(r) => fx * r.value,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        },
        lo,
        hi,
        opts,
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(outer.value),
    }
}

/// Mean local time at zero of a rate-2 bridge from 0 to `z` on `[0, t]`,
/// integrating the tail law.
pub fn mean_pair_local_time(t: f64, z: f64) -> Result<f64> {
    let (spec, scale) = rescale_bridge_lt(t, 2.0, z);
    let r = integrate_decaying(
        |v| crate::local_time::bridge_lt_tail(&spec, v),
        0.0,
        1.0,
        1e-18,
        QuadOptions::default(),
    )?;
    Ok(scale * r.value)
}

/// First-order expansion `prod p (1 + (sigma/2) sum_{i<j} E[L^{ij}])`.
pub fn she_moment_k_first_order(t: f64, points: &[f64], sigma: f64) -> Result<f64> {
    let mut prod = 1.0;
    for &x in points {
        prod *= heat_kernel(t, x)?;
    }
    let mut s = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            s += mean_pair_local_time(t, points[i] - points[j])?;
        }
    }
    Ok(prod * (1.0 + 0.5 * sigma * s))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum LocalTimeMethod {
    /// `(1/2eps) int 1{|D| < eps} d<D>` on the simulated grid.
    Occupation { eps: f64 },
    /// Exact bridge local time of every grid step given its endpoints.
    BridgeStep,
}

/// Sum over pairs of the local times at zero of the differences of the
/// `k` paths stored row-major in `paths` (`n + 1` points each).
fn pair_local_time_sum(paths: &[Vec<f64>], dt: f64, method: LocalTimeMethod, rng: &mut CounterRng) -> f64 {
    let k = paths.len();
    let mut total = 0.0;
    let mut diff = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            match method {
                LocalTimeMethod::Occupation { eps } => {
                    diff.clear();
                    diff.extend(paths[i].iter().zip(&paths[j]).map(|(a, b)| a - b));
                    total += *occupation_local_time(&diff, dt, 2.0, eps).ell.last().unwrap();
                }
                LocalTimeMethod::BridgeStep => {
                    for s in 0..paths[i].len() - 1 {
                        let d0 = paths[i][s] - paths[j][s];
                        let d1 = paths[i][s + 1] - paths[j][s + 1];
                        total += bridge_step_lt(d0, d1, dt, 2.0, rng);
                    }
                }
            }
        }
    }
    total
}

fn brownian_path(rng: &mut CounterRng, n: usize, dt: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(0.0);
    let sd = dt.sqrt();
    let mut w = 0.0;
    for _ in 0..n {
        w += sd * rng.normal();
        out.push(w);
    }
}

fn steps_for(t: f64, dt: f64) -> Result<usize> {
    if !(t > 0.0 && dt > 0.0) {
        return Err(Error::Domain("need t > 0 and dt > 0".into()));
    }
    Ok(((t / dt).round() as usize).max(1))
}

/// `E[prod Z_t(x_i)]` by simulating independent bridges `0 -> x_i` and
/// weighting with `exp((sigma/2) sum_{i<j} L^{ij})`.
pub fn she_moment_k_mc(
    t: f64,
    points: &[f64],
    sigma: f64,
    dt: f64,
    method: LocalTimeMethod,
    reps: usize,
    stream: &RngStream,
) -> Result<MomentEstimate> {
    let mut prod = 1.0;
    for &x in points {
        prod *= heat_kernel(t, x)?;
    }
    if points.len() <= 1 || sigma == 0.0 {
        return Ok(MomentEstimate { seed: Some(stream.clone()), ..MomentEstimate::exact(prod) });
    }
    let n = steps_for(t, dt)?;
    let dt = t / n as f64;
    let samples = par::map_indexed(reps, |r| {
        let mut rng = stream.child(r as u64).rng();
        let mut paths = vec![Vec::with_capacity(n + 1); points.len()];
        for (p, &x) in paths.iter_mut().zip(points) {
            brownian_path(&mut rng, n, dt, p);
            let end = p[n];
            for (s, v) in p.iter_mut().enumerate() {
                *v -= (s as f64 / n as f64) * (end - x);
            }
        }
        (0.5 * sigma * pair_local_time_sum(&paths, dt, method, &mut rng)).exp()
    });
    Ok(MomentEstimate::from_samples(&samples, Some(stream.clone())).scaled(prod))
}

/// `E[prod_j phi(B^j_t) exp((sigma/2) sum_{i<j} L^{ij})]` over `k`
/// independent Brownian motions from the origin.
pub fn she_pairing_mc(
    t: f64,
    phi: &(dyn Fn(f64) -> f64 + Sync),
    k: usize,
    sigma: f64,
    dt: f64,
    method: LocalTimeMethod,
    reps: usize,
    stream: &RngStream,
) -> Result<MomentEstimate> {
    let n = steps_for(t, dt)?;
    let dt = t / n as f64;
    let samples = par::map_indexed(reps, |r| {
        let mut rng = stream.child(r as u64).rng();
        let mut paths = vec![Vec::with_capacity(n + 1); k];
        for p in paths.iter_mut() {
            brownian_path(&mut rng, n, dt, p);
        }
        let w: f64 = paths.iter().map(|p| phi(p[n])).product();
        if w == 0.0 {
            return 0.0;
        }
        w * (0.5 * sigma * pair_local_time_sum(&paths, dt, method, &mut rng)).exp()
    });
    Ok(MomentEstimate::from_samples(&samples, Some(stream.clone())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_kernel_values() {
        assert!((heat_kernel(1.0f64, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-16);
        assert_eq!(heat_kernel(2.0, 0.7).unwrap(), heat_kernel(2.0, -0.7).unwrap());
        assert!(heat_kernel(0.0, 1.0).is_err());
        let r = crate::quad::integrate_line(|x: f64| heat_kernel(0.3, x).unwrap(), 0.0, 0.5, 1e-20, Default::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bridge_moment_limits() {
        let pp: f64 = heat_kernel(1.0, 0.3).unwrap() * heat_kernel(1.0, -0.2).unwrap();
        let v = she_moment2_bridge(1.0, 0.3, -0.2, 1e-12).unwrap();
        assert!((v / pp - 1.0).abs() < 1e-11);
        assert_eq!(she_moment2_bridge(1.0, 0.3, -0.2, 1.0).unwrap(), she_moment2_bridge(1.0, -0.2, 0.3, 1.0).unwrap());
    }

    #[test]
    fn contour_rejects_pole_crossing() {
        let mut c = ContourSpec::default_for(1.0, 1.0);
        c.r2 = 0.9;
        assert!(matches!(she_moment2_contour(1.0, 0.0, 0.0, 1.0, &c), Err(Error::Contract(_))));
    }

    #[test]
    fn pole_free_contour_factorizes() {
        let c = ContourSpec { n_nodes: 1201, ..ContourSpec::default_for(1.0, 1.0) };
        let v = she_moment2_contour_with(1.0, 0.4, -0.3, 1.0, &c, ContourIntegrand::PoleFree).unwrap();
        let pp: f64 = heat_kernel(1.0, 0.4).unwrap() * heat_kernel(1.0, -0.3).unwrap();
        assert!((v.value / pp - 1.0).abs() < 1e-8);
    }

    #[test]
    fn k1_is_exact() {
        let s = crate::derive_stream(0, &[]);
        let m = she_moment_k_mc(1.5, &[0.2], 1.0, 1e-3, LocalTimeMethod::BridgeStep, 10, &s).unwrap();
        assert_eq!(m.mean, heat_kernel(1.5, 0.2).unwrap());
        assert_eq!(m.stderr, 0.0);
    }
}
