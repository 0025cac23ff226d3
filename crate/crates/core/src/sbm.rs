//! Two-point sticky Brownian motion through a local-time clock change.
//!
//! Take `(|B|, L) = (M - W, M)` for a Brownian motion `W` with running
//! maximum `M`. With `T(u) = u + sqrt(2) L(u) / lambda`, the difference
//! `D = X - Y` is `sqrt(2) B(T^{-1}(t))` with fair signs per excursion, and
//! the coincidence time is `V(t) = t - T^{-1}(t)`. The factor `sqrt(2)`
//! makes `|D| - lambda V` a martingale for the rate-2 difference process.

use serde::{Deserialize, Serialize};

use crate::measure::CharacteristicMeasure;
use crate::rng::{CounterRng, RngStream};
use crate::stats::{MomentEstimate, z_score};
use crate::{par, Error, Result};

/// Converts a local time of the standard reflected motion into the
/// coincidence-time clock of a difference process run at rate 2.
pub fn stuck_time_per_local_time(lambda: f64) -> f64 {
    std::f64::consts::SQRT_2 / lambda
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectedPathWithLocalTime {
    pub dt: f64,
    pub b_abs: Vec<f64>,
    pub ell: Vec<f64>,
    /// Sign of the excursion in force at each grid point.
    pub excursion_signs: Vec<i8>,
}

fn steps(t_max: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && t_max > 0.0) {
        return Err(Error::Domain(format!("need t_max > 0 and dt > 0, got {t_max}, {dt}")));
    }
    Ok(((t_max / dt).round() as usize).max(1))
}

fn reflected(rng: &mut CounterRng, n: usize, dt: f64) -> ReflectedPathWithLocalTime {
    let sd = dt.sqrt();
    let mut b_abs = Vec::with_capacity(n + 1);
    let mut ell = Vec::with_capacity(n + 1);
    let mut signs = Vec::with_capacity(n + 1);
    let (mut w, mut m) = (0.0f64, 0.0f64);
    let mut sign: i8 = if rng.coin() { 1 } else { -1 };
    b_abs.push(0.0);
    ell.push(0.0);
    signs.push(sign);
    for _ in 0..n {
        w += sd * rng.normal();
        if w > m {
            m = w;
            sign = if rng.coin() { 1 } else { -1 };
        }
        b_abs.push(m - w);
        ell.push(m);
        signs.push(sign);
    }
    ReflectedPathWithLocalTime { dt, b_abs, ell, excursion_signs: signs }
}

/// `(M - W, M)` on the grid `0, dt, ..., t_max`, with a fresh sign every
/// time the local time increases.
pub fn sample_reflected_with_local_time(t_max: f64, dt: f64, stream: &RngStream) -> Result<ReflectedPathWithLocalTime> {
    let n = steps(t_max, dt)?;
    Ok(reflected(&mut stream.child(0).rng(), n, t_max / n as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPointSbmPath {
    pub dt: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    /// `(1/2) int 1{X = Y} dS`, whose bracket is `V`.
    pub g: Vec<f64>,
    pub meta: CharacteristicMeasure,
}

impl TwoPointSbmPath {
    pub fn last(&self) -> (f64, f64, f64, f64) {
        let i = self.x.len() - 1;
        (self.x[i], self.y[i], self.v[i], self.g[i])
    }
}

/// Clock position `tau` and `(|B|, L, sign)` there.
#[derive(Clone, Copy, Debug)]
struct ClockSample {
    tau: f64,
    b: f64,
    ell: f64,
    sign: i8,
}

/// Source of reflected-path grid steps.
trait StepSource {
    /// Next `(b_abs, ell, sign)` grid value, or `None` when exhausted.
    fn next(&mut self) -> Option<(f64, f64, i8)>;
}

struct Live {
    rng: CounterRng,
    sd: f64,
    w: f64,
    m: f64,
    sign: i8,
}

impl StepSource for Live {
    #[inline]
    fn next(&mut self) -> Option<(f64, f64, i8)> {
        self.w += self.sd * self.rng.normal();
        if self.w > self.m {
            self.m = self.w;
            self.sign = if self.rng.coin() { 1 } else { -1 };
        }
        Some((self.m - self.w, self.m, self.sign))
    }
}

#[cfg(test)]
struct Stored<'a> {
    r: &'a ReflectedPathWithLocalTime,
    i: usize,
}

#[cfg(test)]
impl StepSource for Stored<'_> {
    fn next(&mut self) -> Option<(f64, f64, i8)> {
        self.i += 1;
        let i = self.i;
        (i < self.r.b_abs.len()).then(|| (self.r.b_abs[i], self.r.ell[i], self.r.excursion_signs[i]))
    }
}

/// Inverts `T(u) = u + c L(u)` on increasing real times.
///
/// Within a grid step where `L` increases, the path is taken to fall
/// linearly to zero first and then to rise with `M`, so `L` grows only
/// while `|B| = 0`.
struct ClockInverter<S> {
    src: S,
    c: f64,
    dt: f64,
    cur: (f64, f64, i8),
    nxt: (f64, f64, i8),
    u0: f64,
    t0: f64,
    exhausted: bool,
}

impl<S: StepSource> ClockInverter<S> {
    fn new(mut src: S, first: (f64, f64, i8), c: f64, dt: f64) -> Self {
        let nxt = src.next();
        Self { src, c, dt, cur: first, exhausted: nxt.is_none(), nxt: nxt.unwrap_or(first), u0: 0.0, t0: 0.0 }
    }

    fn at(&mut self, t: f64) -> ClockSample {
        let dt = self.dt;
        loop {
            let (b0, l0, s0) = self.cur;
            let (b1, l1, s1) = self.nxt;
            let t_end = self.t0 + dt + self.c * (l1 - l0);
            if t <= t_end || self.exhausted {
                let (u0, t0) = (self.u0, self.t0);
                return if l1 > l0 {
                    let fall = dt * b0 / (b0 + (l1 - l0));
                    if fall > 0.0 && t - t0 <= fall {
                        let a = (t - t0).max(0.0);
                        ClockSample { tau: u0 + a, b: b0 * (1.0 - a / fall), ell: l0, sign: s0 }
                    } else {
                        let rise = dt - fall;
                        let slope = 1.0 + self.c * (l1 - l0) / rise;
                        let a = ((t - t0 - fall) / slope).min(rise);
                        ClockSample { tau: u0 + fall + a, b: 0.0, ell: l0 + (l1 - l0) * a / rise, sign: s1 }
                    }
                } else {
                    let a = (t - t0).clamp(0.0, dt);
                    ClockSample { tau: u0 + a, b: b0 + (b1 - b0) * a / dt, ell: l0, sign: s0 }
                };
            }
            self.t0 = t_end;
            self.u0 += dt;
            self.cur = self.nxt;
            match self.src.next() {
                Some(v) => self.nxt = v,
                None => self.exhausted = true,
            }
        }
    }

    /// Drains the source and returns the last local time.
    fn final_ell(mut self, n: usize) -> f64 {
        let mut steps = (self.u0 / self.dt).round() as usize + 1;
        let mut last = self.nxt.1;
        while steps < n {
            match self.src.next() {
                Some(v) => last = v.1,
                None => break,
            }
            steps += 1;
        }
        last
    }
}

fn live_source(stream: &RngStream, dt: f64) -> (Live, (f64, f64, i8)) {
    let mut rng = stream.child(0).rng();
    let sign = if rng.coin() { 1 } else { -1 };
    (Live { rng, sd: dt.sqrt(), w: 0.0, m: 0.0, sign }, (0.0, 0.0, sign))
}

/// Walks the real-time grid, calling `emit(i, x, y, v, g)` at every point.
fn drive_pair<S: StepSource>(
    inv: &mut ClockInverter<S>,
    n: usize,
    dt: f64,
    rng: &mut CounterRng,
    mut emit: impl FnMut(usize, f64, f64, f64, f64),
) {
    let (mut s, mut g, mut v_prev) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..=n {
        let cs = inv.at(i as f64 * dt);
        let v = (i as f64 * dt - cs.tau).max(v_prev);
        debug_assert!((v - inv.c * cs.ell).abs() <= 2.0 * dt + 1e-9);
        if i > 0 {
            let dv = v - v_prev;
            let (z1, z2) = rng.normal_pair();
            let stuck = (4.0 * dv).sqrt() * z2;
            s += (2.0 * (dt - dv).max(0.0)).sqrt() * z1 + stuck;
            g += 0.5 * stuck;
        }
        v_prev = v;
        let d = std::f64::consts::SQRT_2 * cs.sign as f64 * cs.b;
        emit(i, 0.5 * (s + d), 0.5 * (s - d), v, g);
    }
}

/// Sticky pair on `[0, t_max]`. The driving reflected motion uses
/// `stream.child(0)` (the same path `sample_reflected_with_local_time`
/// returns for that stream) and the sum process uses `stream.child(1)`.
pub fn sample_two_point_sbm(
    measure: &CharacteristicMeasure,
    t_max: f64,
    dt: f64,
    stream: &RngStream,
) -> Result<TwoPointSbmPath> {
    let n = steps(t_max, dt)?;
    let dt = t_max / n as f64;
    let (src, first) = live_source(stream, dt);
    let mut inv = ClockInverter::new(src, first, stuck_time_per_local_time(measure.lambda), dt);
    let mut p = TwoPointSbmPath {
        dt,
        x: Vec::with_capacity(n + 1),
        y: Vec::with_capacity(n + 1),
        v: Vec::with_capacity(n + 1),
        g: Vec::with_capacity(n + 1),
        meta: *measure,
    };
    drive_pair(&mut inv, n, dt, &mut stream.child(1).rng(), |_, x, y, v, g| {
        p.x.push(x);
        p.y.push(y);
        p.v.push(v);
        p.g.push(g);
    });
    Ok(p)
}

/// Terminal values of one sticky pair together with the local time of the
/// driving reflected motion at the end of the real-time window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairEnd {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub g: f64,
    /// `L(t)` of the driving reflected motion.
    pub ell_t: f64,
    /// `V` at the requested intermediate time.
    pub v_mid: f64,
}

fn pair_end(measure: &CharacteristicMeasure, n: usize, dt: f64, i_mid: usize, stream: &RngStream) -> PairEnd {
    let (src, first) = live_source(stream, dt);
    let mut inv = ClockInverter::new(src, first, stuck_time_per_local_time(measure.lambda), dt);
    let mut e = PairEnd { x: 0.0, y: 0.0, v: 0.0, g: 0.0, ell_t: 0.0, v_mid: 0.0 };
    drive_pair(&mut inv, n, dt, &mut stream.child(1).rng(), |i, x, y, v, g| {
        if i == i_mid {
            e.v_mid = v;
        }
        if i == n {
            e = PairEnd { x, y, v, g, ..e };
        }
    });
    e.ell_t = inv.final_ell(n);
    e
}

/// Terminal values for `reps` independent pairs, in replica order.
pub fn sample_pair_ends(
    measure: &CharacteristicMeasure,
    t: f64,
    dt: f64,
    reps: usize,
    stream: &RngStream,
) -> Result<Vec<PairEnd>> {
    let n = steps(t, dt)?;
    let dt = t / n as f64;
    Ok(par::map_indexed(reps, |r| pair_end(measure, n, dt, 0, &stream.child(r as u64))))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GirsanovCheck {
    pub lhs: MomentEstimate,
    pub rhs: MomentEstimate,
    /// Paired per-path difference `lhs - rhs`.
    pub diff: MomentEstimate,
}

impl GirsanovCheck {
    pub fn z(&self) -> f64 {
        z_score(self.diff.mean, self.diff.stderr)
    }
}

/// Both sides of the two-point tilt identity
/// `E[e^{l(X+Y) - l^2 t} f(X - lt, Y - lt)] = E[e^{lG - l^2 V/2} f(X, Y) e^{l^2 V}]`
/// on one shared path ensemble.
pub fn girsanov_two_point_check(
    measure: &CharacteristicMeasure,
    lam_drift: f64,
    t: f64,
    f: &(dyn Fn(f64, f64) -> f64 + Sync),
    dt: f64,
    reps: usize,
    stream: &RngStream,
) -> Result<GirsanovCheck> {
    let ends = sample_pair_ends(measure, t, dt, reps, stream)?;
    Ok(girsanov_from_ends(&ends, lam_drift, t, f, stream))
}

pub fn girsanov_from_ends(
    ends: &[PairEnd],
    l: f64,
    t: f64,
    f: &(dyn Fn(f64, f64) -> f64 + Sync),
    stream: &RngStream,
) -> GirsanovCheck {
    let mut lhs = Vec::with_capacity(ends.len());
    let mut rhs = Vec::with_capacity(ends.len());
    for e in ends {
        lhs.push((l * (e.x + e.y) - l * l * t).exp() * f(e.x - l * t, e.y - l * t));
        rhs.push((l * e.g - 0.5 * l * l * e.v + l * l * e.v).exp() * f(e.x, e.y));
    }
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    GirsanovCheck {
        lhs: MomentEstimate::from_samples(&lhs, Some(stream.clone())),
        rhs: MomentEstimate::from_samples(&rhs, Some(stream.clone())),
        diff: MomentEstimate::from_samples(&diff, Some(stream.clone())),
    }
}

/// `E[|X|^p]` for a standard normal.
pub fn abs_normal_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * libm::tgamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

/// Monte Carlo `E[(lambda (V_t - V_s))^p]` and the dominating value
/// `E[(sqrt 2 M_1)^p] |t - s|^{p/2}`.
pub fn intersection_moment_bounds(
    measure: &CharacteristicMeasure,
    p: f64,
    s: f64,
    t: f64,
    dt: f64,
    reps: usize,
    stream: &RngStream,
) -> Result<(MomentEstimate, f64)> {
    if !(0.0 <= s && s <= t) || p < 1.0 {
        return Err(Error::Domain(format!("need 0 <= s <= t and p >= 1, got s={s}, t={t}, p={p}")));
    }
    let bound = 2f64.powf(p / 2.0) * abs_normal_moment(p) * (t - s).powf(p / 2.0);
    if s == t {
        return Ok((MomentEstimate { seed: Some(stream.clone()), ..MomentEstimate::exact(0.0) }, bound));
    }
    let n = steps(t, dt)?;
    let dt = t / n as f64;
    let i_s = (s / dt).round() as usize;
    let samples = par::map_indexed(reps, |r| {
        let e = pair_end(measure, n, dt, i_s, &stream.child(r as u64));
        (measure.lambda * (e.v - e.v_mid)).powf(p)
    });
    Ok((MomentEstimate::from_samples(&samples, Some(stream.clone())), bound))
}
