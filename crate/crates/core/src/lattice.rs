//! Random walk in a space-time i.i.d. random environment and its quenched
//! kernel `K_{0,n}(0, .)`.

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::rng::{unit_f64, CounterRng, RngStream};
use crate::{Error, Real, Result};

/// Largest window (in stored sites) `evolve` will allocate by default.
pub const DEFAULT_WIDTH_CAP: usize = 1 << 27;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvKind {
    TwoPoint { delta: f64 },
    BetaSymmetric { beta: f64 },
    ConstantHalf,
}

impl EnvKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvKind::TwoPoint { delta } if !(delta > 0.0 && delta <= 0.5) => {
                Err(Error::Domain(format!("two_point delta must lie in (0, 1/2], got {delta}")))
            }
            EnvKind::BetaSymmetric { beta } if !(beta > 0.0 && beta.is_finite()) => {
                Err(Error::Domain(format!("beta_symmetric parameter must be positive, got {beta}")))
            }
            _ => Ok(()),
        }
    }

    /// `E[omega (1 - omega)]`.
    pub fn split_mass(&self) -> f64 {
        match *self {
            EnvKind::TwoPoint { delta } => delta * (1.0 - delta),
            EnvKind::BetaSymmetric { beta } => beta / (2.0 * (2.0 * beta + 1.0)),
            EnvKind::ConstantHalf => 0.25,
        }
    }

    /// `Var(omega) = 1/4 - E[omega (1 - omega)]`.
    pub fn variance(&self) -> f64 {
        match *self {
            EnvKind::TwoPoint { delta } => (0.5 - delta) * (0.5 - delta),
            EnvKind::BetaSymmetric { beta } => 1.0 / (4.0 * (2.0 * beta + 1.0)),
            EnvKind::ConstantHalf => 0.0,
        }
    }

    /// Environment whose moderate-deviation limit has total mass `nu0`.
    pub fn two_point_for(nu0: f64) -> EnvKind {
        let c = nu0 / (1.0 + 4.0 * nu0);
        EnvKind::TwoPoint { delta: 0.5 * (1.0 - (1.0 - 4.0 * c).sqrt()) }
    }

    pub fn beta_for(nu0: f64) -> EnvKind {
        EnvKind::BetaSymmetric { beta: 2.0 * nu0 }
    }

    /// Limiting total mass `E[w(1-w)] / (4 Var w)`; infinite in the free case.
    pub fn nu_limit(&self) -> f64 {
        let v = self.variance();
        if v == 0.0 {
            f64::INFINITY
        } else {
            self.split_mass() / (4.0 * v)
        }
    }

    /// Total mass seen by the second moment of the tilted field at horizon `N`.
    pub fn nu_eff(&self, big_n: u64) -> f64 {
        let v = self.variance();
        if v == 0.0 {
            return f64::INFINITY;
        }
        let nf = big_n as f64;
        let th2 = nf.powf(-0.5);
        if th2 >= 1.0 {
            return 0.0;
        }
        let a = (4.0 * v * th2).ln_1p();
        let cosh2 = 1.0 / (1.0 - th2);
        let z = cosh2 * (1.0 + 4.0 * v * th2);
        self.split_mass() / (a * nf.sqrt() * z)
    }

    /// Diffusive-scale stickiness `sqrt(N) E[w(1-w)]` of a pair of walks.
    pub fn macro_stickiness(&self, big_n: u64) -> f64 {
        (big_n as f64).sqrt() * self.split_mass()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvModel {
    pub kind: EnvKind,
    pub horizon: u64,
}

impl EnvModel {
    pub fn new(kind: EnvKind, horizon: u64) -> Result<Self> {
        kind.validate()?;
        if horizon == 0 {
            return Err(Error::Domain("horizon N must be positive".into()));
        }
        Ok(Self { kind, horizon })
    }

    pub fn nu_eff(&self) -> f64 {
        self.kind.nu_eff(self.horizon)
    }
}

/// Probability of a right step at space-time site `(n, x)`.
#[inline]
pub fn env_prob(model: &EnvModel, stream: &RngStream, n: u64, x: i64) -> f64 {
    match model.kind {
        EnvKind::ConstantHalf => 0.5,
        EnvKind::TwoPoint { delta } => {
            if two_point_bit(stream, n, x) {
                1.0 - delta
            } else {
                delta
            }
        }
        EnvKind::BetaSymmetric { beta } => {
            let mut r = CounterRng::new(stream.at(n, x as u64));
            Beta::new(beta, beta).expect("positive beta").sample(&mut r)
        }
    }
}

/// Coin of the two-point environment at `(n, x)`: bit `x mod 64` of the
/// keyed word of the block `floor(x / 64)`.
#[inline]
pub fn two_point_bit(stream: &RngStream, n: u64, x: i64) -> bool {
    (stream.at(n, (x >> 6) as u64) >> (x & 63)) & 1 == 1
}

/// Probability vector over the sites `offset, offset + 2, ...`; sites of the
/// other parity carry no mass and are not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct QuenchedKernel<T> {
    pub n: u64,
    pub offset: i64,
    pub probs: Vec<T>,
}

impl<T: Real> QuenchedKernel<T> {
    pub fn delta0() -> Self {
        Self { n: 0, offset: 0, probs: vec![T::one()] }
    }

    pub fn parity(&self) -> u64 {
        self.n % 2
    }

    #[inline]
    pub fn site(&self, i: usize) -> i64 {
        self.offset + 2 * i as i64
    }

    pub fn last_site(&self) -> i64 {
        self.site(self.probs.len() - 1)
    }

    /// Number of lattice sites spanned by the stored window.
    pub fn width(&self) -> u64 {
        2 * (self.probs.len() as u64 - 1) + 1
    }

    pub fn sites(&self) -> impl Iterator<Item = (i64, T)> + '_ {
        self.probs.iter().enumerate().map(move |(i, &p)| (self.site(i), p))
    }

    pub fn get(&self, y: i64) -> T {
        let d = y - self.offset;
        if d < 0 || d % 2 != 0 {
            return T::zero();
        }
        self.probs.get((d / 2) as usize).copied().unwrap_or(T::zero())
    }

    pub fn mass(&self) -> T {
        self.probs.iter().fold(T::zero(), |s, &p| s + p)
    }

    pub fn sum_sq(&self) -> T {
        self.probs.iter().fold(T::zero(), |s, &p| s + p * p)
    }

    /// Index of the first stored site `>= u`.
    fn first_at_or_above(&self, u: i64) -> usize {
        if u <= self.offset {
            0
        } else {
            (((u - self.offset) + 1) / 2) as usize
        }
    }

    /// `K[u, inf)`, summed from the far end.
    pub fn tail(&self, u: i64) -> T {
        let i0 = self.first_at_or_above(u).min(self.probs.len());
        self.probs[i0..].iter().rev().fold(T::zero(), |s, &p| s + p)
    }

    /// Tail at a real location with each atom spread uniformly over
    /// `[y - 1, y + 1)`: `sum_y K(y) clamp((y + 1 - u) / 2, 0, 1)`.
    pub fn cell_tail(&self, u: f64) -> T {
        let lo = (u - 1.0).floor() as i64;
        let i0 = self.first_at_or_above(lo).min(self.probs.len());
        let mut s = T::zero();
        for i in (i0..self.probs.len()).rev() {
            let y = self.site(i) as f64;
            let w = ((y + 1.0 - u) / 2.0).clamp(0.0, 1.0);
            s = s + self.probs[i] * T::lit(w);
        }
        s
    }

    /// Checks mass, parity and width against the step count.
    pub fn validate(&self, mass_tol: f64) -> Result<()> {
        let m = self.mass().to_f64().unwrap_or(f64::NAN);
        if !((m - 1.0).abs() <= mass_tol) {
            return Err(Error::Contract(format!("kernel mass {m} after {} steps", self.n)));
        }
        if (self.offset - self.n as i64).rem_euclid(2) != 0 {
            return Err(Error::Contract(format!("offset {} has wrong parity at step {}", self.offset, self.n)));
        }
        if self.width() > 2 * self.n + 1 {
            return Err(Error::Contract(format!("width {} exceeds 2n+1 at step {}", self.width(), self.n)));
        }
        if self.probs.iter().any(|p| !(*p >= T::zero())) {
            return Err(Error::Contract("negative or NaN kernel entry".into()));
        }
        Ok(())
    }
}

/// One Chapman-Kolmogorov step through the environment at time `K.n`.
pub fn step_kernel<T: Real>(k: &QuenchedKernel<T>, model: &EnvModel, stream: &RngStream) -> QuenchedKernel<T> {
    let mut out = QuenchedKernel { n: 0, offset: 0, probs: Vec::with_capacity(k.probs.len() + 1) };
    step_into(k, model, stream, &mut out);
    out
}

fn step_into<T: Real>(k: &QuenchedKernel<T>, model: &EnvModel, stream: &RngStream, out: &mut QuenchedKernel<T>) {
    let len = k.probs.len();
    out.probs.clear();
    out.probs.resize(len + 1, T::zero());
    let n = k.n;
    match model.kind {
        EnvKind::ConstantHalf => {
            let h = T::lit(0.5);
            for i in 0..len {
                let p = k.probs[i] * h;
                out.probs[i] = out.probs[i] + p;
                out.probs[i + 1] = p;
            }
        }
        EnvKind::TwoPoint { delta } => {
            let lohi = [T::lit(delta), T::lit(1.0 - delta)];
            let mut blk = i64::MIN;
            let mut word = 0u64;
            for i in 0..len {
                let x = k.offset + 2 * i as i64;
                if x >> 6 != blk {
                    blk = x >> 6;
                    word = stream.at(n, blk as u64);
                }
                let w = lohi[((word >> (x & 63)) & 1) as usize];
                let p = k.probs[i];
                let r = p * w;
                out.probs[i] = out.probs[i] + (p - r);
                out.probs[i + 1] = r;
            }
        }
        EnvKind::BetaSymmetric { .. } => {
            for i in 0..len {
                let x = k.offset + 2 * i as i64;
                let w = T::lit(env_prob(model, stream, n, x));
                let p = k.probs[i];
                let r = p * w;
                out.probs[i] = out.probs[i] + (p - r);
                out.probs[i + 1] = r;
            }
        }
    }
    out.n = n + 1;
    out.offset = k.offset - 1;
    trim(out);
}

/// Drops edge entries below the smallest normal number so the window stays
/// free of subnormals.
fn trim<T: Real>(k: &mut QuenchedKernel<T>) {
    let floor = T::min_positive_value();
    let mut end = k.probs.len();
    while end > 1 && k.probs[end - 1] < floor {
        end -= 1;
    }
    k.probs.truncate(end);
    let mut start = 0;
    while start + 1 < k.probs.len() && k.probs[start] < floor {
        start += 1;
    }
    if start > 0 {
        k.probs.drain(..start);
        k.offset += 2 * start as i64;
    }
}

/// Kernel after `n_steps` steps from the origin.
pub fn evolve<T: Real>(model: &EnvModel, stream: &RngStream, n_steps: u64) -> Result<QuenchedKernel<T>> {
    let mut last = None;
    evolve_visit(model, stream, n_steps, DEFAULT_WIDTH_CAP, |k: &QuenchedKernel<T>| {
        if k.n == n_steps {
            last = Some(k.clone());
        }
    })?;
    Ok(last.expect("final kernel visited"))
}

/// Evolves from the origin, calling `visit` on `K_0, ..., K_{n_steps}`.
pub fn evolve_visit<T: Real>(
    model: &EnvModel,
    stream: &RngStream,
    n_steps: u64,
    width_cap: usize,
    mut visit: impl FnMut(&QuenchedKernel<T>),
) -> Result<()> {
    if n_steps as u128 + 1 > width_cap as u128 {
        return Err(Error::Resource(format!(
            "{n_steps} steps need a window of up to {} sites, cap is {width_cap}",
            n_steps + 1
        )));
    }
    let mut cur = QuenchedKernel::<T>::delta0();
    let mut next = QuenchedKernel { n: 0, offset: 0, probs: Vec::with_capacity(n_steps as usize + 1) };
    cur.probs.reserve(n_steps as usize + 1);
    visit(&cur);
    for _ in 0..n_steps {
        step_into(&cur, model, stream, &mut next);
        std::mem::swap(&mut cur, &mut next);
        visit(&cur);
    }
    Ok(())
}

/// Moves a walker at `(n, x)` one step using uniform `u`.
#[inline]
pub fn walk_step(model: &EnvModel, stream: &RngStream, n: u64, x: i64, u: f64) -> i64 {
    if u < env_prob(model, stream, n, x) {
        x + 1
    } else {
        x - 1
    }
}

/// Exact `Binomial(n, 1/2)` law of the simple random walk at step `n`.
pub fn binomial_kernel(n: u64) -> QuenchedKernel<f64> {
    let probs = (0..=n).map(|j| log_binom_pmf(n, j, 0.5).exp()).collect();
    QuenchedKernel { n, offset: -(n as i64), probs }
}

/// `log P(Binomial(n, p) = j)` by Loader's saddle-point expansion, accurate
/// to a few ulps for all `n`.
pub fn log_binom_pmf(n: u64, j: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if j == 0 {
        return n as f64 * q.ln();
    }
    if j == n {
        return n as f64 * p.ln();
    }
    let (nf, jf) = (n as f64, j as f64);
    let kf = nf - jf;
    stirlerr(nf) - stirlerr(jf) - stirlerr(kf) - bd0(jf, nf * p) - bd0(kf, nf * q)
        + 0.5 * (nf / (2.0 * std::f64::consts::PI * jf * kf)).ln()
}

/// `ln(n!) - ln(sqrt(2 pi n) (n/e)^n)`.
fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return libm::lgamma(n + 1.0) - (n + 0.5) * n.ln() + n - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// `x ln(x / np) + np - x` without cancellation.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// Uniform draw for the walker bookkeeping of `calibrate`.
#[inline]
pub fn walker_uniform(stream: &RngStream, n: u64, who: u64) -> f64 {
    unit_f64(stream.at(n, who))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn model(kind: EnvKind) -> EnvModel {
        EnvModel::new(kind, 1024).unwrap()
    }

    #[test]
    fn step_uses_env_prob() {
        let m = model(EnvKind::TwoPoint { delta: 0.2 });
        let s = derive_stream(8, &[]);
        let k: QuenchedKernel<f64> = evolve(&m, &s, 200).unwrap();
        let mut prev = QuenchedKernel::<f64>::delta0();
        for _ in 0..200 {
            let mut next = QuenchedKernel { n: prev.n + 1, offset: prev.offset - 1, probs: vec![0.0; prev.probs.len() + 1] };
            for (i, (x, p)) in prev.sites().enumerate() {
                let w = env_prob(&m, &s, prev.n, x);
                next.probs[i + 1] += p * w;
                next.probs[i] += p - p * w;
            }
            prev = next;
        }
        for (y, p) in k.sites() {
            assert!((prev.get(y) - p).abs() <= 1e-15 * p.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn single_site_step() {
        let m = model(EnvKind::TwoPoint { delta: 0.3 });
        let s = (0..).map(|i| derive_stream(i, &[])).find(|s| env_prob(&m, s, 0, 0) == 0.7).unwrap();
        let k = step_kernel(&QuenchedKernel::<f64>::delta0(), &m, &s);
        assert_eq!(k.get(1), 0.7);
        assert!((k.get(-1) - 0.3).abs() < 1e-16);
        assert_eq!(k.get(0), 0.0);
    }

    #[test]
    fn constant_half_two_steps() {
        let m = model(EnvKind::ConstantHalf);
        let s = derive_stream(0, &[]);
        let k: Kernel = evolve(&m, &s, 2).unwrap();
        assert_eq!(k.offset, -2);
        assert_eq!(k.probs, vec![0.25, 0.5, 0.25]);
    }

    type Kernel = QuenchedKernel<f64>;

    #[test]
    fn zero_steps_is_delta() {
        let k: Kernel = evolve(&model(EnvKind::two_point_for(0.5)), &derive_stream(1, &[]), 0).unwrap();
        assert_eq!(k, QuenchedKernel::delta0());
    }

    #[test]
    fn constant_half_is_binomial() {
        let k: Kernel = evolve(&model(EnvKind::ConstantHalf), &derive_stream(0, &[]), 300).unwrap();
        let b = binomial_kernel(300);
        for (y, p) in b.sites() {
            let q = k.get(y);
            assert!((q - p).abs() <= 1e-11 * p, "site {y}: {q} vs {p}");
        }
    }

    #[test]
    fn mass_and_parity_over_ten_thousand_steps() {
        let m = model(EnvKind::BetaSymmetric { beta: 0.7 });
        let s = derive_stream(5, &[]);
        evolve_visit(&m, &s, 10_000, DEFAULT_WIDTH_CAP, |k: &Kernel| k.validate(1e-12).unwrap()).unwrap();
    }

    #[test]
    fn binomial_pmf_matches_exact_small_cases() {
        let mut c = 1.0f64;
        for j in 0..=40u64 {
            if j > 0 {
                c = c * (41 - j) as f64 / j as f64;
            }
            let exact = c * 0.3f64.powi(j as i32) * 0.7f64.powi(40 - j as i32);
            assert!((log_binom_pmf(40, j, 0.3).exp() / exact - 1.0).abs() < 1e-13, "j={j}");
        }
        let total: f64 = (0..=4096).map(|j| log_binom_pmf(4096, j, 0.5).exp()).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tails() {
        let k = QuenchedKernel { n: 1, offset: -1, probs: vec![0.3, 0.7] };
        assert_eq!(k.tail(0), 0.7);
        assert_eq!(k.tail(1), 0.7);
        assert_eq!(k.tail(-5), 1.0);
        assert_eq!(k.tail(2), 0.0);
        assert_eq!(k.cell_tail(1.0), 0.35);
        assert_eq!(k.cell_tail(-2.0), 1.0);
        assert_eq!(k.cell_tail(2.0), 0.0);
    }

    #[test]
    fn width_cap_is_enforced() {
        let m = model(EnvKind::ConstantHalf);
        let e = evolve_visit(&m, &derive_stream(0, &[]), 100, 50, |_: &Kernel| {}).unwrap_err();
        assert!(matches!(e, Error::Resource(_)));
    }

    #[test]
    fn calibration_maps() {
        for nu in [0.1, 0.5, 2.0] {
            assert!((EnvKind::two_point_for(nu).nu_limit() - nu).abs() < 1e-12);
            assert!((EnvKind::beta_for(nu).nu_limit() - nu).abs() < 1e-12);
        }
        let k = EnvKind::two_point_for(0.5);
        assert!((k.nu_eff(1 << 24) - 0.5).abs() < 2e-3);
        assert!(k.nu_eff(16) < k.nu_eff(256) && k.nu_eff(256) < k.nu_eff(4096));
        assert_eq!(k.nu_eff(1), 0.0);
        assert!(EnvKind::ConstantHalf.nu_eff(64).is_infinite());
        assert_eq!(EnvKind::ConstantHalf.macro_stickiness(64), 2.0);
    }

    proptest::proptest! {
        #[test]
        fn kernel_invariants(seed in 0u64..1000, steps in 0u64..200, delta in 0.01f64..0.5) {
            let m = model(EnvKind::TwoPoint { delta });
            let s = derive_stream(seed, &[]);
            evolve_visit(&m, &s, steps, DEFAULT_WIDTH_CAP, |k: &Kernel| k.validate(1e-12).unwrap()).unwrap();
        }

        #[test]
        fn tail_monotone(seed in 0u64..1000, u in -60i64..60) {
            let k: Kernel = evolve(&model(EnvKind::TwoPoint { delta: 0.2 }), &derive_stream(seed, &[]), 50).unwrap();
            proptest::prop_assert!(k.tail(u + 1) <= k.tail(u));
            proptest::prop_assert!(k.cell_tail(u as f64 + 0.5) <= k.cell_tail(u as f64));
        }
    }
}
