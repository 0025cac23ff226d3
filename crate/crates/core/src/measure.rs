//! Characteristic-measure constants and the moderate-deviation window.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicMeasure {
    pub nu_total: f64,
    pub lambda: f64,
    pub sigma: f64,
}

pub fn derive_constants(nu_total: f64) -> Result<CharacteristicMeasure> {
    if !(nu_total > 0.0) || !nu_total.is_finite() {
        return Err(Error::Domain(format!(
            "nu_total must be positive and finite (non-degenerate characteristic measure), got {nu_total}"
        )));
    }
    Ok(CharacteristicMeasure {
        nu_total,
        lambda: 4.0 * nu_total,
        sigma: 1.0 / (2.0 * nu_total),
    })
}

impl CharacteristicMeasure {
    /// Measure with total mass `nu_total`; panics on a degenerate mass.
    pub fn new(nu_total: f64) -> Self {
        derive_constants(nu_total).expect("positive mass")
    }
}

/// How the exponential tilt of a lattice field is normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Tilt `atanh(N^{-1/4})` normalized by the walk's own cumulant; the
    /// annealed first moment is then an exact lattice identity and the tilted
    /// walk is centered on `N^{3/4} t`.
    #[default]
    Lattice,
    /// Tilt `N^{-1/4}` normalized by the Brownian cumulant `(t/2) N^{1/2}`.
    Continuum,
}

/// Exponential weight `exp(theta * u - log_norm)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tilt {
    pub theta: f64,
    pub log_norm: f64,
}

impl Tilt {
    pub fn log_weight(&self, u: f64) -> f64 {
        self.theta * u - self.log_norm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModerateDeviationScaling {
    pub big_n: u64,
    pub t: f64,
    pub n: u64,
}

impl ModerateDeviationScaling {
    pub fn new(big_n: u64, t: f64) -> Result<Self> {
        if big_n == 0 || !(t > 0.0) {
            return Err(Error::Domain(format!("need N >= 1 and t > 0, got N={big_n}, t={t}")));
        }
        let n = (big_n as f64 * t).round() as u64;
        if n == 0 {
            return Err(Error::Domain(format!("N t rounds to zero steps (N={big_n}, t={t})")));
        }
        Ok(Self { big_n, t, n })
    }

    pub fn nf(&self) -> f64 {
        self.big_n as f64
    }

    /// `N^{-1/4}`.
    pub fn theta(&self) -> f64 {
        self.nf().powf(-0.25)
    }

    /// `atanh(N^{-1/4})`; equals `+inf` at `N = 1`.
    pub fn theta_star(&self) -> f64 {
        self.theta().atanh()
    }

    /// Lattice location of macroscopic `x`.
    pub fn u(&self, x: f64) -> f64 {
        self.nf().powf(0.75) * self.t + self.nf().sqrt() * x
    }

    /// Macroscopic image of lattice site `u` at step `m`.
    pub fn x_of(&self, u: f64, m: u64) -> f64 {
        let s = m as f64 / self.nf();
        (u - self.nf().powf(0.75) * s) / self.nf().sqrt()
    }

    /// Tilt for a kernel after `m` steps.
    pub fn tilt(&self, centering: Centering, m: u64) -> Tilt {
        match centering {
            Centering::Lattice => {
                let th = self.theta_star();
                Tilt { theta: th, log_norm: m as f64 * th.cosh().ln() }
            }
            Centering::Continuum => {
                let th = self.theta();
                Tilt { theta: th, log_norm: 0.5 * (m as f64 / self.nf()) * self.nf().sqrt() }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_examples() {
        let m = derive_constants(0.5).unwrap();
        assert_eq!((m.lambda, m.sigma), (2.0, 1.0));
        let m = derive_constants(0.25).unwrap();
        assert_eq!((m.lambda, m.sigma), (1.0, 2.0));
        assert!(derive_constants(0.0).is_err());
        assert!(derive_constants(-1.0).is_err());
        assert!(derive_constants(f64::NAN).is_err());
    }

    #[test]
    fn scaling_maps() {
        let s = ModerateDeviationScaling::new(16, 1.0).unwrap();
        assert_eq!(s.n, 16);
        assert_eq!(s.u(0.0), 8.0);
        assert_eq!(s.u(1.0), 12.0);
        assert_eq!(s.x_of(12.0, 16), 1.0);
        assert!((s.theta_star().tanh() - 0.5).abs() < 1e-15);
        assert!(ModerateDeviationScaling::new(4, 0.1).is_err());
    }

    #[test]
    fn continuum_tilt_matches_brownian_cumulant() {
        let s = ModerateDeviationScaling::new(256, 2.0).unwrap();
        let tl = s.tilt(Centering::Continuum, s.n);
        // (t/2) sqrt(N) + N^{1/4} x at u(x)
        let x = 0.3;
        let expect = 0.5 * 2.0 * 16.0 + 4.0 * x;
        assert!((tl.log_weight(s.u(x)) - expect).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn lambda_sigma_is_two(nu in 1e-6f64..1e6) {
            let m = derive_constants(nu).unwrap();
            let p = m.lambda * m.sigma;
            proptest::prop_assert!((p - 2.0).abs() <= f64::EPSILON * 2.0);
        }

        #[test]
        fn u_strictly_increasing(n in 1u64..100_000, t in 0.01f64..10.0, x in -50.0f64..50.0, dx in 1e-6f64..1.0) {
            if let Ok(s) = ModerateDeviationScaling::new(n, t) {
                proptest::prop_assert!(s.u(x + dx) > s.u(x));
                proptest::prop_assert!(s.n >= 1);
            }
        }
    }
}
