use std::sync::{Arc, Mutex};

use crate::experiments::TAG_ENSEMBLE;
use crate::fields::{tail_field, x_field, TailConvention, TestFunction};
use crate::lattice::{evolve, EnvKind, EnvModel};
use crate::measure::{Centering, ModerateDeviationScaling};
use crate::rng::{derive_stream, RngStream};
use crate::stats::MomentEstimate;
use crate::{par, Result};

/// Field values of one environment.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSample {
    /// `x_field` for each test function, lattice centering.
    pub x_fields: Vec<f64>,
    /// Tail field at each grid point, lattice centering and cell convention.
    pub tails: Vec<f64>,
}

/// Field values over independent environments at one `N`.
///
/// Environment `r` uses `derive_stream(seed, [1, N, t bits]).child(r)`, so a
/// smaller ensemble is always a prefix of a larger one.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub kind: EnvKind,
    pub big_n: u64,
    pub t: f64,
    pub master_seed: u64,
    pub phis: Vec<TestFunction>,
    pub tail_xs: Vec<f64>,
    pub samples: Vec<EnvSample>,
}

pub fn ensemble_stream(master_seed: u64, big_n: u64, t: f64) -> RngStream {
    derive_stream(master_seed, &[TAG_ENSEMBLE, big_n, t.to_bits()])
}

impl Ensemble {
    pub fn collect(
        kind: EnvKind,
        big_n: u64,
        t: f64,
        reps: usize,
        phis: &[TestFunction],
        tail_xs: &[f64],
        master_seed: u64,
    ) -> Result<Self> {
        let s = ModerateDeviationScaling::new(big_n, t)?;
        let model = EnvModel::new(kind, big_n)?;
        let stream = ensemble_stream(master_seed, big_n, t);
        let samples = par::map_indexed(reps, |r| -> Result<EnvSample> {
            let k = evolve::<f64>(&model, &stream.child(r as u64), s.n)?;
            let x_fields = phis.iter().map(|phi| x_field(&k, &s, phi, Centering::Lattice)).collect::<Result<_>>()?;
            let tails = tail_xs
                .iter()
                .map(|&x| tail_field(&k, &s, x, Centering::Lattice, TailConvention::Cell))
                .collect::<Result<_>>()?;
            Ok(EnvSample { x_fields, tails })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(Self { kind, big_n, t, master_seed, phis: phis.to_vec(), tail_xs: tail_xs.to_vec(), samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn stream(&self) -> RngStream {
        ensemble_stream(self.master_seed, self.big_n, self.t)
    }

    fn phi_index(&self, phi: &TestFunction) -> usize {
        self.phis.iter().position(|p| p == phi).expect("test function collected")
    }

    fn x_index(&self, x: f64) -> usize {
        self.tail_xs.iter().position(|&y| y == x).expect("tail point collected")
    }

    fn estimate(&self, f: impl Fn(&EnvSample) -> f64) -> MomentEstimate {
        let v: Vec<f64> = self.samples.iter().map(f).collect();
        MomentEstimate::from_samples(&v, Some(self.stream()))
    }

    /// `E[X(phi)^k]`.
    pub fn x_moment(&self, phi: &TestFunction, k: u32) -> MomentEstimate {
        let i = self.phi_index(phi);
        self.estimate(|s| s.x_fields[i].powi(k as i32))
    }

    pub fn tail_mean(&self, x: f64) -> MomentEstimate {
        let i = self.x_index(x);
        self.estimate(|s| s.tails[i])
    }

    pub fn tail_product(&self, x: f64, y: f64) -> MomentEstimate {
        let (i, j) = (self.x_index(x), self.x_index(y));
        self.estimate(|s| s.tails[i] * s.tails[j])
    }

    /// The first `reps` environments restricted to the given observables.
    pub fn subset(&self, reps: usize, phis: &[TestFunction], tail_xs: &[f64]) -> Option<Self> {
        if reps > self.len() {
            return None;
        }
        let pi: Option<Vec<usize>> = phis.iter().map(|p| self.phis.iter().position(|q| q == p)).collect();
        let xi: Option<Vec<usize>> = tail_xs.iter().map(|x| self.tail_xs.iter().position(|y| y == x)).collect();
        let (pi, xi) = (pi?, xi?);
        let samples = self.samples[..reps]
            .iter()
            .map(|s| EnvSample {
                x_fields: pi.iter().map(|&i| s.x_fields[i]).collect(),
                tails: xi.iter().map(|&i| s.tails[i]).collect(),
            })
            .collect();
        Some(Self { phis: phis.to_vec(), tail_xs: tail_xs.to_vec(), samples, ..self.clone() })
    }
}

/// Reuses collected ensembles across experiments. A cached ensemble serves
/// any request it covers; the answer equals a fresh collection.
#[derive(Debug, Default)]
pub struct EnsembleCache {
    entries: Mutex<Vec<Arc<Ensemble>>>,
}

impl EnsembleCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores an ensemble collected elsewhere.
    pub fn insert(&self, e: Ensemble) {
        self.entries.lock().expect("cache lock").push(Arc::new(e));
    }

    #[allow(clippy::too_many_arguments)]
    pub fn get(
        &self,
        kind: EnvKind,
        big_n: u64,
        t: f64,
        reps: usize,
        phis: &[TestFunction],
        tail_xs: &[f64],
        master_seed: u64,
    ) -> Result<Ensemble> {
        {
            let entries = self.entries.lock().expect("cache lock");
            for e in entries.iter() {
                if e.kind == kind && e.big_n == big_n && e.t == t && e.master_seed == master_seed {
                    if let Some(s) = e.subset(reps, phis, tail_xs) {
                        return Ok(s);
                    }
                }
            }
        }
        let e = Ensemble::collect(kind, big_n, t, reps, phis, tail_xs, master_seed)?;
        self.insert(e.clone());
        Ok(e)
    }
}
