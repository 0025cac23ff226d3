//! Monte Carlo and quadrature laboratory for sticky Brownian motion,
//! random walks in random environment and moments of the stochastic heat
//! equation.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

pub mod config;
mod error;
pub mod experiments;
pub mod fields;
pub mod lattice;
pub mod local_time;
pub mod measure;
pub mod par;
pub mod quad;
pub mod report;
pub mod rng;
pub mod sbm;
pub mod selftest;
pub mod she;
pub mod stats;

pub use error::{Error, Result};

/// Scalar type accepted by the analytic parts of the crate.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }
}

impl<T> Real for T where T: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {}

pub type Kernel = lattice::QuenchedKernel<f64>;
pub type Kernel32 = lattice::QuenchedKernel<f32>;
pub type Bridge = local_time::BridgeSpec<f64>;
pub type Contour = she::ContourSpec<f64>;

pub use lattice::{EnvKind, EnvModel};
pub use measure::{derive_constants, CharacteristicMeasure, ModerateDeviationScaling};
pub use rng::{derive_stream, CounterRng, RngStream};
pub use stats::MomentEstimate;
