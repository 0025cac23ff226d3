//! Lattice-versus-continuum experiments.
//!
//! Every random quantity is keyed by `(master_seed, tag, N, replica)`, so a
//! report depends only on its configuration and not on the worker count.

mod calibrate;
mod ensemble;
mod first_moment;
mod max;
mod moments;
mod she_oracle;
mod tail;

pub use calibrate::{calibrate_stickiness, exp_calibrate};
pub use ensemble::{Ensemble, EnsembleCache, EnvSample};
pub use first_moment::exp_first_moment;
pub use max::{exp_max_statistics, gumbel_free_case, max_threshold, FreeGumbel};
pub use moments::{exp_moment_convergence, exp_moment_convergence_with};
pub use she_oracle::exp_she_oracle;
pub use tail::{exp_tail_identities, exp_tail_identities_with};

use crate::config::{ExperimentConfig, ExperimentId};
use crate::report::ExperimentReport;
use crate::Result;

pub(crate) const TAG_ENSEMBLE: u64 = 1;
pub(crate) const TAG_CALIBRATE: u64 = 2;
pub(crate) const TAG_ORACLE: u64 = 3;
pub(crate) const TAG_MAX_DIRECT: u64 = 4;
pub(crate) const TAG_MAX_MIXTURE: u64 = 5;
pub(crate) const TAG_SHE: u64 = 6;

/// Runs the experiment named in `cfg`.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentId::Calibrate => exp_calibrate(cfg),
        ExperimentId::FirstMoment => exp_first_moment(cfg),
        ExperimentId::Moments => exp_moment_convergence(cfg),
        ExperimentId::Tail => exp_tail_identities(cfg),
        ExperimentId::Max => exp_max_statistics(cfg),
        ExperimentId::SheOracle => exp_she_oracle(cfg),
        ExperimentId::Selftest => crate::selftest::run(cfg),
    }
}

/// `|gap_{i+1}| <= |gap_i| + z * hypot(se_i, se_{i+1})` along a ladder of
/// `(gap, stderr)` pairs.
pub fn nonincreasing_within_noise(gaps: &[(f64, f64)], z: f64) -> bool {
    gaps.windows(2).all(|w| w[1].0.abs() <= w[0].0.abs() + z * w[0].1.hypot(w[1].1))
}

/// Strictly shrinking absolute values.
pub fn shrinking(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1].abs() < w[0].abs())
}

/// Fraction of entries that are `true`.
pub(crate) fn fraction(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 1.0;
    }
    flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
}
