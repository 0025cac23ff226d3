//! Environment Monte Carlo against exact predictions.

use stickylab::config::{ExperimentConfig, ExperimentId};
use stickylab::experiments::{calibrate_stickiness, exp_calibrate};
use stickylab::sbm::sample_pair_ends;
use stickylab::stats::MomentEstimate;
use stickylab::{derive_stream, CharacteristicMeasure, EnvKind, EnvModel};

#[test]
fn free_walks_calibrate_to_quarter_root_n() {
    let model = EnvModel::new(EnvKind::ConstantHalf, 1024).unwrap();
    let est = calibrate_stickiness(&model, 1024, 1.0, 2000, &derive_stream(1, &[])).unwrap();
    assert!((est.mean - 8.0).abs() <= 0.8 + 4.0 * est.stderr, "{est:?}");
}

#[test]
fn scaled_two_point_calibrates_to_target_and_matches_sticky_pair() {
    let big_n = 1024u64;
    let delta = 0.5 / (big_n as f64).sqrt();
    let model = EnvModel::new(EnvKind::TwoPoint { delta }, big_n).unwrap();
    let est = calibrate_stickiness(&model, big_n, 1.0, 4000, &derive_stream(2, &[])).unwrap();
    assert!((est.mean - 0.5).abs() <= 0.05 + 4.0 * est.stderr, "{est:?}");

    let m = CharacteristicMeasure::new(0.5);
    let ends = sample_pair_ends(&m, 1.0, 1e-3, 20_000, &derive_stream(3, &[])).unwrap();
    let d: Vec<f64> = ends.iter().map(|e| (e.x - e.y).abs()).collect();
    let v: Vec<f64> = ends.iter().map(|e| e.v).collect();
    let d = MomentEstimate::from_samples(&d, None);
    let v = MomentEstimate::from_samples(&v, None);
    let continuum = d.mean / (4.0 * v.mean);
    assert!((continuum - 0.5).abs() <= 0.05, "{continuum}");
    assert!((continuum - est.mean).abs() <= 0.1 + 4.0 * est.stderr);
}

#[test]
fn calibrate_experiment_default_passes() {
    let rep = exp_calibrate(&ExperimentConfig::defaults_for(ExperimentId::Calibrate)).unwrap();
    let failed: Vec<_> = rep.failures().collect();
    assert!(failed.is_empty(), "{failed:#?}");
    assert_eq!(rep.checks.len(), 2);
}

#[test]
fn first_moment_matches_binomial_sum_small_n() {
    let cfg = ExperimentConfig {
        n_list: vec![64, 256],
        replicas: stickylab::config::Replicas { env: 400, equal_cost: false, ..Default::default() },
        ..ExperimentConfig::defaults_for(ExperimentId::FirstMoment)
    };
    let rep = stickylab::experiments::exp_first_moment(&cfg).unwrap();
    assert!(rep.find_check("z_fraction").unwrap().pass == Some(true));
    assert!(rep.find_check("bias_shrinks[gauss(0;0.5)]").unwrap().pass == Some(true));
}
