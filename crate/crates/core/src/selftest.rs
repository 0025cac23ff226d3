//! Fast closed-form and degenerate-case checks of every layer.

use crate::config::{ExperimentConfig, ExperimentId};
use crate::experiments::{calibrate_stickiness, Ensemble};
use crate::fields::{annealed_x_field, max_cdf, q_field_accumulate, tail_field, x_field, TailConvention, TestFunction};
use crate::lattice::{env_prob, evolve, evolve_visit, step_kernel, EnvKind, EnvModel, QuenchedKernel, DEFAULT_WIDTH_CAP};
use crate::local_time::{bridge_exp_moment, bridge_lt_tail, occupation_local_time, rescale_bridge_lt, BridgeSpec};
use crate::measure::{derive_constants, Centering, ModerateDeviationScaling};
use crate::report::{ExperimentReport, ReportRow};
use crate::rng::derive_stream;
use crate::sbm::{girsanov_from_ends, intersection_moment_bounds, sample_pair_ends, sample_reflected_with_local_time};
use crate::she::{heat_kernel, she_moment2_bridge, she_moment2_contour_with, she_moment_k_mc, she_pairing_mc, ContourIntegrand, ContourSpec, LocalTimeMethod};
use crate::stats::{correlation, MomentEstimate};
use crate::{par, quad, CharacteristicMeasure, Error, Result};

struct Checks {
    rep: ExperimentReport,
    z: f64,
}

impl Checks {
    fn near(&mut self, name: &str, value: f64, target: f64, tol: f64) {
        let err = (value - target).abs();
        self.rep.row(ReportRow::new(name, value).oracle(target).pass(err <= tol));
        self.rep.check(name, err, tol, err <= tol);
    }

    fn holds(&mut self, name: &str, ok: bool) {
        self.rep.check(name, if ok { 0.0 } else { 1.0 }, 0.0, ok);
    }

    fn stat(&mut self, name: &str, est: &MomentEstimate, target: f64, slack: f64) {
        let z = est.z(target);
        let ok = (est.mean - target).abs() <= slack + self.z * est.stderr;
        self.rep.row(ReportRow::from_estimate(name, est).oracle(target).z(z).pass(ok));
        self.rep.check(name, z.abs(), self.z, ok);
    }
}

fn sqrt_2_over_pi() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut c = Checks { rep: ExperimentReport::new(ExperimentId::Selftest), z: cfg.tolerances.z };
    let seed = cfg.master_seed;

    let m = derive_constants(0.25)?;
    c.near("lambda(0.25)", m.lambda, 1.0, 0.0);
    c.near("sigma(0.25)", m.sigma, 2.0, 0.0);
    c.near("lambda_sigma(1)", derive_constants(1.0)?.lambda * derive_constants(1.0)?.sigma, 2.0, 2.0 * f64::EPSILON);

    let s1 = derive_stream(seed, &[7, 7]);
    let s2 = derive_stream(seed, &[7, 7]);
    let (mut r1, mut r2) = (s1.rng(), s2.rng());
    c.holds("rng_reproducible_1e6", (0..1_000_000).all(|_| r1.uniform() == r2.uniform()));

    let free = EnvModel::new(EnvKind::ConstantHalf, 64)?;
    c.holds("constant_half_prob", (0..50).all(|i| env_prob(&free, &s1, i, i as i64 * 3 - 70) == 0.5));
    let sticky = EnvModel::new(EnvKind::TwoPoint { delta: 0.3 }, 64)?;
    let k1 = step_kernel(&QuenchedKernel::<f64>::delta0(), &sticky, &s1);
    let p = env_prob(&sticky, &s1, 0, 0);
    c.near("one_step_right", k1.get(1), p, 0.0);
    c.near("one_step_left", k1.get(-1), 1.0 - p, 0.0);
    let k2 = evolve::<f64>(&free, &s1, 2)?;
    c.holds("two_free_steps", k2.get(-2) == 0.25 && k2.get(0) == 0.5 && k2.get(2) == 0.25);
    let long = evolve::<f64>(&EnvModel::new(EnvKind::two_point_for(0.5), 10_000)?, &s1, 10_000)?;
    c.near("mass_after_1e4_steps", long.mass(), 1.0, 1e-12);
    c.holds("zero_steps_is_delta", evolve::<f64>(&sticky, &s1, 0)? == QuenchedKernel::delta0());
    let pair = QuenchedKernel { n: 1, offset: -1, probs: vec![0.3, 0.7] };
    c.near("tail_below_support", pair.tail(-5), 1.0, 0.0);
    c.near("tail_above_support", pair.tail(3), 0.0, 0.0);
    c.near("tail_at_zero", pair.tail(0), 0.7, 0.0);
    let mut sq_ok = true;
    evolve_visit::<f64>(&sticky, &s1, 200, DEFAULT_WIDTH_CAP, |k| sq_ok &= k.sum_sq() <= 1.0)?;
    c.holds("sum_of_squares_at_most_one", sq_ok);

    let phi = TestFunction::Gaussian { center: 0.0, width: 0.5 };
    let s0 = ModerateDeviationScaling { big_n: 256, t: 0.0, n: 0 };
    let d0 = QuenchedKernel::<f64>::delta0();
    c.near("x_field_no_steps", x_field(&d0, &s0, &phi, Centering::Lattice)?, phi.evaluate(0.0), 0.0);
    c.near("q_field_no_steps", q_field_accumulate([&d0], &s0, &phi, Centering::Lattice), 0.0, 0.0);
    let q = 256f64.powf(0.25);
    c.near(
        "tail_field_left_of_start",
        tail_field(&d0, &s0, -0.3, Centering::Continuum, TailConvention::Inclusive)?,
        q * (q * -0.3f64).exp(),
        1e-13,
    );
    c.near("tail_field_right_of_start", tail_field(&d0, &s0, 0.3, Centering::Continuum, TailConvention::Inclusive)?, 0.0, 0.0);
    c.near("max_cdf_single_walker", max_cdf(&pair, 1, -1), 1.0 - pair.tail(0), 0.0);
    c.near("max_cdf_above_support", max_cdf(&pair, 1000, 1), 1.0, 0.0);
    for &big_n in &cfg.n_list {
        let s = ModerateDeviationScaling::new(big_n, cfg.t)?;
        let one = annealed_x_field(&s, &TestFunction::Constant { value: 1.0 }, Centering::Lattice);
        c.near(&format!("constant_test_function_N{big_n}"), one, 1.0, 1e-12);
    }

    c.near("bridge_lt_tail_at_origin", bridge_lt_tail(&BridgeSpec::new(0.0, 0.0, 0.0), 0.0), 1.0, 0.0);
    c.near("exp_moment_theta_zero", bridge_exp_moment(&BridgeSpec::new(0.3, -0.2, 0.0))?.value, 1.0, 1e-12);
    let (spec, scale) = rescale_bridge_lt(1.0, 1.0, 0.0);
    c.holds("rescale_identity", spec == BridgeSpec::new(0.0, 0.0, 0.0) && scale == 1.0);
    let ones = vec![1.0; 101];
    c.near("occupation_away_from_zero", *occupation_local_time(&ones, 0.01, 2.0, 0.5).ell.last().unwrap(), 0.0, 0.0);

    c.near("heat_kernel_origin", heat_kernel(1.0, 0.0)?, 0.398_942_280_401_432_7, 1e-16);
    let mass = quad::integrate_line(|x: f64| heat_kernel(0.7, x).unwrap_or(0.0), 0.0, 0.7f64.sqrt(), 1e-20, Default::default())?;
    c.near("heat_kernel_mass", mass.value, 1.0, 1e-10);
    c.near("heat_kernel_even", heat_kernel(1.3, 0.4)?, heat_kernel(1.3, -0.4)?, 0.0);
    let pp = heat_kernel(1.0, 0.3)? * heat_kernel(1.0, -0.5)?;
    c.near("bridge_no_noise", she_moment2_bridge(1.0, 0.3, -0.5, 1e-12)? / pp, 1.0, 1e-10);
    c.near("bridge_symmetric", she_moment2_bridge(1.0, 0.3, -0.5, 1.0)?, she_moment2_bridge(1.0, -0.5, 0.3, 1.0)?, 0.0);
    let pf = she_moment2_contour_with(1.0, 0.3, -0.5, 1.0, &ContourSpec::default_for(1.0, 1.0), ContourIntegrand::PoleFree)?;
    c.near("contour_pole_free", pf.value, pp, 1e-8);
    let one_pt = she_moment_k_mc(1.0, &[0.4], 1.0, 0.1, LocalTimeMethod::BridgeStep, 10, &s1)?;
    c.near("she_one_point", one_pt.mean, heat_kernel(1.0, 0.4)?, 0.0);

    let paths = cfg.replicas.paths.max(2);
    let ell: Vec<f64> = par::map_indexed(2 * paths, |r| {
        let p = sample_reflected_with_local_time(1.0, 1e-4, &derive_stream(seed, &[11, r as u64])).expect("valid grid");
        *p.ell.last().unwrap()
    });
    c.stat("mean_local_time_at_one", &MomentEstimate::from_samples(&ell, None), sqrt_2_over_pi(), 0.0);
    let loose = CharacteristicMeasure::new(1e9);
    let ends = sample_pair_ends(&loose, 1.0, cfg.dt, paths, &derive_stream(seed, &[12]))?;
    let xs: Vec<f64> = ends.iter().map(|e| e.x).collect();
    let ys: Vec<f64> = ends.iter().map(|e| e.y).collect();
    let rho = correlation(&xs, &ys);
    let rho_se = 1.0 / (paths as f64).sqrt();
    c.stat("no_stickiness_correlation", &MomentEstimate { mean: rho, stderr: rho_se, n_replicas: paths as u64, seed: None }, 0.0, 0.0);
    let f = |x: f64, y: f64| (x * y).cos();
    let g0 = girsanov_from_ends(&ends, 0.0, 1.0, &f, &s1);
    c.near("girsanov_zero_drift", g0.diff.mean, 0.0, 0.0);
    let g = girsanov_from_ends(&ends, 0.5, 1.0, &f, &s1);
    c.stat("girsanov_no_stickiness", &g.diff, 0.0, 0.0);
    let (same, _) = intersection_moment_bounds(&CharacteristicMeasure::new(0.5), 2.0, 0.5, 0.5, cfg.dt, 4, &s1)?;
    c.near("intersection_time_empty_window", same.mean, 0.0, 0.0);

    let n0 = cfg.n_list[0];
    let model = EnvModel::new(EnvKind::two_point_for(cfg.nu_total), n0)?;
    let cs = derive_stream(seed, &[13]);
    let a = calibrate_stickiness(&model, n0, cfg.t, 1000, &cs)?;
    let b = calibrate_stickiness(&model, n0, cfg.t, 4000, &cs)?;
    let ratio = b.stderr / a.stderr;
    c.near("stderr_scaling", ratio, 0.5, 0.15);

    let sigma_free = she_pairing_mc(cfg.t, &|x| phi.evaluate(x), 2, 0.0, cfg.dt, LocalTimeMethod::BridgeStep, paths, &derive_stream(seed, &[14]))?;
    for &big_n in &cfg.n_list {
        let ens = Ensemble::collect(EnvKind::ConstantHalf, big_n, cfg.t, 2, &[phi], &[], seed)?;
        let m2 = ens.x_moment(&phi, 2).mean;
        let est = MomentEstimate { mean: m2, ..sigma_free.clone() };
        c.stat(&format!("free_second_moment_N{big_n}"), &est, sigma_free.mean, cfg.tolerances.moment_rel * sigma_free.mean);
        let ens = Ensemble::collect(cfg.env_kind(), big_n, cfg.t, cfg.replicas.env, &[phi], &[], seed)?;
        let s = ModerateDeviationScaling::new(big_n, cfg.t)?;
        c.stat(&format!("first_moment_N{big_n}"), &ens.x_moment(&phi, 1), annealed_x_field(&s, &phi, Centering::Lattice), 0.0);
    }

    let big_n = 256;
    let s = ModerateDeviationScaling::new(big_n, 1.0)?;
    let k = 8f64.exp().floor() as u64;
    let km = EnvModel::new(EnvKind::two_point_for(cfg.nu_total), big_n)?;
    let mut worst = 0.0f64;
    for r in 0..4 {
        let kern = evolve::<f64>(&km, &derive_stream(seed, &[15, r]), big_n)?;
        for a in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            let m = crate::experiments::max_threshold(big_n, 0.0, a);
            let direct = max_cdf(&kern, k, m.floor() as i64);
            let x = (a - 0.25 * (big_n as f64).ln()) / (big_n as f64).powf(0.25);
            let p = (-(0.5 * (big_n as f64).sqrt() + a)).exp() * tail_field(&kern, &s, x, Centering::Continuum, TailConvention::Inclusive)?;
            worst = worst.max((direct - (k as f64 * (-p).ln_1p()).exp()).abs());
        }
    }
    c.near("max_pathwise_identity", worst, 0.0, cfg.tolerances.identity_abs);

    let minimal = ExperimentConfig::from_json(r#"{"experiment": "tail"}"#)?;
    c.holds("minimal_config_defaults", minimal == ExperimentConfig::defaults_for(ExperimentId::Tail));
    let bad = ExperimentConfig::from_json(r#"{"nu_total": 0}"#);
    c.holds(
        "degenerate_config_rejected",
        matches!(bad, Err(Error::Config(v)) if v.iter().any(|m| m.contains("non-degeneracy"))),
    );

    Ok(c.rep)
}
