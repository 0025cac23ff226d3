//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::cell::OnceCell;
use std::time::Instant;

use stickylab::config::{ExperimentConfig, ExperimentId, Replicas, Tolerances};
use stickylab::experiments::{self, Ensemble, EnsembleCache};
use stickylab::fields::TestFunction;
use stickylab::lattice::{evolve, EnvKind, EnvModel};
use stickylab::local_time::{bridge_exp_moment, bridge_lt_tail, exp_moment_envelope, sample_bridge_local_time, BridgeSpec};
use stickylab::report::ExperimentReport;
use stickylab::sbm::{girsanov_from_ends, sample_pair_ends};
use stickylab::stats::{ks_distance_atoms, normal_cdf, MomentEstimate};
use stickylab::{derive_stream, par, CharacteristicMeasure};

const SEED: u64 = 20_240_601;
const Z: f64 = 4.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn tolerances() -> Tolerances {
    Tolerances {
        z: Z,
        pass_fraction: 0.95,
        bias_rel: 0.02,
        tail_rel: 0.02,
        two_point_rel: 0.10,
        moment_rel: 0.10,
        calibration_rel: 0.10,
        gumbel_gap: 0.05,
        identity_abs: 1e-12,
        oracle_rel: 1e-5,
        shift_rel: 1e-9,
        ks: 0.01,
    }
}

fn config(id: ExperimentId) -> ExperimentConfig {
    ExperimentConfig { master_seed: SEED, tolerances: tolerances(), ..ExperimentConfig::defaults_for(id) }
}

fn checks(rep: &ExperimentReport, prefixes: &[&str]) -> Outcome {
    let rows: Vec<_> = rep
        .checks
        .iter()
        .filter(|c| prefixes.iter().any(|p| c.observable.starts_with(&format!("check:{p}"))))
        .collect();
    let pass = !rows.is_empty() && rows.iter().all(|c| c.pass == Some(true));
    let detail = rows
        .iter()
        .map(|c| {
            format!(
                "{}={:.4e}/{:.3e}{}",
                c.observable.trim_start_matches("check:"),
                c.estimate,
                c.oracle.unwrap_or(f64::NAN),
                if c.pass == Some(true) { "" } else { " FAIL" }
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn c1_conservation() -> Outcome {
    let steps = 10_000;
    let model = EnvModel::new(EnvKind::two_point_for(0.5), steps).unwrap();
    let errs = par::map_indexed(100, |r| {
        let k = evolve::<f64>(&model, &derive_stream(SEED, &[101, r as u64]), steps).unwrap();
        (k.mass() - 1.0).abs()
    });
    let worst = errs.iter().copied().fold(0.0, f64::max);
    outcome(worst <= 1e-12, format!("max |sum K - 1| = {worst:.3e} over 100 environments (tol 1e-12)"))
}

fn c2_first_moment() -> Outcome {
    let cfg = ExperimentConfig {
        test_functions: vec![
            TestFunction::Gaussian { center: 0.0, width: 0.5 },
            TestFunction::Bump { center: 0.0, radius: 1.0 },
        ],
        n_list: vec![256, 1024, 4096],
        replicas: Replicas { env: 500, equal_cost: true, ..Replicas::default() },
        ..config(ExperimentId::FirstMoment)
    };
    checks(&experiments::exp_first_moment(&cfg).unwrap(), &["z_fraction", "bias_N4096", "bias_shrinks"])
}

fn c3_she_oracle() -> Outcome {
    let rep = experiments::exp_she_oracle(&config(ExperimentId::SheOracle)).unwrap();
    checks(&rep, &["contour_vs_bridge", "contour_shift"])
}

fn c4_sbm_identities() -> Outcome {
    let m = CharacteristicMeasure::new(0.5);
    let ends = sample_pair_ends(&m, 1.0, 1e-4, 100_000, &derive_stream(SEED, &[104])).unwrap();
    let diff: Vec<f64> = ends.iter().map(|e| (e.x - e.y).abs() - m.lambda * e.v).collect();
    let d = MomentEstimate::from_samples(&diff, None);
    let mart = d.mean.abs() <= Z * d.stderr;
    let mut lv: Vec<f64> = ends.iter().map(|e| m.lambda * e.v).collect();
    lv.sort_by(f64::total_cmp);
    let n = lv.len() as f64;
    let upper = |x: f64| 2.0 * normal_cdf(x / 2f64.sqrt()) - 1.0;
    let excess = lv.iter().enumerate().map(|(i, &x)| upper(x) - i as f64 / n).fold(0.0, f64::max);
    outcome(
        mart && excess <= 0.01,
        format!(
            "E|X-Y| - lambda E[V] = {:.4e} +- {:.2e} (|z| <= 4: {mart}); one-sided KS vs sqrt2*max B = {excess:.4e} (tol 0.01)",
            d.mean, d.stderr
        ),
    )
}

fn c5_girsanov() -> Outcome {
    let m = CharacteristicMeasure::new(0.5);
    let stream = derive_stream(SEED, &[105]);
    let ends = sample_pair_ends(&m, 1.0, 1e-3, 200_000, &stream).unwrap();
    let fs: [(&str, &(dyn Fn(f64, f64) -> f64 + Sync)); 3] = [
        ("cos(x-y)", &|x: f64, y: f64| (x - y).cos()),
        ("1{x>0,y<0.5}", &|x: f64, y: f64| if x > 0.0 && y < 0.5 { 1.0 } else { 0.0 }),
        ("1/(1+(x+y)^2)", &|x: f64, y: f64| 1.0 / (1.0 + (x + y).powi(2))),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, f) in fs {
        let g = girsanov_from_ends(&ends, 0.5, 1.0, f, &stream);
        let z = g.z();
        pass &= z.abs() <= Z;
        parts.push(format!("{name}: lhs {:.5} rhs {:.5} z {z:.2}", g.lhs.mean, g.rhs.mean));
    }
    outcome(pass, parts.join("; "))
}

fn c6_pitman() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &(a, b)) in [(0.0, 0.0), (0.5, -0.3), (-1.0, 1.6)].iter().enumerate() {
        let spec = BridgeSpec::new(a, b, 0.0);
        let xs = par::map_indexed(100_000, |r| {
            let mut rng = derive_stream(SEED, &[106, i as u64, r as u64]).rng();
            sample_bridge_local_time(&spec, &mut rng)
        });
        let cdf = |v: f64| if v < 0.0 { 0.0 } else { 1.0 - bridge_lt_tail(&spec, v) };
        let cdf_left = |v: f64| if v <= 0.0 { 0.0 } else { 1.0 - bridge_lt_tail(&spec, v) };
        let ks = ks_distance_atoms(&xs, cdf, cdf_left);
        pass &= ks <= 0.01;
        parts.push(format!("KS({a},{b}) = {ks:.4}"));
        for theta in [0.5, 1.0] {
            let w: Vec<f64> = xs.iter().map(|l| (theta * l).exp()).collect();
            let mc = MomentEstimate::from_samples(&w, None);
            let q = bridge_exp_moment(&spec.with_theta(theta)).unwrap().value;
            let z = mc.z(q);
            pass &= z.abs() <= Z;
            parts.push(format!("z(theta={theta}) = {z:.2}"));
        }
    }
    let mut bound_ok = true;
    for j in 0..=40 {
        let theta = 0.125 * j as f64;
        let v = bridge_exp_moment(&BridgeSpec::new(0.0, 0.0, theta)).unwrap().value;
        bound_ok &= v <= exp_moment_envelope(theta) * (1.0 + 1e-12);
    }
    pass &= bound_ok;
    parts.push(format!("envelope held on theta in [0, 5]: {bound_ok}"));
    outcome(pass, parts.join("; "))
}

/// Ensembles at N = 256, 1024, 4096 shared by the tail and moment criteria.
fn shared_cache() -> EnsembleCache {
    let cache = EnsembleCache::new();
    let kind = EnvKind::two_point_for(0.5);
    let reps = Replicas { env: 2000, equal_cost: true, ..Replicas::default() };
    for n in [256, 1024, 4096] {
        let e = Ensemble::collect(
            kind,
            n,
            1.0,
            reps.env_for(n, 4096),
            &[TestFunction::Gaussian { center: 0.0, width: 0.5 }],
            &[-0.5, 0.0, 0.5],
            SEED,
        )
        .unwrap();
        cache.insert(e);
    }
    cache
}

fn tail_report(cache: &EnsembleCache) -> ExperimentReport {
    let cfg = ExperimentConfig {
        x_grid: vec![-0.5, 0.0, 0.5],
        pairs: vec![(0.0, 0.0)],
        replicas: Replicas { env: 2000, equal_cost: true, ..Replicas::default() },
        ..config(ExperimentId::Tail)
    };
    experiments::exp_tail_identities_with(&cfg, cache).unwrap()
}

fn moments_report(cache: &EnsembleCache) -> ExperimentReport {
    let cfg = ExperimentConfig {
        test_functions: vec![TestFunction::Gaussian { center: 0.0, width: 0.5 }],
        moments_k: vec![2, 3],
        replicas: Replicas { env: 2000, equal_cost: true, paths: 100_000, oracle_paths: 100_000 },
        dt: 4e-3,
        ..config(ExperimentId::Moments)
    };
    experiments::exp_moment_convergence_with(&cfg, cache).unwrap()
}

fn c10_max() -> Outcome {
    let rep = experiments::exp_max_statistics(&config(ExperimentId::Max)).unwrap();
    checks(&rep, &["pathwise_identity", "free_gumbel", "mixture_sup_gap"])
}

fn c11_determinism() -> Outcome {
    let cfg = config(ExperimentId::Selftest);
    let max = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let runs: Vec<(usize, String)> = [1, 4, max]
        .into_iter()
        .map(|t| (t, par::with_threads(t, || experiments::run(&cfg).unwrap().to_csv())))
        .collect();
    let same = runs.iter().all(|(_, csv)| csv == &runs[0].1);
    let passed = same && experiments::run(&cfg).unwrap().passed();
    outcome(
        passed,
        format!(
            "selftest CSV ({} bytes) identical for threads {:?}: {same}",
            runs[0].1.len(),
            runs.iter().map(|r| r.0).collect::<Vec<_>>()
        ),
    )
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = Vec::new();
    let mut report = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if let Some(fl) = &filter {
            if !name.contains(fl.as_str()) && fl != &id.to_string() {
                return;
            }
        }
        let t0 = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{verdict}] {name} ({:.1}s): {}", t0.elapsed().as_secs_f64(), o.detail);
        if !o.pass {
            failed.push(id);
        }
    };
    report(1, "kernel conservation", &mut c1_conservation);
    report(2, "first-moment exactness", &mut c2_first_moment);
    report(3, "second-moment oracle triangle", &mut c3_she_oracle);
    report(4, "two-point sticky identities", &mut c4_sbm_identities);
    report(5, "girsanov identity", &mut c5_girsanov);
    report(6, "bridge local-time law", &mut c6_pitman);
    let cache = OnceCell::new();
    let shared = || cache.get_or_init(shared_cache);
    let tail = OnceCell::new();
    report(7, "tail-field first moment", &mut || {
        checks(tail.get_or_init(|| tail_report(shared())), &["tail_identity_N4096", "tail_bound"])
    });
    report(8, "two-point tail correlation", &mut || checks(tail.get_or_init(|| tail_report(shared())), &["two_point"]));
    report(9, "moment convergence", &mut || checks(&moments_report(shared()), &["oracle_k2", "moment_k"]));
    report(10, "max statistics", &mut c10_max);
    report(11, "determinism", &mut c11_determinism);
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
