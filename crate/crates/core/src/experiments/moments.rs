use crate::config::{ExperimentConfig, ExperimentId};
use crate::experiments::{nonincreasing_within_noise, EnsembleCache, TAG_ORACLE};
use crate::fields::TestFunction;
use crate::report::{ExperimentReport, PlotTable, ReportRow};
use crate::rng::derive_stream;
use crate::she::{pairing_moment2, she_pairing_mc, LocalTimeMethod};
use crate::stats::{z_score, MomentEstimate};
use crate::Result;

/// Continuum value of `E[Z_t(phi)^k]`: quadrature for `k = 2`, joint-path
/// Monte Carlo for `k = 3`.
fn oracle(cfg: &ExperimentConfig, phi: &TestFunction, k: u32, rep: &mut ExperimentReport) -> Result<MomentEstimate> {
    let sigma = cfg.sigma();
    let f = |x: f64| phi.evaluate(x);
    let stream = derive_stream(cfg.master_seed, &[TAG_ORACLE, k as u64]);
    let mc = she_pairing_mc(cfg.t, &f, k as usize, sigma, cfg.dt, LocalTimeMethod::BridgeStep, cfg.replicas.oracle_paths, &stream)?;
    if k == 2 {
        let (lo, hi) = phi.window(cfg.t);
        let quad = pairing_moment2(cfg.t, sigma, &f, lo, hi)?;
        let zq = mc.z(quad);
        rep.row(
            ReportRow::from_estimate(format!("oracle_mc[{}]", phi.label()), &mc).t(cfg.t).k(2).oracle(quad).z(zq).pass(zq.abs() <= cfg.tolerances.z),
        );
        rep.check(&format!("oracle_k2_mc_vs_quadrature[{}]", phi.label()), zq.abs(), cfg.tolerances.z, zq.abs() <= cfg.tolerances.z);
        return Ok(MomentEstimate { seed: None, ..MomentEstimate::exact(quad) });
    }
    Ok(mc)
}

/// Lattice moments of the density field across the `N` ladder against the
/// continuum oracle.
pub fn exp_moment_convergence(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    exp_moment_convergence_with(cfg, &EnsembleCache::new())
}

pub fn exp_moment_convergence_with(cfg: &ExperimentConfig, cache: &EnsembleCache) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(ExperimentId::Moments);
    let mut plot = PlotTable::new("moments", &["N", "k", "phi_index", "lattice", "stderr", "oracle", "oracle_stderr", "gap"]);
    let z = cfg.tolerances.z;
    let n_max = cfg.n_max();
    let mut ladder = cfg.n_list.clone();
    ladder.sort_unstable();
    for (pi, phi) in cfg.test_functions.iter().enumerate() {
        for &k in &cfg.moments_k {
            let orc = oracle(cfg, phi, k, &mut rep)?;
            let mut gaps = Vec::new();
            for &big_n in &ladder {
                let reps = cfg.replicas.env_for(big_n, n_max);
                let ens = cache.get(cfg.env_kind(), big_n, cfg.t, reps, &cfg.test_functions, &[], cfg.master_seed)?;
                let est = ens.x_moment(phi, k);
                let se = est.stderr.hypot(orc.stderr);
                let gap = est.mean - orc.mean;
                let zi = z_score(gap, se);
                let ok = gap.abs() <= cfg.tolerances.moment_rel * orc.mean.abs() + z * se;
                rep.row(
                    ReportRow::from_estimate(format!("moment[{}]", phi.label()), &est)
                        .n(big_n)
                        .t(cfg.t)
                        .k(k)
                        .oracle(orc.mean)
                        .z(zi)
                        .pass(ok),
                );
                plot.push(vec![big_n as f64, k as f64, pi as f64, est.mean, est.stderr, orc.mean, orc.stderr, gap]);
                gaps.push((gap, se));
                if big_n == n_max {
                    rep.check(
                        &format!("moment_k{k}_N{big_n}[{}]", phi.label()),
                        (gap / orc.mean).abs(),
                        cfg.tolerances.moment_rel,
                        ok,
                    );
                }
            }
            if k == 2 && gaps.len() > 1 {
                let ok = nonincreasing_within_noise(&gaps, z);
                rep.check(&format!("moment_k2_gap_nonincreasing[{}]", phi.label()), gaps.last().unwrap().0.abs(), gaps[0].0.abs(), ok);
            }
        }
    }
    rep.plots.push(plot);
    Ok(rep)
}
