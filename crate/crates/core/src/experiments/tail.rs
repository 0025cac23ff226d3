use crate::config::{ExperimentConfig, ExperimentId};
use crate::experiments::{nonincreasing_within_noise, EnsembleCache};
use crate::fields::{tail_first_moment_closed, tail_first_moment_oracle, tail_two_point_oracle};
use crate::report::{ExperimentReport, PlotTable, ReportRow};
use crate::she::{she_moment2_bridge, she_moment2_contour, ContourSpec};
use crate::stats::z_score;
use crate::Result;

/// Every grid point needed by the first-moment and two-point parts.
pub(crate) fn tail_points(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut xs = cfg.x_grid.clone();
    for &(x, y) in &cfg.pairs {
        xs.extend([x, y]);
    }
    let mut out: Vec<f64> = Vec::new();
    for x in xs {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

pub fn exp_tail_identities(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    exp_tail_identities_with(cfg, &EnsembleCache::new())
}

pub fn exp_tail_identities_with(cfg: &ExperimentConfig, cache: &EnsembleCache) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(ExperimentId::Tail);
    let mut plot = PlotTable::new("tail", &["N", "x", "y", "estimate", "stderr", "oracle"]);
    let z = cfg.tolerances.z;
    let t = cfg.t;
    let sigma = cfg.sigma();
    let n_max = cfg.n_max();
    let bound = 1.0 / (2.0 * std::f64::consts::PI * t).sqrt();
    let xs = tail_points(cfg);
    let mut ladder = cfg.n_list.clone();
    ladder.sort_unstable();

    let mut contour = Vec::new();
    for &(x, y) in &cfg.pairs {
        let c = she_moment2_contour(t, x, y, sigma, &ContourSpec::default_for(t, sigma))?.value;
        let b = she_moment2_bridge(t, x, y, sigma)?;
        let rel = (c / b - 1.0).abs();
        rep.check(&format!("contour_vs_bridge_x{x}_y{y}"), rel, cfg.tolerances.oracle_rel, rel <= cfg.tolerances.oracle_rel);
        contour.push(c);
    }

    let mut worst_bound = f64::NEG_INFINITY;
    let mut bound_ok = true;
    let mut gaps = vec![Vec::new(); cfg.pairs.len()];
    for &big_n in &ladder {
        let reps = cfg.replicas.env_for(big_n, n_max);
        let ens = cache.get(cfg.env_kind(), big_n, t, reps, &[], &xs, cfg.master_seed)?;
        for &x in &cfg.x_grid {
            let est = ens.tail_mean(x);
            let quad = tail_first_moment_oracle(big_n, t, x)?;
            let closed = tail_first_moment_closed(big_n, t, x);
            let oracle_rel = (quad / closed - 1.0).abs();
            if oracle_rel > 1e-8 {
                rep.check(&format!("tail_oracle_quadrature_N{big_n}_x{x}"), oracle_rel, 1e-8, false);
            }
            let gap = est.mean - quad;
            let zi = est.z(quad);
            let ok = gap.abs() <= cfg.tolerances.tail_rel * quad + z * est.stderr;
            rep.row(ReportRow::from_estimate("tail_mean", &est).n(big_n).t(t).x(x).k(1).oracle(quad).z(zi).pass(ok));
            plot.push(vec![big_n as f64, x, f64::NAN, est.mean, est.stderr, quad]);
            let slack = est.mean - bound - z * est.stderr;
            worst_bound = worst_bound.max(est.mean - bound);
            bound_ok &= slack <= 0.0;
            if big_n == n_max {
                rep.check(&format!("tail_identity_N{big_n}_x{x}"), (gap / quad).abs(), cfg.tolerances.tail_rel, ok);
            }
        }
        for (i, &(x, y)) in cfg.pairs.iter().enumerate() {
            let est = ens.tail_product(x, y);
            let c = contour[i];
            let gap = est.mean - c;
            let zi = z_score(gap, est.stderr);
            let ok = gap.abs() <= cfg.tolerances.two_point_rel * c + z * est.stderr;
            rep.row(ReportRow::from_estimate("tail_two_point", &est).n(big_n).t(t).x(x).y(y).k(2).oracle(c).z(zi).pass(ok));
            plot.push(vec![big_n as f64, x, y, est.mean, est.stderr, c]);
            let smoothed = tail_two_point_oracle(big_n, t, x, y, sigma)?;
            rep.row(ReportRow::from_estimate("tail_two_point_vs_smoothed", &est).n(big_n).t(t).x(x).y(y).k(2).oracle(smoothed).z(est.z(smoothed)));
            gaps[i].push((gap, est.stderr));
            if big_n == n_max {
                rep.check(&format!("two_point_N{big_n}_x{x}_y{y}"), (gap / c).abs(), cfg.tolerances.two_point_rel, ok);
            }
        }
    }
    rep.check("tail_bound", worst_bound, 0.0, bound_ok);
    for (&(x, y), g) in cfg.pairs.iter().zip(&gaps) {
        if g.len() > 1 {
            let ok = nonincreasing_within_noise(g, z);
            rep.check(&format!("two_point_gap_nonincreasing_x{x}_y{y}"), g.last().unwrap().0.abs(), g[0].0.abs(), ok);
        }
    }
    rep.plots.push(plot);
    Ok(rep)
}
