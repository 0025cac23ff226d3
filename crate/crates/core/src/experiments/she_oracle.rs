use crate::config::{ExperimentConfig, ExperimentId};
use crate::experiments::TAG_SHE;
use crate::report::{ExperimentReport, PlotTable, ReportRow};
use crate::rng::derive_stream;
use crate::she::{she_moment2_bridge, she_moment2_contour, she_moment_k_mc, ContourSpec, LocalTimeMethod};
use crate::Result;

/// Fixed second point of the grid; the first sits `x - y` to its right.
const Y0: f64 = -0.25;

/// Bridge formula against the contour formula on the `(t, x - y, sigma)`
/// grid, contour-shift invariance, and Monte Carlo at `sigma = 1`.
pub fn exp_she_oracle(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(ExperimentId::SheOracle);
    let mut plot = PlotTable::new("she_oracle", &["t", "x", "y", "sigma", "bridge", "contour", "rel_gap"]);
    let g = &cfg.she;
    let tol = &cfg.tolerances;
    let (mut worst_gap, mut worst_shift) = (0.0f64, 0.0f64);
    for &t in &g.t_grid {
        for &dxy in &g.dxy_grid {
            let (x, y) = (Y0 + dxy, Y0);
            for &sigma in &g.sigma_grid {
                let bridge = she_moment2_bridge(t, x, y, sigma)?;
                let spec = ContourSpec::default_for(t, sigma);
                let contour = she_moment2_contour(t, x, y, sigma, &spec)?.value;
                let moved = ContourSpec { r1: spec.r1 - g.shift, r2: spec.r2 + g.shift, ..spec };
                let shifted = she_moment2_contour(t, x, y, sigma, &moved)?.value;
                let rel = (contour / bridge - 1.0).abs();
                let shift_rel = (shifted / contour - 1.0).abs();
                worst_gap = worst_gap.max(rel);
                worst_shift = worst_shift.max(shift_rel);
                rep.row(
                    ReportRow::new(format!("contour[sigma={sigma}]"), contour)
                        .t(t)
                        .x(x)
                        .y(y)
                        .k(2)
                        .oracle(bridge)
                        .pass(rel <= tol.oracle_rel && shift_rel <= tol.shift_rel),
                );
                plot.push(vec![t, x, y, sigma, bridge, contour, rel]);
            }
            let stream = derive_stream(cfg.master_seed, &[TAG_SHE, t.to_bits(), dxy.to_bits()]);
            let mc = she_moment_k_mc(t, &[x, y], 1.0, cfg.dt, LocalTimeMethod::BridgeStep, cfg.replicas.paths, &stream)?;
            let bridge = she_moment2_bridge(t, x, y, 1.0)?;
            let z = mc.z(bridge);
            let ok = z.abs() <= tol.z;
            rep.row(ReportRow::from_estimate("mc[sigma=1]", &mc).t(t).x(x).y(y).k(2).oracle(bridge).z(z).pass(ok));
            rep.check(&format!("mc_vs_bridge_t{t}_dxy{dxy}"), z.abs(), tol.z, ok);
        }
    }
    rep.check("contour_vs_bridge", worst_gap, tol.oracle_rel, worst_gap <= tol.oracle_rel);
    rep.check("contour_shift", worst_shift, tol.shift_rel, worst_shift <= tol.shift_rel);
    rep.plots.push(plot);
    Ok(rep)
}
