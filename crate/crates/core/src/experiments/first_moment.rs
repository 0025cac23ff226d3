use crate::config::{ExperimentConfig, ExperimentId};
use crate::experiments::{fraction, shrinking, EnsembleCache};
use crate::fields::annealed_x_field;
use crate::measure::{Centering, ModerateDeviationScaling};
use crate::report::{ExperimentReport, PlotTable, ReportRow};
use crate::Result;

/// Environment average of the density field against the tilted binomial sum
/// (z-test), and that sum against `int phi p_t` (bias column).
pub fn exp_first_moment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let cache = EnsembleCache::new();
    let mut rep = ExperimentReport::new(ExperimentId::FirstMoment);
    let mut plot = PlotTable::new("first_moment", &["N", "phi_index", "env_mean", "stderr", "binomial_sum", "heat_pairing", "bias"]);
    let z = cfg.tolerances.z;
    let mut z_ok = Vec::new();
    let mut biases = vec![Vec::new(); cfg.test_functions.len()];
    let n_max = cfg.n_max();
    let mut ladder = cfg.n_list.clone();
    ladder.sort_unstable();
    for &big_n in &ladder {
        let s = ModerateDeviationScaling::new(big_n, cfg.t)?;
        let reps = cfg.replicas.env_for(big_n, n_max);
        let ens = cache.get(cfg.env_kind(), big_n, cfg.t, reps, &cfg.test_functions, &[], cfg.master_seed)?;
        for (i, phi) in cfg.test_functions.iter().enumerate() {
            let est = ens.x_moment(phi, 1);
            let exact = annealed_x_field(&s, phi, Centering::Lattice);
            let heat = phi.heat_pairing(cfg.t)?;
            let bias = exact / heat - 1.0;
            let zi = est.z(exact);
            z_ok.push(zi.abs() <= z);
            rep.row(
                ReportRow::from_estimate(format!("x_field[{}]", phi.label()), &est)
                    .n(big_n)
                    .t(cfg.t)
                    .k(1)
                    .oracle(exact)
                    .z(zi)
                    .pass(zi.abs() <= z),
            );
            rep.row(ReportRow::new(format!("bias[{}]", phi.label()), bias).n(big_n).t(cfg.t).oracle(0.0));
            biases[i].push(bias);
            plot.push(vec![big_n as f64, i as f64, est.mean, est.stderr, exact, heat, bias]);
            if big_n == n_max && big_n >= 4096 {
                rep.check(
                    &format!("bias_N{big_n}[{}]", phi.label()),
                    bias.abs(),
                    cfg.tolerances.bias_rel,
                    bias.abs() <= cfg.tolerances.bias_rel,
                );
            }
        }
    }
    let f = fraction(&z_ok);
    rep.check("z_fraction", f, cfg.tolerances.pass_fraction, f >= cfg.tolerances.pass_fraction);
    for (phi, b) in cfg.test_functions.iter().zip(&biases) {
        let ok = shrinking(b);
        rep.check(&format!("bias_shrinks[{}]", phi.label()), b.last().copied().unwrap_or(0.0).abs(), 0.0, ok);
    }
    rep.plots.push(plot);
    Ok(rep)
}
