use crate::config::{ExperimentConfig, ExperimentId};
use crate::experiments::TAG_CALIBRATE;
use crate::lattice::{env_prob, EnvModel};
use crate::report::{ExperimentReport, PlotTable, ReportRow};
use crate::rng::{derive_stream, RngStream};
use crate::stats::MomentEstimate;
use crate::{par, Error, Result};

/// Final gap `|D_n|` and coincidence count `H_n` of two walks in one environment.
fn pair_walk(model: &EnvModel, n: u64, stream: &RngStream) -> (f64, f64) {
    let env = stream.child(0);
    let mut rng = stream.child(1).rng();
    let (mut x, mut y) = (0i64, 0i64);
    let mut h = 0u64;
    for m in 0..n {
        let ux = rng.uniform();
        let uy = rng.uniform();
        let px = env_prob(model, &env, m, x);
        if x == y {
            h += 1;
            x += if ux < px { 1 } else { -1 };
            y += if uy < px { 1 } else { -1 };
        } else {
            let py = env_prob(model, &env, m, y);
            x += if ux < px { 1 } else { -1 };
            y += if uy < py { 1 } else { -1 };
        }
    }
    ((x - y).unsigned_abs() as f64, h as f64)
}

/// `sqrt(N) E|D_{Nt}| / (4 E[H_{Nt}])` from `reps` pairs of walks, each pair
/// in its own environment. The standard error is the delta-method error of
/// the ratio.
pub fn calibrate_stickiness(model: &EnvModel, big_n: u64, t: f64, reps: usize, stream: &RngStream) -> Result<MomentEstimate> {
    if reps < 2 {
        return Err(Error::Domain("calibration needs at least two replicas".into()));
    }
    let n = (big_n as f64 * t).round() as u64;
    let pairs = par::map_indexed(reps, |r| pair_walk(model, n, &stream.child(r as u64)));
    let nr = reps as f64;
    let d_mean = pairs.iter().map(|p| p.0).sum::<f64>() / nr;
    let h_mean = pairs.iter().map(|p| p.1).sum::<f64>() / nr;
    if h_mean == 0.0 {
        return Err(Error::Calibration(format!(
            "no coincident steps in {reps} pairs at N = {big_n}: stickiness is undetermined"
        )));
    }
    let ratio = d_mean / h_mean;
    let resid: f64 = pairs.iter().map(|&(d, h)| (d - ratio * h).powi(2)).sum::<f64>() / (nr - 1.0);
    let se = (resid / nr).sqrt() / h_mean;
    let c = (big_n as f64).sqrt() / 4.0;
    Ok(MomentEstimate { mean: c * ratio, stderr: c * se, n_replicas: reps as u64, seed: Some(stream.clone()) })
}

pub fn exp_calibrate(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(ExperimentId::Calibrate);
    let kind = cfg.env_kind();
    let z = cfg.tolerances.z;
    let mut plot = PlotTable::new("calibrate", &["N", "estimate", "stderr", "prediction", "nu_eff"]);
    for &big_n in &cfg.n_list {
        let model = EnvModel::new(kind, big_n)?;
        let stream = derive_stream(cfg.master_seed, &[TAG_CALIBRATE, big_n]);
        let reps = cfg.replicas.env_for(big_n, cfg.n_max()).max(1000);
        let est = calibrate_stickiness(&model, big_n, cfg.t, reps, &stream)?;
        let pred = kind.macro_stickiness(big_n);
        let gap = est.mean - pred;
        let pass = gap.abs() <= cfg.tolerances.calibration_rel * pred + z * est.stderr;
        rep.row(ReportRow::from_estimate("nu_hat", &est).n(big_n).t(cfg.t).oracle(pred).z(est.z(pred)).pass(pass));
        plot.push(vec![big_n as f64, est.mean, est.stderr, pred, kind.nu_eff(big_n)]);
        if big_n >= 1024 {
            rep.check(&format!("calibration_N{big_n}"), gap.abs() / pred, cfg.tolerances.calibration_rel, pass);
        }
    }
    rep.plots.push(plot);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::EnvKind;

    #[test]
    fn free_walks_give_quarter_root_n() {
        let model = EnvModel::new(EnvKind::ConstantHalf, 256).unwrap();
        let est = calibrate_stickiness(&model, 256, 1.0, 4000, &derive_stream(3, &[])).unwrap();
        assert!((est.mean - 4.0).abs() <= 0.1 * 4.0 + 4.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn stderr_halves_with_four_times_the_replicas() {
        let model = EnvModel::new(EnvKind::two_point_for(0.5), 256).unwrap();
        let s = derive_stream(4, &[]);
        let a = calibrate_stickiness(&model, 256, 1.0, 1000, &s).unwrap();
        let b = calibrate_stickiness(&model, 256, 1.0, 4000, &s).unwrap();
        let r = b.stderr / a.stderr;
        assert!((r - 0.5).abs() <= 0.15, "{r}");
    }

    #[test]
    fn no_coincidence_is_an_error() {
        let model = EnvModel::new(EnvKind::ConstantHalf, 1).unwrap();
        let e = calibrate_stickiness(&model, 1, 1e-9, 10, &derive_stream(1, &[])).unwrap_err();
        assert!(matches!(e, Error::Calibration(_)));
    }
}
