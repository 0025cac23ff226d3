use crate::config::{ExperimentConfig, ExperimentId};
use crate::experiments::{TAG_MAX_DIRECT, TAG_MAX_MIXTURE};
use crate::fields::{max_cdf, tail_field, TailConvention};
use crate::lattice::{binomial_kernel, evolve, EnvModel, QuenchedKernel};
use crate::measure::{Centering, ModerateDeviationScaling};
use crate::report::{ExperimentReport, PlotTable, ReportRow};
use crate::rng::derive_stream;
use crate::stats::{combined_stderr, MomentEstimate};
use crate::{par, Error, Result};

/// Threshold `N^{3/4} + N^{1/4}(r_N - log(N)/4 + a)` of the recentered maximum.
pub fn max_threshold(big_n: u64, r_n: f64, a: f64) -> f64 {
    let nf = big_n as f64;
    nf.powf(0.75) + nf.powf(0.25) * (r_n - 0.25 * nf.ln() + a)
}

/// Per `a`: the direct quenched CDF `(1 - K[m+1, inf))^k` and the same
/// quantity rebuilt from the continuum-tilted tail field,
/// `(1 - e^{-sqrt(N)/2 - a - r_N} F_N(1, x'(a)))^k`.
fn both_forms(k_kernel: &QuenchedKernel<f64>, s: &ModerateDeviationScaling, k: u64, r_n: f64, a_grid: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let nf = s.nf();
    a_grid
        .iter()
        .map(|&a| {
            let m = max_threshold(s.big_n, r_n, a);
            let direct = max_cdf(k_kernel, k, m.floor() as i64);
            let x = (r_n - 0.25 * nf.ln() + a) / nf.powf(0.25);
            let f = tail_field(k_kernel, s, x, Centering::Continuum, TailConvention::Inclusive)?;
            let p = (-(0.5 * nf.sqrt() + a + r_n)).exp() * f;
            let rebuilt = (k as f64 * (-p).ln_1p()).exp();
            let mixture = (-(k as f64) * p).exp();
            Ok((direct, rebuilt, mixture))
        })
        .collect()
}

/// Gumbel fit of the maximum of `k` independent simple random walks.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeGumbel {
    /// Real centering with `k P(S_N >= b) = 1`, log-linear between sites.
    pub b: f64,
    /// Local scale: `-2 / (log T(y+2) - log T(y))` at the centering site.
    pub h: f64,
    /// `(a, exact CDF, Gumbel CDF)` at every supported site with `a` in `[-2, 4]`.
    pub points: Vec<(f64, f64, f64)>,
    pub sup_gap: f64,
}

pub fn gumbel_free_case(big_n: u64, k: u64) -> Result<FreeGumbel> {
    let kern = binomial_kernel(big_n);
    let kf = k as f64;
    let lt = |y: i64| (kf * kern.tail(y)).ln();
    let mut y0 = kern.site(0);
    while y0 + 2 <= kern.last_site() && lt(y0 + 2) >= 0.0 {
        y0 += 2;
    }
    if y0 + 2 > kern.last_site() {
        return Err(Error::Domain(format!("k = {k} exceeds the support of {big_n} steps")));
    }
    let (l0, l1) = (lt(y0), lt(y0 + 2));
    let b = y0 as f64 + 2.0 * l0 / (l0 - l1);
    let h = 2.0 / (l0 - l1);
    let mut points = Vec::new();
    let mut sup_gap = 0.0f64;
    for (s, _) in kern.sites() {
        let a = ((s + 2) as f64 - b) / h;
        if !(-2.0..=4.0).contains(&a) {
            continue;
        }
        let exact = max_cdf(&kern, k, s);
        let gumbel = (-(-a).exp()).exp();
        sup_gap = sup_gap.max((exact - gumbel).abs());
        points.push((a, exact, gumbel));
    }
    Ok(FreeGumbel { b, h, points, sup_gap })
}

pub fn exp_max_statistics(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(ExperimentId::Max);
    let set = &cfg.max;
    let z = cfg.tolerances.z;
    let mut cdf_plot = PlotTable::new("max_cdf", &["N", "a", "direct", "direct_stderr", "mixture", "mixture_stderr", "gumbel"]);
    let mut free_plot = PlotTable::new("max_free", &["N", "a", "exact", "gumbel"]);
    for &big_n in &cfg.n_list {
        let k = set.particles(big_n) as u64;
        let s = ModerateDeviationScaling::new(big_n, 1.0)?;
        let reps = cfg.replicas.env_for(big_n, cfg.n_max());
        let na = set.a_grid.len();

        if !cfg.is_free() {
            let model = EnvModel::new(cfg.env_kind(), big_n)?;
            let run = |tag: u64| -> Result<Vec<Vec<(f64, f64, f64)>>> {
                let stream = derive_stream(cfg.master_seed, &[tag, big_n]);
                par::map_indexed(reps, |r| {
                    let kern = evolve::<f64>(&model, &stream.child(r as u64), s.n)?;
                    both_forms(&kern, &s, k, set.r_n, &set.a_grid)
                })
                .into_iter()
                .collect()
            };
            let direct_set = run(TAG_MAX_DIRECT)?;
            let mixture_set = run(TAG_MAX_MIXTURE)?;

            let identity_err = direct_set.iter().flatten().map(|&(d, r, _)| (d - r).abs()).fold(0.0, f64::max);
            let tol = cfg.tolerances.identity_abs;
            rep.check(&format!("pathwise_identity_N{big_n}"), identity_err, tol, identity_err <= tol);

            let mut sup_gap = 0.0f64;
            let mut consistent = true;
            for (j, &a) in set.a_grid.iter().enumerate() {
                let da: Vec<f64> = direct_set.iter().map(|v| v[j].0).collect();
                let ma: Vec<f64> = mixture_set.iter().map(|v| v[j].2).collect();
                let d = MomentEstimate::from_samples(&da, None);
                let m = MomentEstimate::from_samples(&ma, None);
                let se = combined_stderr(&d, &m);
                let gap = d.mean - m.mean;
                let ok = gap.abs() <= cfg.tolerances.gumbel_gap + z * se;
                consistent &= ok;
                sup_gap = sup_gap.max(gap.abs());
                let gumbel = (-(-a).exp()).exp();
                rep.row(ReportRow::from_estimate("max_cdf_direct", &d).n(big_n).t(1.0).x(a).k(0).oracle(m.mean).z(crate::stats::z_score(gap, se)).pass(ok));
                rep.row(ReportRow::from_estimate("max_cdf_vs_gumbel", &d).n(big_n).t(1.0).x(a).oracle(gumbel));
                cdf_plot.push(vec![big_n as f64, a, d.mean, d.stderr, m.mean, m.stderr, gumbel]);
            }
            debug_assert_eq!(direct_set.first().map_or(na, |v| v.len()), na);
            rep.check(&format!("mixture_sup_gap_N{big_n}"), sup_gap, cfg.tolerances.gumbel_gap, consistent);
        }

        let free = gumbel_free_case(big_n, k)?;
        for &(a, exact, gumbel) in &free.points {
            rep.row(ReportRow::new("free_max_cdf", exact).n(big_n).t(1.0).x(a).oracle(gumbel));
            free_plot.push(vec![big_n as f64, a, exact, gumbel]);
        }
        let tol = cfg.tolerances.gumbel_gap;
        rep.check(&format!("free_gumbel_sup_gap_N{big_n}"), free.sup_gap, tol, free.sup_gap <= tol && !free.points.is_empty());
    }
    rep.plots.push(cdf_plot);
    rep.plots.push(free_plot);
    Ok(rep)
}
