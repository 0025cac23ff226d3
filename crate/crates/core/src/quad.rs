//! Adaptive Gauss-Kronrod quadrature, generic over the scalar type.

use crate::{Error, Real, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: T,
    pub evals: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_intervals: usize,
}

impl<T: Real> Default for QuadOptions<T> {
    fn default() -> Self {
        Self { abs_tol: T::lit(1e-14), rel_tol: T::lit(1e-12), max_intervals: 2000 }
    }
}

fn gk15<T: Real>(f: &mut impl FnMut(T) -> T, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let c = half * (a + b);
    let h = half * (b - a);
    let fc = f(c);
    let mut rk = fc * T::lit(WGK[7]);
    let mut rg = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = h * T::lit(XGK[j]);
        let s = f(c - dx) + f(c + dx);
        rk = rk + s * T::lit(WGK[j]);
        if j % 2 == 1 {
            rg = rg + s * T::lit(WG[j / 2]);
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Integral of `f` over `[a, b]` by globally adaptive bisection.
pub fn integrate<T: Real>(
    mut f: impl FnMut(T) -> T,
    a: T,
    b: T,
    opts: QuadOptions<T>,
) -> Result<QuadResult<T>> {
    if a == b {
        return Ok(QuadResult { value: T::zero(), error: T::zero(), evals: 0 });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let mut evals = 15;
    loop {
        let total: T = parts.iter().fold(T::zero(), |s, p| s + p.2);
        let err: T = parts.iter().fold(T::zero(), |s, p| s + p.3);
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Numeric {
                what: "non-finite integrand".into(),
                estimate: total.to_f64().unwrap_or(f64::NAN),
                error: err.to_f64().unwrap_or(f64::NAN),
                evals,
            });
        }
        if err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Ok(QuadResult { value: total, error: err, evals });
        }
        if parts.len() >= opts.max_intervals {
            return Err(Error::Numeric {
                what: "interval budget exhausted".into(),
                estimate: total.to_f64().unwrap_or(f64::NAN),
                error: err.to_f64().unwrap_or(f64::NAN),
                evals,
            });
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, _, _) = parts.swap_remove(idx);
        let mid = T::lit(0.5) * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        evals += 30;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Integral over `[a, inf)` of an integrand with at least Gaussian-like
/// decay: the range is cut where `f` drops below `cut * peak`, scanning
/// outward in steps of `step`.
pub fn integrate_decaying<T: Real>(
    mut f: impl FnMut(T) -> T,
    a: T,
    step: T,
    cut: T,
    opts: QuadOptions<T>,
) -> Result<QuadResult<T>> {
    let mut peak = f(a).abs();
    let mut hi = a;
    let mut evals = 1;
    for _ in 0..100_000 {
        hi = hi + step;
        let v = f(hi).abs();
        evals += 1;
        peak = peak.max(v);
        if v <= cut * peak && hi - a > step {
            break;
        }
    }
    let mut r = integrate(f, a, hi, opts)?;
    r.evals += evals;
    Ok(r)
}

/// Integral over the real line of a function decaying in both directions.
pub fn integrate_line<T: Real>(
    mut f: impl FnMut(T) -> T,
    center: T,
    step: T,
    cut: T,
    opts: QuadOptions<T>,
) -> Result<QuadResult<T>> {
    let r = integrate_decaying(&mut f, center, step, cut, opts)?;
    let l = integrate_decaying(|s| f(center + center - s), center, step, cut, opts)?;
    Ok(QuadResult { value: r.value + l.value, error: r.error + l.error, evals: r.evals + l.evals })
}
