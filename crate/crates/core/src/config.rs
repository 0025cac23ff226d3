//! Experiment configuration: JSON schema, defaults and validation.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fields::TestFunction;
use crate::lattice::EnvKind;
use crate::{Error, Result};

/// Version of the defaults table below; recorded in every manifest.
pub const DEFAULTS_VERSION: u32 = 1;

/// Largest `k(N)` accepted by the max-statistics experiment.
pub const MAX_PARTICLES: f64 = 9.007_199_254_740_992e15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Calibrate,
    FirstMoment,
    Moments,
    Tail,
    Max,
    SheOracle,
    Selftest,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] = [
        ExperimentId::Calibrate,
        ExperimentId::FirstMoment,
        ExperimentId::Moments,
        ExperimentId::Tail,
        ExperimentId::Max,
        ExperimentId::SheOracle,
        ExperimentId::Selftest,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentId::Calibrate => "calibrate",
            ExperimentId::FirstMoment => "first_moment",
            ExperimentId::Moments => "moments",
            ExperimentId::Tail => "tail",
            ExperimentId::Max => "max",
            ExperimentId::SheOracle => "she_oracle",
            ExperimentId::Selftest => "selftest",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.replace('-', "_");
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

/// Environment family; a missing parameter is calibrated from `nu_total`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    TwoPoint {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
    },
    BetaSymmetric {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
    },
    ConstantHalf,
}

impl EnvSpec {
    pub fn resolve(&self, nu_total: f64) -> EnvKind {
        match *self {
            EnvSpec::TwoPoint { delta: Some(delta) } => EnvKind::TwoPoint { delta },
            EnvSpec::TwoPoint { delta: None } => EnvKind::two_point_for(nu_total),
            EnvSpec::BetaSymmetric { beta: Some(beta) } => EnvKind::BetaSymmetric { beta },
            EnvSpec::BetaSymmetric { beta: None } => EnvKind::beta_for(nu_total),
            EnvSpec::ConstantHalf => EnvKind::ConstantHalf,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Replicas {
    /// Environments at the largest `N`.
    pub env: usize,
    /// Give smaller `N` more environments at equal cost (capped at 16x).
    pub equal_cost: bool,
    /// Paths for continuum Monte Carlo.
    pub paths: usize,
    /// Paths for the k = 3 joint-path oracle.
    pub oracle_paths: usize,
}

impl Default for Replicas {
    fn default() -> Self {
        Self { env: 500, equal_cost: true, paths: 100_000, oracle_paths: 100_000 }
    }
}

impl Replicas {
    pub fn env_for(&self, n: u64, n_max: u64) -> usize {
        if !self.equal_cost || n >= n_max {
            return self.env;
        }
        let boost = (n_max as f64 / n as f64).powf(1.5).min(16.0);
        (self.env as f64 * boost).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// z-score bound for every statistical contract.
    pub z: f64,
    pub pass_fraction: f64,
    pub bias_rel: f64,
    pub tail_rel: f64,
    pub two_point_rel: f64,
    pub moment_rel: f64,
    pub calibration_rel: f64,
    pub gumbel_gap: f64,
    pub identity_abs: f64,
    pub oracle_rel: f64,
    pub shift_rel: f64,
    pub ks: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            z: 4.0,
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
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxSettings {
    pub c: f64,
    pub d: f64,
    pub r_n: f64,
    pub a_grid: Vec<f64>,
}

impl Default for MaxSettings {
    fn default() -> Self {
        Self { c: 1.0, d: 0.0, r_n: 0.0, a_grid: (0..=24).map(|i| -2.0 + 0.25 * i as f64).collect() }
    }
}

impl MaxSettings {
    /// `floor(exp(c sqrt(N)/2 + d N^{1/4} + r_N))`.
    pub fn particles(&self, big_n: u64) -> f64 {
        let nf = big_n as f64;
        (0.5 * self.c * nf.sqrt() + self.d * nf.powf(0.25) + self.r_n).exp().floor()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SheSettings {
    pub t_grid: Vec<f64>,
    pub dxy_grid: Vec<f64>,
    pub sigma_grid: Vec<f64>,
    /// Contour-line displacement used by the shift-invariance check.
    pub shift: f64,
}

impl Default for SheSettings {
    fn default() -> Self {
        Self { t_grid: vec![0.5, 1.0, 2.0], dxy_grid: vec![0.0, 0.5, 1.5], sigma_grid: vec![0.5, 1.0, 2.0], shift: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub env: EnvSpec,
    pub nu_total: f64,
    pub n_list: Vec<u64>,
    pub t: f64,
    pub x_grid: Vec<f64>,
    pub pairs: Vec<(f64, f64)>,
    pub test_functions: Vec<TestFunction>,
    pub moments_k: Vec<u32>,
    pub replicas: Replicas,
    pub dt: f64,
    pub master_seed: u64,
    pub tolerances: Tolerances,
    pub max: MaxSettings,
    pub she: SheSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::defaults_for(ExperimentId::Selftest)
    }
}

impl ExperimentConfig {
    /// Entry of the defaults table for one experiment.
    pub fn defaults_for(id: ExperimentId) -> Self {
        let base = Self {
            experiment: id,
            env: EnvSpec::TwoPoint { delta: None },
            nu_total: 0.5,
            n_list: vec![256, 1024, 4096],
            t: 1.0,
            x_grid: vec![-0.5, 0.0, 0.5],
            pairs: vec![(0.0, 0.0)],
            test_functions: vec![
                TestFunction::Gaussian { center: 0.0, width: 0.5 },
                TestFunction::Bump { center: 0.0, radius: 1.0 },
            ],
            moments_k: vec![2, 3],
            replicas: Replicas::default(),
            dt: 1e-3,
            master_seed: 20_240_601,
            tolerances: Tolerances::default(),
            max: MaxSettings::default(),
            she: SheSettings::default(),
        };
        match id {
            ExperimentId::Calibrate => Self {
                n_list: vec![1024, 4096],
                replicas: Replicas { env: 20_000, equal_cost: false, ..Replicas::default() },
                ..base
            },
            ExperimentId::FirstMoment => base,
            ExperimentId::Moments => Self {
                test_functions: vec![TestFunction::Gaussian { center: 0.0, width: 0.5 }],
                replicas: Replicas { env: 2000, ..Replicas::default() },
                dt: 4e-3,
                ..base
            },
            ExperimentId::Tail => Self { replicas: Replicas { env: 2000, ..Replicas::default() }, ..base },
            ExperimentId::Max => Self {
                n_list: vec![1024],
                replicas: Replicas { env: 4000, ..Replicas::default() },
                ..base
            },
            ExperimentId::SheOracle => Self { replicas: Replicas { paths: 20_000, ..Replicas::default() }, dt: 0.02, ..base },
            ExperimentId::Selftest => Self {
                n_list: vec![64, 256],
                replicas: Replicas { env: 200, equal_cost: false, paths: 2000, oracle_paths: 2000 },
                dt: 0.01,
                ..base
            },
        }
    }

    pub fn n_max(&self) -> u64 {
        self.n_list.iter().copied().max().unwrap_or(1)
    }

    pub fn env_kind(&self) -> EnvKind {
        self.env.resolve(self.nu_total)
    }

    pub fn is_free(&self) -> bool {
        matches!(self.env, EnvSpec::ConstantHalf)
    }

    /// Target noise coefficient `1/(2 nu_total)`, zero in the free case.
    pub fn sigma(&self) -> f64 {
        if self.is_free() {
            0.0
        } else {
            1.0 / (2.0 * self.nu_total)
        }
    }

    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.nu_total > 0.0 && self.nu_total.is_finite()) {
            v.push(format!("nu_total = {} violates non-degeneracy (nu_total > 0)", self.nu_total));
        }
        if self.n_list.is_empty() {
            v.push("n_list must not be empty".into());
        }
        if !(self.t > 0.0) {
            v.push(format!("t = {} must be positive", self.t));
        }
        for &n in &self.n_list {
            if n == 0 {
                v.push("n_list entry 0: N must be positive".into());
            }
        }
        let kind = self.env_kind();
        if let Err(e) = kind.validate() {
            v.push(format!("env: {e}"));
        } else if !self.is_free() && self.nu_total > 0.0 {
            for &n in self.n_list.iter().filter(|&&n| n > 0) {
                let eff = kind.nu_eff(n);
                if !((eff / self.nu_total - 1.0).abs() <= 0.2) {
                    v.push(format!(
                        "n_list entry N = {n}: calibrated nu_eff = {eff:.4} is outside 20% of nu_total = {}",
                        self.nu_total
                    ));
                }
            }
        }
        for (i, f) in self.test_functions.iter().enumerate() {
            if let Err(e) = f.validate() {
                v.push(format!("test_functions[{i}]: {e}"));
            }
        }
        if self.replicas.env == 0 || self.replicas.paths == 0 || self.replicas.oracle_paths == 0 {
            v.push("replica counts must be positive".into());
        }
        if !(self.dt > 0.0 && self.dt < self.t) {
            v.push(format!("dt = {} must lie in (0, t)", self.dt));
        }
        let tol = &self.tolerances;
        for (name, x) in [
            ("z", tol.z),
            ("pass_fraction", tol.pass_fraction),
            ("bias_rel", tol.bias_rel),
            ("tail_rel", tol.tail_rel),
            ("two_point_rel", tol.two_point_rel),
            ("moment_rel", tol.moment_rel),
            ("calibration_rel", tol.calibration_rel),
            ("gumbel_gap", tol.gumbel_gap),
            ("identity_abs", tol.identity_abs),
            ("oracle_rel", tol.oracle_rel),
            ("shift_rel", tol.shift_rel),
            ("ks", tol.ks),
        ] {
            if !(x > 0.0) {
                v.push(format!("tolerances.{name} = {x} must be positive"));
            }
        }
        if self.experiment == ExperimentId::Moments {
            for &k in &self.moments_k {
                if !(2..=3).contains(&k) {
                    v.push(format!("moments_k entry {k}: only k = 2 and k = 3 are supported"));
                }
            }
        }
        if self.experiment == ExperimentId::Max {
            for &n in &self.n_list {
                let k = self.max.particles(n);
                if !(1.0..MAX_PARTICLES).contains(&k) {
                    v.push(format!("max: k(N) for N = {n} overflows the exact integer range (k = {k:e})"));
                }
            }
            if self.max.c <= 0.0 {
                v.push("max.c must be positive".into());
            }
            if self.t != 1.0 {
                v.push(format!("max: the recentered maximum is defined at t = 1, got t = {}", self.t));
            }
        }
        if self.experiment == ExperimentId::SheOracle {
            let s = &self.she;
            if s.t_grid.iter().any(|&t| !(t > 0.0)) || s.sigma_grid.iter().any(|&x| !(x > 0.0)) {
                v.push("she: t_grid and sigma_grid entries must be positive".into());
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Parses a JSON document, reporting every unknown key and every violated
    /// constraint together.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let mut errs = unknown_keys(&value);
        errs.sort();
        let id = match value.get("experiment") {
            None => ExperimentId::Selftest,
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(vec![format!("experiment: {e}")]))?,
        };
        let mut merged = serde_json::to_value(Self::defaults_for(id)).expect("defaults serialize");
        overlay(&mut merged, value);
        let cfg: Self = match serde_json::from_value(merged) {
            Ok(cfg) => cfg,
            Err(_) if !errs.is_empty() => return Err(Error::Config(errs)),
            Err(e) => return Err(Error::Config(vec![e.to_string()])),
        };
        errs.extend(cfg.violations());
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text)
}

/// Recursively replaces entries of `base` by those of `top`; sections other
/// than `env` merge key by key. Keys absent from `base` are dropped, since
/// `unknown_keys` reports them.
fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if k != "env" && slot.is_object() && v.is_object() => overlay(slot, v),
                    Some(slot) => *slot = v,
                    None => {}
                }
            }
        }
        (b, t) => *b = t,
    }
}

fn keys(v: &Value) -> BTreeSet<String> {
    serde_json::to_value(v).ok().and_then(|v| v.as_object().map(|o| o.keys().cloned().collect())).unwrap_or_default()
}

fn check_object(v: &Value, allowed: &BTreeSet<String>, at: &str, out: &mut Vec<String>) {
    if let Some(o) = v.as_object() {
        for k in o.keys() {
            if !allowed.contains(k) {
                out.push(format!("unknown key `{k}` in {at}"));
            }
        }
    }
}

fn unknown_keys(v: &Value) -> Vec<String> {
    let d = ExperimentConfig::defaults_for(ExperimentId::Selftest);
    let dv = serde_json::to_value(&d).expect("defaults serialize");
    let mut out = Vec::new();
    check_object(v, &keys(&dv), "config", &mut out);
    let Some(o) = v.as_object() else { return out };
    for (section, dflt) in [
        ("replicas", serde_json::to_value(&d.replicas).unwrap()),
        ("tolerances", serde_json::to_value(&d.tolerances).unwrap()),
        ("max", serde_json::to_value(&d.max).unwrap()),
        ("she", serde_json::to_value(&d.she).unwrap()),
    ] {
        if let Some(sv) = o.get(section) {
            check_object(sv, &keys(&dflt), section, &mut out);
        }
    }
    if let Some(env) = o.get("env") {
        let allowed: BTreeSet<String> = match env.get("kind").and_then(Value::as_str) {
            Some("two_point") => ["kind", "delta"].iter().map(|s| s.to_string()).collect(),
            Some("beta_symmetric") => ["kind", "beta"].iter().map(|s| s.to_string()).collect(),
            _ => ["kind"].iter().map(|s| s.to_string()).collect(),
        };
        check_object(env, &allowed, "env", &mut out);
    }
    if let Some(fs) = o.get("test_functions").and_then(Value::as_array) {
        for (i, f) in fs.iter().enumerate() {
            let params: &[&str] = match f.get("name").and_then(Value::as_str) {
                Some("constant") => &["value"],
                Some("indicator") => &["lo", "hi"],
                Some("gaussian") => &["center", "width"],
                Some("bump") => &["center", "radius"],
                _ => &[],
            };
            let allowed: BTreeSet<String> = params.iter().chain(&["name"]).map(|s| s.to_string()).collect();
            check_object(f, &allowed, &format!("test_functions[{i}]"), &mut out);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_json(r#"{"experiment": "tail"}"#).unwrap();
        assert_eq!(c.nu_total, 0.5);
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!(c.replicas.paths, 100_000);
    }

    #[test]
    fn degenerate_mass_is_named() {
        let e = ExperimentConfig::from_json(r#"{"experiment": "tail", "nu_total": 0}"#).unwrap_err();
        let Error::Config(v) = e else { panic!() };
        assert!(v.iter().any(|m| m.contains("non-degeneracy")), "{v:?}");
    }

    #[test]
    fn calibration_window_names_entry() {
        let e = ExperimentConfig::from_json(r#"{"experiment": "tail", "n_list": [1, 4096]}"#).unwrap_err();
        let Error::Config(v) = e else { panic!() };
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("N = 1:"), "{v:?}");
    }

    #[test]
    fn all_unknown_keys_listed() {
        let e = ExperimentConfig::from_json(
            r#"{"experiment": "tail", "bogus": 1, "tolerances": {"zz": 3}, "env": {"kind": "two_point", "beta": 2}}"#,
        )
        .unwrap_err();
        let Error::Config(v) = e else { panic!() };
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(v.iter().any(|m| m.contains("`bogus`")));
        assert!(v.iter().any(|m| m.contains("`zz` in tolerances")));
        assert!(v.iter().any(|m| m.contains("`beta` in env")));
    }

    #[test]
    fn several_violations_reported_together() {
        let e = ExperimentConfig::from_json(r#"{"experiment": "moments", "t": -1, "moments_k": [4], "dt": 0}"#).unwrap_err();
        let Error::Config(v) = e else { panic!() };
        assert!(v.len() >= 3, "{v:?}");
    }

    #[test]
    fn max_overflow_rejected() {
        let e = ExperimentConfig::from_json(r#"{"experiment": "max", "n_list": [16384]}"#).unwrap_err();
        let Error::Config(v) = e else { panic!() };
        assert!(v.iter().any(|m| m.contains("overflows")), "{v:?}");
    }

    #[test]
    fn defaults_roundtrip_and_validate() {
        for id in ExperimentId::ALL {
            let c = ExperimentConfig::defaults_for(id);
            c.validate().unwrap();
            assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
            assert_eq!(ExperimentId::parse(&id.name().replace('_', "-")), Some(id));
        }
    }

    #[test]
    fn equal_cost_budget() {
        let r = Replicas { env: 100, equal_cost: true, ..Replicas::default() };
        assert_eq!(r.env_for(4096, 4096), 100);
        assert_eq!(r.env_for(1024, 4096), 800);
        assert_eq!(r.env_for(256, 4096), 1600);
    }
}
