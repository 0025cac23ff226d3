use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use stickylab::config::{ExperimentConfig, ExperimentId, DEFAULTS_VERSION};
use stickylab::report::{host_descriptor, sha256_hex, ExperimentSummary, RunManifest, CONFIG_FILE, CSV_SCHEMA_VERSION};
use stickylab::{experiments, par, Error};

#[derive(Parser, Debug)]
#[command(name = "stickylab", version, about = "Sticky random walks, sticky Brownian motion and SHE moment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pair-walk estimate of the stickiness against the environment prediction.
    Calibrate(RunArgs),
    /// Annealed first moment of the density field.
    FirstMoment(RunArgs),
    /// Second and third moments of the density field against continuum oracles.
    Moments(RunArgs),
    /// Tail-field first-moment identity and two-point correlation.
    Tail(RunArgs),
    /// Maximum of many walkers: pathwise identity, mixture and Gumbel checks.
    Max(RunArgs),
    /// Bridge, contour and Monte Carlo formulas for the second moment.
    SheOracle(RunArgs),
    /// Fast closed-form and degenerate-case checks.
    Selftest(RunArgs),
    /// Print the default configuration of an experiment as JSON.
    Template {
        #[arg(value_enum)]
        experiment: TemplateId,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TemplateId {
    Calibrate,
    FirstMoment,
    Moments,
    Tail,
    Max,
    SheOracle,
    Selftest,
}

impl From<TemplateId> for ExperimentId {
    fn from(t: TemplateId) -> Self {
        match t {
            TemplateId::Calibrate => ExperimentId::Calibrate,
            TemplateId::FirstMoment => ExperimentId::FirstMoment,
            TemplateId::Moments => ExperimentId::Moments,
            TemplateId::Tail => ExperimentId::Tail,
            TemplateId::Max => ExperimentId::Max,
            TemplateId::SheOracle => ExperimentId::SheOracle,
            TemplateId::Selftest => ExperimentId::Selftest,
        }
    }
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// JSON configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parent directory for the timestamped run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Multiplies the z-score bound of every statistical contract.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
}

fn load_config(id: ExperimentId, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        None => ExperimentConfig::defaults_for(id),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut value: Value = serde_json::from_str(&text)?;
            let obj = value
                .as_object_mut()
                .ok_or_else(|| Error::Config(vec!["configuration must be a JSON object".into()]))?;
            match obj.get("experiment").and_then(Value::as_str) {
                None => {
                    obj.insert("experiment".into(), Value::String(id.name().into()));
                }
                Some(name) if ExperimentId::parse(name) != Some(id) => {
                    return Err(Error::Config(vec![format!(
                        "configuration is for experiment `{name}` but the subcommand runs `{}`",
                        id.name()
                    )]));
                }
                Some(_) => {}
            }
            ExperimentConfig::from_json(&value.to_string())?
        }
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if !(args.tolerance_scale > 0.0) {
        return Err(Error::Config(vec![format!("--tolerance-scale = {} must be positive", args.tolerance_scale)]));
    }
    cfg.tolerances.z *= args.tolerance_scale;
    cfg.validate()?;
    Ok(cfg)
}

/// Creates `<parent>/<experiment>-<timestamp>`, adding a suffix if taken.
fn fresh_dir(parent: &Path, id: ExperimentId) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f");
    let base = format!("{}-{stamp}", id.name());
    for i in 0..1000 {
        let name = if i == 0 { base.clone() } else { format!("{base}-{i}") };
        let dir = parent.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    bail!("no fresh run directory available under {}", parent.display())
}

fn run(id: ExperimentId, args: &RunArgs) -> anyhow::Result<bool> {
    let cfg = load_config(id, args)?;
    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);
    let dir = fresh_dir(&args.out, id)?;
    let config_json = cfg.to_json();
    std::fs::write(dir.join(CONFIG_FILE), &config_json)?;

    let started = chrono::Local::now();
    let t0 = Instant::now();
    let report = par::with_threads(threads, || experiments::run(&cfg))?;
    let wall = t0.elapsed().as_secs_f64();
    let finished = chrono::Local::now();

    let mut files = vec![CONFIG_FILE.to_string()];
    files.extend(report.write_to(&dir)?);
    let manifest = RunManifest {
        artifact_version: format!("stickylab {}", env!("CARGO_PKG_VERSION")),
        csv_schema_version: CSV_SCHEMA_VERSION,
        defaults_version: DEFAULTS_VERSION,
        config_file: CONFIG_FILE.into(),
        config_sha256: sha256_hex(config_json.as_bytes()),
        master_seed: cfg.master_seed,
        threads,
        started: started.to_rfc3339(),
        finished: finished.to_rfc3339(),
        wall_seconds: wall,
        host: host_descriptor(),
        files,
        experiments: vec![ExperimentSummary::of(&report)],
    };
    manifest.write_to(&dir)?;

    for c in report.failures() {
        eprintln!(
            "FAIL {}: value {} threshold {}",
            c.observable.trim_start_matches("check:"),
            c.estimate,
            c.oracle.map(|o| o.to_string()).unwrap_or_default()
        );
    }
    let passed = report.passed();
    println!(
        "{} {}: {} of {} contracts passed in {wall:.1}s; output in {}",
        if passed { "PASS" } else { "FAIL" },
        id.name(),
        report.checks.len() - report.failures().count(),
        report.checks.len(),
        dir.display()
    );
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (id, args) = match cli.command {
        Command::Template { experiment } => {
            println!("{}", ExperimentConfig::defaults_for(experiment.into()).to_json());
            return ExitCode::SUCCESS;
        }
        Command::Calibrate(a) => (ExperimentId::Calibrate, a),
        Command::FirstMoment(a) => (ExperimentId::FirstMoment, a),
        Command::Moments(a) => (ExperimentId::Moments, a),
        Command::Tail(a) => (ExperimentId::Tail, a),
        Command::Max(a) => (ExperimentId::Max, a),
        Command::SheOracle(a) => (ExperimentId::SheOracle, a),
        Command::Selftest(a) => (ExperimentId::Selftest, a),
    };
    match run(id, &args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            match e.downcast_ref::<Error>() {
                Some(Error::Config(list)) => {
                    eprintln!("invalid configuration:");
                    for v in list {
                        eprintln!("  - {v}");
                    }
                }
                _ => eprintln!("error: {e:#}"),
            }
            ExitCode::from(2)
        }
    }
}
