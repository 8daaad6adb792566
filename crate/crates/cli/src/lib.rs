//! Command layer of the `stochburgers` binary: configuration, dispatch to the
//! simulation and verification routines, and manifest-stamped artifacts.

pub mod config;
pub mod output;

use config::{RunConfig, TestFunctionKind};
use output::{emit, fmt_f64, sha256_hex, Artifact, Csv};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::time::Instant;
use stochburgers::dynamics::{integrate, InitialCondition};
use stochburgers::rng::{derive_seed, path_rng};
use stochburgers::stats::{self, Check};
use stochburgers::{Error, NoiseModel, SpectralField, WeightedBasis};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

pub const OUT_DIR_ENV: &str = "STOCHBURGERS_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "stochburgers-out";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration rejected:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::GuardTripped { .. } | Error::NonFinite { .. } | Error::ProjectionLoss { .. } | Error::ShiftMismatch { .. } => {
                CliError::Numerical(e.to_string())
            }
            Error::InvalidParameter(_) | Error::BasisMismatch { .. } | Error::StepTooLarge { .. } | Error::MassMismatch { .. } => {
                CliError::Config(vec![e.to_string()])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Task {
    Simulate,
    Verify(String),
    CompareLimit,
}

impl Task {
    pub fn command(&self) -> &str {
        match self {
            Task::Simulate => "simulate",
            Task::Verify(_) => "verify",
            Task::CompareLimit => "compare-limit",
        }
    }

    fn stem(&self) -> String {
        match self {
            Task::Verify(s) => format!("verify-{s}"),
            t => t.command().to_string(),
        }
    }

    fn requirement_key(&self) -> &str {
        match self {
            Task::Verify(s) => s,
            t => t.command(),
        }
    }
}

/// One evaluated check and whether it decides the exit code.
#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub status: &'static str,
    pub mandatory: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub samples: usize,
    pub detail: String,
}

impl CheckLine {
    fn new(c: Check, mandatory: bool) -> Self {
        Self {
            status: if c.passed { "PASS" } else { "FAIL" },
            name: c.name,
            mandatory,
            statistic: c.statistic,
            threshold: c.threshold,
            samples: c.samples,
            detail: c.detail,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == "PASS"
    }

    pub fn summary(&self) -> String {
        let tag = if self.mandatory { "" } else { " (optional)" };
        format!(
            "{} {}{tag}: statistic {:.6e}, threshold {:.6e}, samples {}{}",
            self.status,
            self.name,
            self.statistic,
            self.threshold,
            self.samples,
            if self.detail.is_empty() { String::new() } else { format!(" [{}]", self.detail) }
        )
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: u8,
    pub checks: Vec<CheckLine>,
    pub artifacts: Vec<Artifact>,
    pub manifest: PathBuf,
    pub config_hash: String,
    /// set when the run stopped on a numerical failure
    pub failure: Option<String>,
}

impl Outcome {
    pub fn artifact(&self, suffix: &str) -> Option<&Path> {
        self.artifacts.iter().map(|a| a.path.as_path()).find(|p| p.to_string_lossy().ends_with(suffix))
    }
}

pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(cfg.canonical_json().as_bytes())
}

struct Work {
    checks: Vec<CheckLine>,
    details: Value,
    csv: Option<Vec<u8>>,
    failure: Option<String>,
}

/// Runs one task and writes its artifacts and manifest into `out_dir`.
pub fn execute(task: &Task, cfg: &RunConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    let mut problems = cfg.violations();
    problems.extend(cfg.requirements(task.requirement_key()));
    if let Task::Verify(s) = task {
        if !config::SUITES.contains(&s.as_str()) {
            problems.push(format!("unknown suite `{s}` (one of {})", config::SUITES.join(", ")));
        }
        if let Some(sel) = cfg.experiment.suite.as_deref().filter(|sel| sel != s) {
            problems.push(format!("experiment.suite = `{sel}` but the command asks for `{s}`"));
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Config(problems));
    }
    let basis = WeightedBasis::new(cfg.basis.nu, cfg.basis.n_modes, cfg.basis.n_quad)?;
    let model = NoiseModel::geometric(&basis, cfg.noise.sigma, cfg.noise.rho, cfg.noise.k_noise, cfg.noise.q_max)?;

    let hash = config_hash(cfg);
    let start = Instant::now();
    let work = match task {
        Task::Simulate => simulate(cfg, &basis, &model)?,
        Task::Verify(suite) => verify(suite, cfg, &basis, &model)?,
        Task::CompareLimit => compare_limit(cfg, &basis, &model)?,
    };
    let wall = start.elapsed().as_secs_f64();

    let base = format!("{}-{}", task.stem(), &hash[..16]);
    let mut artifacts = Vec::new();
    if let Some(csv) = &work.csv {
        artifacts.push(emit(out_dir.join(format!("{base}.csv")), csv)?);
    }
    let passed = work.checks.iter().filter(|c| c.mandatory).all(CheckLine::passed);
    if !matches!(task, Task::Simulate) {
        let report = json!({
            "command": task.command(),
            "suite": suite_name(task),
            "config_hash": hash,
            "passed": passed,
            "checks": work.checks,
            "details": work.details,
        });
        artifacts.push(emit(out_dir.join(format!("{base}.report.json")), &pretty(&report))?);
        let mut text = format!("{} {} (config {})\n", task.command(), suite_name(task).unwrap_or(""), &hash[..16]);
        for c in &work.checks {
            text.push_str(&c.summary());
            text.push('\n');
        }
        text.push_str(if passed { "overall PASS\n" } else { "overall FAIL\n" });
        artifacts.push(emit(out_dir.join(format!("{base}.summary.txt")), text.as_bytes())?);
    }

    let exit_code = if work.failure.is_some() {
        EXIT_NUMERICAL
    } else if passed {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    };
    let manifest = json!({
        "tool": "stochburgers",
        "version": env!("CARGO_PKG_VERSION"),
        "command": task.command(),
        "suite": suite_name(task),
        "config_hash": hash,
        "seed": cfg.ensemble.root_seed,
        "wall_time_s": wall,
        "exit_code": exit_code,
        "failure": work.failure,
        "summary": if matches!(task, Task::Simulate) { work.details.clone() } else { json!({ "passed": passed }) },
        "artifacts": artifacts,
        "config": cfg,
    });
    let manifest_path = out_dir.join(format!("{base}.manifest.json"));
    emit(manifest_path.clone(), &pretty(&manifest))?;
    Ok(Outcome { exit_code, checks: work.checks, artifacts, manifest: manifest_path, config_hash: hash, failure: work.failure })
}

/// Re-executes the task recorded in a manifest.
pub fn rerun(manifest_text: &str, out_dir: &Path) -> Result<Outcome, CliError> {
    let v: Value = serde_json::from_str(manifest_text).map_err(|e| CliError::Config(vec![format!("malformed manifest: {e}")]))?;
    let task = match (v.get("command").and_then(Value::as_str), v.get("suite").and_then(Value::as_str)) {
        (Some("simulate"), _) => Task::Simulate,
        (Some("compare-limit"), _) => Task::CompareLimit,
        (Some("verify"), Some(s)) => Task::Verify(s.to_string()),
        (c, s) => return Err(CliError::Config(vec![format!("manifest names no runnable command ({c:?}, {s:?})")])),
    };
    let cfg = config::parse_any(manifest_text).map_err(CliError::Config)?;
    execute(&task, &cfg, out_dir)
}

fn suite_name(task: &Task) -> Option<&str> {
    match task {
        Task::Verify(s) => Some(s),
        Task::CompareLimit => Some("diffusion"),
        Task::Simulate => None,
    }
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s.into_bytes()
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report serializes")
}

fn simulate(cfg: &RunConfig, basis: &WeightedBasis, model: &NoiseModel) -> Result<Work, CliError> {
    let u0 = cfg.ic.build(basis)?;
    let mut rng = path_rng(cfg.ensemble.root_seed, 0);
    let (traj, failure) = match integrate(basis, model, &cfg.stepper, &u0, &mut rng) {
        Ok(t) => (t, None),
        Err(f) => match CliError::from(f.error.clone()) {
            CliError::Numerical(msg) => (f.partial, Some(msg)),
            other => return Err(other),
        },
    };
    let n = basis.n_modes();
    let mut header = vec!["tau".to_string()];
    header.extend((0..n).map(|k| format!("u_{k}")));
    header.extend(["mass", "sup_norm", "l2k", "h1k", "tail_energy", "guard_tripped"].map(String::from));
    let mut csv = Csv::new(&header);
    for ((t, u), d) in traj.times.iter().zip(&traj.states).zip(&traj.diagnostics) {
        let mut row = vec![fmt_f64(*t)];
        row.extend(u.coeffs().iter().map(|&c| fmt_f64(c)));
        row.extend([d.mass, d.sup_norm, d.l2k_norm, d.h1k_norm, d.tail_energy].map(fmt_f64));
        row.push(u8::from(d.guard_tripped).to_string());
        csv.row(&row);
    }
    let m0 = traj.diagnostics.first().map_or(0.0, |d| d.mass);
    let drift = traj.diagnostics.iter().map(|d| (d.mass - m0).abs()).fold(0.0, f64::max);
    let sup = traj.diagnostics.iter().map(|d| d.sup_norm).fold(0.0, f64::max);
    let details = json!({
        "rows": traj.len(),
        "final_tau": traj.times.last(),
        "initial_mass": m0,
        "max_mass_drift": drift,
        "initial_sup_norm": traj.diagnostics.first().map(|d| d.sup_norm),
        "max_sup_norm": sup,
        "final_h1k": traj.diagnostics.last().map(|d| d.h1k_norm),
        "final_tail_energy": traj.diagnostics.last().map(|d| d.tail_energy),
        "guard_tripped": traj.diagnostics.iter().any(|d| d.guard_tripped),
    });
    Ok(Work { checks: Vec::new(), details, csv: Some(csv.into_bytes()), failure })
}

fn mandatory(checks: Vec<Check>) -> Vec<CheckLine> {
    checks.into_iter().map(|c| CheckLine::new(c, true)).collect()
}

fn verify(suite: &str, cfg: &RunConfig, basis: &WeightedBasis, model: &NoiseModel) -> Result<Work, CliError> {
    let ex = &cfg.experiment;
    let seed = cfg.ensemble.root_seed;
    let (checks, details) = match suite {
        "basis" => {
            let r = stats::verify_basis(basis, ex.n_fields, seed);
            (mandatory(r.checks()), to_value(&r))
        }
        "conservation" => {
            let st = &cfg.stepper;
            let r = stats::verify_conservation(basis, model, st.dt, st.epsilon, ex.mass_steps, ex.n_ics, ex.sup_horizon, seed)?;
            (mandatory(r.checks()), to_value(&r))
        }
        "profile" => {
            let r = stats::verify_profile(basis, cfg.ic_mass(), ex.profile_t_end, cfg.stepper.dt)?;
            (mandatory(r.checks()), to_value(&r))
        }
        "ou" => {
            let r = stats::verify_ou_law(model, cfg.stepper.epsilon, cfg.ensemble.n_paths, seed, &ex.lags);
            (mandatory(r.checks()), to_value(&r))
        }
        "uw" => {
            let cases = stats::verify_uw_suite(basis, model, ex.n_samples, seed)?;
            let checks = cases.iter().flat_map(|c| c.report.checks(&format!("uw_{}_e{}", c.field, c.probe))).collect();
            (mandatory(checks), to_value(&cases))
        }
        "contraction" => {
            let pairs = contraction_pairs(cfg, basis)?;
            let r = stats::verify_contraction(basis, model, &cfg.stepper, &pairs, ex.noise_paths, seed, ex.rel_tol)?;
            (mandatory(r.checks()), to_value(&r))
        }
        "corrector" => {
            let f = match ex.test_function {
                TestFunctionKind::Linear => stats::TestFunction::Linear,
                TestFunctionKind::Quadratic => stats::TestFunction::Quadratic,
                TestFunctionKind::Sine => stats::TestFunction::Sine { freq: ex.freq, phase: ex.phase },
            };
            let spec = stats::CorrectorSpec {
                basis,
                model,
                ic: cfg.ic.clone(),
                n_paths: cfg.ensemble.n_paths,
                root_seed: seed,
                epsilons: ex.epsilons.clone().unwrap_or_default(),
                checkpoints: ex.checkpoints.clone(),
                f,
                phi: SpectralField::mode(basis, ex.probe),
                r_max: cfg.stepper.r_max,
            };
            let r = stats::verify_corrector_scaling(&spec)?;
            // F₃/F₄ are optional probes
            let checks = r.checks().into_iter().enumerate().map(|(i, c)| CheckLine::new(c, i == 0)).collect();
            (checks, to_value(&r))
        }
        "diffusion" => {
            let r = stats::verify_diffusion_limit(&diffusion_spec(cfg, basis, model))?;
            (mandatory(r.checks()), to_value(&r))
        }
        "stationarity" => {
            let spec = stats::EnsembleSpec {
                basis,
                model,
                stepper: cfg.stepper.clone(),
                ic: cfg.ic.clone(),
                n_paths: cfg.ensemble.n_paths,
                root_seed: seed,
                functionals: cfg.ensemble.functionals.clone(),
                observe_times: vec![ex.tau1, ex.tau2],
            };
            let r = stats::verify_stationarity(&spec, ex.tau1, ex.tau2, ex.repetitions, ex.min_pass, ex.alpha)?;
            (mandatory(r.checks()), to_value(&r))
        }
        other => return Err(CliError::Config(vec![format!("unknown suite `{other}`")])),
    };
    Ok(Work { checks, details, csv: None, failure: None })
}

/// Bump against N-wave, then random initial conditions, all sharing the configured
/// mass; the second member of each pair uses `experiment.second_mass` when given.
fn contraction_pairs(cfg: &RunConfig, basis: &WeightedBasis) -> Result<Vec<(SpectralField, SpectralField)>, CliError> {
    let m = cfg.ic_mass();
    let m2 = cfg.experiment.second_mass.unwrap_or(m);
    let (k_max, amp) = match cfg.ic {
        InitialCondition::Random { k_max, amp, .. } => (k_max, amp),
        _ => (8.min(basis.n_modes() - 1), 0.3),
    };
    let seed = cfg.ensemble.root_seed;
    (0..cfg.experiment.n_pairs as u64)
        .map(|i| {
            if i == 0 {
                let a = InitialCondition::Bump { mass: m }.build(basis)?;
                let b = InitialCondition::Nwave { mass: m2, amp: amp.max(0.3) }.build(basis)?;
                return Ok((a, b));
            }
            let a = InitialCondition::Random { mass: m, k_max, amp, seed: derive_seed(seed, 2 * i) }.build(basis)?;
            let b = InitialCondition::Random { mass: m2, k_max, amp, seed: derive_seed(seed, 2 * i + 1) }.build(basis)?;
            Ok((a, b))
        })
        .collect()
}

fn diffusion_spec<'a>(cfg: &RunConfig, basis: &'a WeightedBasis, model: &'a NoiseModel) -> stats::DiffusionSpec<'a> {
    let ex = &cfg.experiment;
    stats::DiffusionSpec {
        basis,
        model,
        ic: cfg.ic.clone(),
        n_paths: cfg.ensemble.n_paths,
        root_seed: cfg.ensemble.root_seed,
        epsilons: ex.epsilons.clone().unwrap_or_default(),
        tau: ex.tau,
        functionals: cfg.ensemble.functionals.clone(),
        max_dt: ex.max_dt,
        r_max: cfg.stepper.r_max,
        repetitions: ex.repetitions,
        min_pass: ex.min_pass,
        alpha: ex.alpha,
        pairings: ex.pairings.clone(),
    }
}

fn compare_limit(cfg: &RunConfig, basis: &WeightedBasis, model: &NoiseModel) -> Result<Work, CliError> {
    let r = stats::verify_diffusion_limit(&diffusion_spec(cfg, basis, model))?;
    let header = ["pairing", "repetition", "epsilon", "tau", "functional", "ks", "w1", "critical"].map(String::from);
    let mut csv = Csv::new(&header);
    for row in &r.rows {
        let pairing = match row.pairing {
            stats::Pairing::Corrected => "corrected",
            stats::Pairing::Plain => "plain",
        };
        csv.row(&[
            pairing.to_string(),
            row.repetition.to_string(),
            fmt_f64(row.epsilon),
            fmt_f64(row.tau),
            row.functional.to_string(),
            fmt_f64(row.ks),
            fmt_f64(row.w1),
            fmt_f64(row.critical),
        ]);
    }
    Ok(Work { checks: mandatory(r.checks()), details: to_value(&r), csv: Some(csv.into_bytes()), failure: None })
}
