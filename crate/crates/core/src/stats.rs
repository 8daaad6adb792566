//! Seeded Monte Carlo ensembles, distances between empirical laws, and the
//! verification experiments built on them.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{SpectralField, WeightedBasis};
use crate::dynamics::{InitialCondition, Scheme, Stepper, StepperConfig};
use crate::error::{Error, Result};
use crate::noise::{k_derivative, sample_wiener_increment, sigma_form, a_form, NoiseModel, OUState};
use crate::rng::{derive_seed, path_rng};
use rand::Rng;

/// One PASS/FAIL line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub samples: usize,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, statistic: f64, threshold: f64, samples: usize) -> Self {
        Self { name: name.into(), passed, statistic, threshold, samples, detail: String::new() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Sorted-sample view of one functional at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalLaw {
    samples: Vec<f64>,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl EmpiricalLaw {
    pub fn new(samples: Vec<f64>) -> Self {
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Self { samples, sorted }
    }

    /// Samples in path order.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Right-continuous empirical CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.samples.len() as f64;
        let m = self.mean();
        self.samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    }
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
pub fn ks_distance(a: &EmpiricalLaw, b: &EmpiricalLaw) -> f64 {
    let (x, y) = (a.sorted(), b.sorted());
    if x.is_empty() || y.is_empty() {
        return if x.len() == y.len() { 0.0 } else { 1.0 };
    }
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// ∫ |F_a - F_b| dx.
pub fn wasserstein1(a: &EmpiricalLaw, b: &EmpiricalLaw) -> f64 {
    let (x, y) = (a.sorted(), b.sorted());
    if x.is_empty() || y.is_empty() {
        return if x.len() == y.len() { 0.0 } else { f64::INFINITY };
    }
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = x[0].min(y[0]);
    let mut area = 0.0;
    while i < x.len() || j < y.len() {
        let v = match (x.get(i), y.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        area += (i as f64 / na - j as f64 / nb).abs() * (v - prev);
        prev = v;
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
    }
    area
}

/// Asymptotic two-sample KS critical value c(α)·√((n+m)/(nm)), c(α) = √(-½ ln(α/2)).
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Least-squares slope of ln y against ln x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Drives one path, calling `observe` at each requested step index (step 0 is the
/// initial state). `observe_steps` must be sorted.
pub fn run_path<R: rand::Rng + ?Sized>(
    stepper: &mut Stepper,
    u: &mut [f64],
    rng: &mut R,
    observe_steps: &[usize],
    mut observe: impl FnMut(usize, &[f64], Option<&OUState>),
) -> Result<()> {
    let mut ou = stepper.initial_ou(rng);
    let dt = stepper.config().dt;
    let last = observe_steps.last().copied().unwrap_or(0);
    let mut next = 0;
    for n in 0..=last {
        if n > 0 {
            stepper.step(u, ou.as_mut(), rng);
            stepper.check_state(u, n as f64 * dt)?;
        }
        while next < observe_steps.len() && observe_steps[next] == n {
            observe(next, u, ou.as_ref());
            next += 1;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec<'a> {
    pub basis: &'a WeightedBasis,
    pub model: &'a NoiseModel,
    pub stepper: StepperConfig,
    pub ic: InitialCondition,
    pub n_paths: usize,
    pub root_seed: u64,
    /// Mode indices k of the functionals ⟨u, e_k⟩.
    pub functionals: Vec<usize>,
    pub observe_times: Vec<f64>,
}

impl EnsembleSpec<'_> {
    pub fn validate(&self) -> Result<()> {
        self.stepper.validate()?;
        if self.n_paths < 2 {
            return Err(Error::InvalidParameter(format!("n_paths must be at least 2, got {}", self.n_paths)));
        }
        if let Some(&k) = self.functionals.iter().find(|&&k| k >= self.basis.n_modes()) {
            return Err(Error::InvalidParameter(format!("functional mode {k} outside the basis")));
        }
        let horizon = self.stepper.t_end * (1.0 + 1e-12);
        if let Some(t) = self.observe_times.iter().find(|&&t| !(t >= 0.0 && t <= horizon)) {
            return Err(Error::InvalidParameter(format!("observe time {t} outside [0, t_end]")));
        }
        Ok(())
    }

    fn observe_steps(&self) -> Vec<usize> {
        self.observe_times.iter().map(|&t| self.stepper.step_index(t)).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PathTrip {
    pub path: usize,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleResult {
    pub functionals: Vec<usize>,
    pub observe_times: Vec<f64>,
    /// Keyed by (position in `functionals`, position in `observe_times`).
    #[serde(skip)]
    pub laws: BTreeMap<(usize, usize), EmpiricalLaw>,
    pub n_paths: usize,
    pub n_used: usize,
    pub n_tripped: usize,
    pub trips: Vec<PathTrip>,
}

impl EnsembleResult {
    pub fn law(&self, functional: usize, time: usize) -> &EmpiricalLaw {
        &self.laws[&(functional, time)]
    }
}

/// Runs `n_paths` independent paths; path i draws from stream (root_seed, i).
/// Paths whose guard trips are dropped and reported.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleResult> {
    spec.validate()?;
    let u0 = spec.ic.build(spec.basis)?;
    let steps = spec.observe_steps();
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by_key(|&i| steps[i]);
    let sorted_steps: Vec<usize> = order.iter().map(|&i| steps[i]).collect();
    let nf = spec.functionals.len();
    let nt = steps.len();

    let per_path: Vec<Result<Vec<f64>>> = (0..spec.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut stepper = Stepper::new(spec.basis, spec.model, &spec.stepper)?;
            let mut rng = path_rng(spec.root_seed, p as u64);
            let mut u = u0.coeffs().to_vec();
            let mut out = vec![0.0; nt * nf];
            run_path(&mut stepper, &mut u, &mut rng, &sorted_steps, |obs, u, _| {
                let t = order[obs];
                for (f, &k) in spec.functionals.iter().enumerate() {
                    out[t * nf + f] = u[k];
                }
            })?;
            Ok(out)
        })
        .collect();

    let mut columns = vec![Vec::with_capacity(spec.n_paths); nt * nf];
    let mut trips = Vec::new();
    for (p, r) in per_path.into_iter().enumerate() {
        match r {
            Ok(v) => {
                for (c, x) in columns.iter_mut().zip(v) {
                    c.push(x);
                }
            }
            Err(e @ (Error::GuardTripped { .. } | Error::NonFinite { .. })) => {
                trips.push(PathTrip { path: p, error: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    }
    let mut laws = BTreeMap::new();
    for (idx, col) in columns.into_iter().enumerate() {
        laws.insert((idx % nf, idx / nf), EmpiricalLaw::new(col));
    }
    Ok(EnsembleResult {
        functionals: spec.functionals.clone(),
        observe_times: spec.observe_times.clone(),
        laws,
        n_paths: spec.n_paths,
        n_used: spec.n_paths - trips.len(),
        n_tripped: trips.len(),
        trips,
    })
}

// ---------------------------------------------------------------------------------
// stationarity

#[derive(Debug, Clone, Serialize)]
pub struct StationarityRep {
    pub seed: u64,
    pub ks: Vec<f64>,
    pub critical: f64,
    pub n_used: usize,
    pub n_tripped: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StationarityReport {
    pub tau1: f64,
    pub tau2: f64,
    pub functionals: Vec<usize>,
    pub alpha: f64,
    pub repetitions: Vec<StationarityRep>,
    pub n_pass: usize,
    pub min_pass: usize,
    pub passed: bool,
}

impl StationarityReport {
    pub fn checks(&self) -> Vec<Check> {
        let worst = self.repetitions.iter().flat_map(|r| r.ks.iter().map(move |k| k / r.critical)).fold(0.0, f64::max);
        vec![Check::new("stationarity", self.passed, self.n_pass as f64, self.min_pass as f64, self.repetitions.len())
            .with_detail(format!(
                "KS(tau={}, tau={}) below the {}% critical value in {}/{} repetitions; worst KS/critical = {:.3}",
                self.tau1,
                self.tau2,
                self.alpha * 100.0,
                self.n_pass,
                self.repetitions.len(),
                worst
            ))]
    }
}

/// Compares the laws of every functional at τ₁ and τ₂ within one ensemble, repeated
/// over derived seeds; PASS when at least `min_pass` repetitions are below the
/// two-sample critical value for all functionals.
pub fn verify_stationarity(
    spec: &EnsembleSpec,
    tau1: f64,
    tau2: f64,
    repetitions: usize,
    min_pass: usize,
    alpha: f64,
) -> Result<StationarityReport> {
    if !(tau2 > tau1 && tau1 >= 0.0) {
        return Err(Error::InvalidParameter(format!("need tau2 > tau1 >= 0, got {tau1}, {tau2}")));
    }
    let mut reps = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let seed = derive_seed(spec.root_seed, rep as u64);
        let mut s = spec.clone();
        s.root_seed = seed;
        s.observe_times = vec![tau1, tau2];
        s.stepper.t_end = tau2;
        let res = run_ensemble(&s)?;
        let critical = ks_critical(res.n_used, res.n_used, alpha);
        let ks: Vec<f64> =
            (0..s.functionals.len()).map(|f| ks_distance(res.law(f, 0), res.law(f, 1))).collect();
        let passed = ks.iter().all(|&d| d < critical);
        reps.push(StationarityRep { seed, ks, critical, n_used: res.n_used, n_tripped: res.n_tripped, passed });
    }
    let n_pass = reps.iter().filter(|r| r.passed).count();
    Ok(StationarityReport {
        tau1,
        tau2,
        functionals: spec.functionals.clone(),
        alpha,
        repetitions: reps,
        n_pass,
        min_pass,
        passed: n_pass >= min_pass,
    })
}

// ---------------------------------------------------------------------------------
// L¹ contraction

#[derive(Debug, Clone, Serialize)]
pub struct ContractionPath {
    pub pair: usize,
    pub noise_path: usize,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// max_j (d_{j+1} - d_j) / d_0, zero when d_0 = 0
    pub worst_increase: f64,
    pub monotone: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub rel_tol: f64,
    pub paths: Vec<ContractionPath>,
    pub passed: bool,
}

impl ContractionReport {
    pub fn checks(&self) -> Vec<Check> {
        let worst = self.paths.iter().map(|p| p.worst_increase).fold(f64::NEG_INFINITY, f64::max);
        let bad = self.paths.iter().filter(|p| !p.monotone).count();
        vec![Check::new("l1_contraction", self.passed, worst, self.rel_tol, self.paths.len())
            .with_detail(format!("{bad} of {} paths non-monotone", self.paths.len()))]
    }
}

/// Evolves each IC pair under shared OU paths and checks that ∫|u_a - u_b| never
/// grows by more than `rel_tol`·(initial distance) between recorded times.
pub fn verify_contraction(
    basis: &WeightedBasis,
    model: &NoiseModel,
    cfg: &StepperConfig,
    pairs: &[(SpectralField, SpectralField)],
    n_noise_paths: usize,
    root_seed: u64,
    rel_tol: f64,
) -> Result<ContractionReport> {
    if !cfg.scheme.is_rde() {
        return Err(Error::InvalidParameter(format!("contraction runs an rde scheme, not {}", cfg.scheme)));
    }
    for (a, b) in pairs {
        let (ma, mb) = (basis.mass(a), basis.mass(b));
        if (ma - mb).abs() > 1e-10 {
            return Err(Error::MassMismatch { a: ma, b: mb });
        }
    }
    let jobs: Vec<(usize, usize)> =
        (0..pairs.len()).flat_map(|p| (0..n_noise_paths).map(move |j| (p, j))).collect();
    let paths: Vec<Result<ContractionPath>> = jobs
        .into_par_iter()
        .map(|(p, j)| {
            let mut st = Stepper::new(basis, model, cfg)?;
            let mut rng = path_rng(root_seed, j as u64);
            let mut ou = st.initial_ou(&mut rng).expect("rde scheme");
            let mut ua = pairs[p].0.coeffs().to_vec();
            let mut ub = pairs[p].1.coeffs().to_vec();
            let diff = |a: &[f64], b: &[f64]| {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                basis.l1_norm_coeffs(&d)
            };
            let mut times = vec![0.0];
            let mut distances = vec![diff(&ua, &ub)];
            let n_steps = cfg.n_steps();
            for n in 1..=n_steps {
                st.step_rde_frozen(&mut ua, &ou.coeffs);
                st.step_rde_frozen(&mut ub, &ou.coeffs);
                if st.is_noisy() {
                    ou.step(model, cfg.dt, &mut rng);
                }
                let tau = n as f64 * cfg.dt;
                st.check_state(&ua, tau)?;
                st.check_state(&ub, tau)?;
                if n % cfg.record_every == 0 || n == n_steps {
                    times.push(tau);
                    distances.push(diff(&ua, &ub));
                }
            }
            let d0 = distances[0];
            let worst = distances
                .windows(2)
                .map(|w| if d0 > 0.0 { (w[1] - w[0]) / d0 } else { w[1] - w[0] })
                .fold(f64::NEG_INFINITY, f64::max);
            let monotone = distances.windows(2).all(|w| w[1] <= w[0] + rel_tol * d0);
            Ok(ContractionPath { pair: p, noise_path: j, times, distances, worst_increase: worst, monotone })
        })
        .collect();
    let paths = paths.into_iter().collect::<Result<Vec<_>>>()?;
    let passed = paths.iter().all(|p| p.monotone);
    Ok(ContractionReport { rel_tol, paths, passed })
}

// ---------------------------------------------------------------------------------
// covariance of the advective noise

#[derive(Debug, Clone, Serialize)]
pub struct UwReport {
    pub mc_variance: f64,
    pub sigma_form: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub passed: bool,
}

impl UwReport {
    pub fn z_score(&self) -> f64 {
        if self.std_error > 0.0 {
            (self.mc_variance - self.sigma_form).abs() / self.std_error
        } else if self.mc_variance == self.sigma_form {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn checks(&self, name: &str) -> Vec<Check> {
        vec![Check::new(name, self.passed, self.z_score(), 4.0, self.n_samples).with_detail(format!(
            "MC variance {:.6e} vs sigma form {:.6e} (std error {:.2e})",
            self.mc_variance, self.sigma_form, self.std_error
        ))]
    }
}

/// Monte Carlo variance of ⟨(u·W(1))_ξ, φ⟩ against ⟨Σ(u)φ, φ⟩; PASS within 4 standard
/// errors. The mean is known to vanish, so the estimator is the mean of X².
pub fn verify_uw_covariance(
    basis: &WeightedBasis,
    model: &NoiseModel,
    u: &SpectralField,
    phi: &SpectralField,
    n_samples: usize,
    seed: u64,
) -> Result<UwReport> {
    let target = sigma_form(basis, model, u, phi)?;
    let mut rng = path_rng(seed, 0);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n_samples {
        let w = sample_wiener_increment(basis, model, 1.0, &mut rng);
        let x = basis.inner_product(&basis.derivative_xi(&basis.pointwise_product(u, &w)?), phi)?;
        s1 += x * x;
        s2 += x * x * x * x;
    }
    let n = n_samples as f64;
    let mc = s1 / n;
    let var_x2 = (s2 / n - mc * mc).max(0.0) * n / (n - 1.0);
    let std_error = (var_x2 / n).sqrt();
    let passed = (mc - target).abs() <= 4.0 * std_error || (mc == 0.0 && target == 0.0);
    Ok(UwReport { mc_variance: mc, sigma_form: target, std_error, n_samples, passed })
}

// ---------------------------------------------------------------------------------
// perturbed test function correctors

/// Test function f with bounded derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Linear,
    Quadratic,
    Sine { freq: f64, phase: f64 },
}

impl TestFunction {
    pub fn d1(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Linear => 1.0,
            TestFunction::Quadratic => x,
            TestFunction::Sine { freq, phase } => freq * (freq * x + phase).cos(),
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Linear => 0.0,
            TestFunction::Quadratic => 1.0,
            TestFunction::Sine { freq, phase } => -freq * freq * (freq * x + phase).sin(),
        }
    }
}

/// F₁, F₃, F₄ for a state u and OU field η at correlation time ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correctors {
    pub f1: f64,
    pub f3: f64,
    pub f4: f64,
}

pub fn correctors(
    basis: &WeightedBasis,
    model: &NoiseModel,
    u: &SpectralField,
    eta: &SpectralField,
    epsilon: f64,
    f: TestFunction,
    phi: &SpectralField,
) -> Result<Correctors> {
    let a = basis.inner_product(u, phi)?;
    let psi = k_derivative(basis, phi);
    let ue = basis.pointwise_product(u, eta)?;
    let due = basis.derivative_xi(&ue);
    let x1 = basis.inner_product(&due, phi)?;
    let y = basis.inner_product(&ue, &psi)?;
    let sig = sigma_form(basis, model, u, phi)?;
    let z = basis.inner_product(&due, &basis.pointwise_product(&psi, eta)?)?;
    let af = a_form(basis, model, u, phi)?;
    Ok(Correctors {
        f1: epsilon.sqrt() * f.d1(a) * x1,
        f3: 0.5 * epsilon * f.d2(a) * (y * y - 0.5 * sig),
        f4: 0.5 * epsilon * f.d1(a) * (z - 0.5 * af),
    })
}

#[derive(Debug, Clone)]
pub struct CorrectorSpec<'a> {
    pub basis: &'a WeightedBasis,
    pub model: &'a NoiseModel,
    pub ic: InitialCondition,
    pub n_paths: usize,
    pub root_seed: u64,
    /// Decreasing, at least three values.
    pub epsilons: Vec<f64>,
    pub checkpoints: Vec<f64>,
    pub f: TestFunction,
    pub phi: SpectralField,
    pub r_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrectorRow {
    pub epsilon: f64,
    pub dt: f64,
    /// E|F| at each checkpoint
    pub mean_abs_f1: Vec<f64>,
    pub mean_abs_f3: Vec<f64>,
    pub mean_abs_f4: Vec<f64>,
    pub sup_f1: f64,
    pub sup_f3: f64,
    pub sup_f4: f64,
    pub n_used: usize,
    pub n_tripped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrectorReport {
    pub checkpoints: Vec<f64>,
    pub rows: Vec<CorrectorRow>,
    pub slope_f1: f64,
    pub slope_f3: f64,
    pub slope_f4: f64,
    pub passed: bool,
}

pub const F1_SLOPE: (f64, f64) = (0.4, 0.6);
pub const F34_SLOPE: (f64, f64) = (0.8, 1.2);

impl CorrectorReport {
    /// F₁ is mandatory; F₃/F₄ are reported as optional probes.
    pub fn checks(&self) -> Vec<Check> {
        let inside = |s: f64, (lo, hi): (f64, f64)| s >= lo && s <= hi;
        let n = self.rows.first().map_or(0, |r| r.n_used);
        vec![
            Check::new("corrector_f1_slope", inside(self.slope_f1, F1_SLOPE), self.slope_f1, 0.5, n)
                .with_detail(format!("slope of log sup E|F1| vs log eps, band {:?}", F1_SLOPE)),
            Check::new("corrector_f3_slope", inside(self.slope_f3, F34_SLOPE), self.slope_f3, 1.0, n)
                .with_detail(format!("optional probe, band {:?}", F34_SLOPE)),
            Check::new("corrector_f4_slope", inside(self.slope_f4, F34_SLOPE), self.slope_f4, 1.0, n)
                .with_detail(format!("optional probe, band {:?}", F34_SLOPE)),
        ]
    }
}

/// sup over checkpoints of E|F₁^ε| (and E|F₃|, E|F₄|) under rde_plain with Δτ = ε/10,
/// then log-log slopes against ε.
pub fn verify_corrector_scaling(spec: &CorrectorSpec) -> Result<CorrectorReport> {
    if spec.epsilons.len() < 3 || spec.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("need at least three strictly decreasing epsilons".into()));
    }
    let horizon = spec.checkpoints.iter().copied().fold(0.0, f64::max);
    let mut rows = Vec::new();
    for (ei, &eps) in spec.epsilons.iter().enumerate() {
        let cfg = StepperConfig {
            scheme: Scheme::RdePlain,
            dt: eps / 10.0,
            t_end: horizon,
            epsilon: eps,
            r_max: spec.r_max,
            record_every: 1,
        };
        let steps: Vec<usize> = spec.checkpoints.iter().map(|&t| cfg.step_index(t)).collect();
        let mut sorted = steps.clone();
        sorted.sort_unstable();
        let nc = steps.len();
        let u0 = spec.ic.build(spec.basis)?;
        let seed = derive_seed(spec.root_seed, ei as u64);
        let per_path: Vec<Result<Vec<Correctors>>> = (0..spec.n_paths)
            .into_par_iter()
            .map(|p| {
                let mut st = Stepper::new(spec.basis, spec.model, &cfg)?;
                let mut rng = path_rng(seed, p as u64);
                let mut u = u0.coeffs().to_vec();
                let mut out = Vec::with_capacity(nc);
                let mut err = None;
                run_path(&mut st, &mut u, &mut rng, &sorted, |_, u, ou| {
                    let uf = SpectralField::from_coeffs(spec.basis, u).expect("same basis");
                    let eta = ou.expect("rde scheme").field(spec.basis);
                    match correctors(spec.basis, spec.model, &uf, &eta, eps, spec.f, &spec.phi) {
                        Ok(c) => out.push(c),
                        Err(e) => err = Some(e),
                    }
                })?;
                match err {
                    Some(e) => Err(e),
                    None => Ok(out),
                }
            })
            .collect();
        let mut sums = vec![[0.0f64; 3]; nc];
        let (mut used, mut tripped) = (0, 0);
        for r in per_path {
            match r {
                Ok(cs) => {
                    used += 1;
                    for (s, c) in sums.iter_mut().zip(&cs) {
                        s[0] += c.f1.abs();
                        s[1] += c.f3.abs();
                        s[2] += c.f4.abs();
                    }
                }
                Err(Error::GuardTripped { .. } | Error::NonFinite { .. }) => tripped += 1,
                Err(e) => return Err(e),
            }
        }
        let n = used.max(1) as f64;
        let col = |j: usize| -> Vec<f64> { sums.iter().map(|s| s[j] / n).collect() };
        let (m1, m3, m4) = (col(0), col(1), col(2));
        let sup = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        rows.push(CorrectorRow {
            epsilon: eps,
            dt: cfg.dt,
            sup_f1: sup(&m1),
            sup_f3: sup(&m3),
            sup_f4: sup(&m4),
            mean_abs_f1: m1,
            mean_abs_f3: m3,
            mean_abs_f4: m4,
            n_used: used,
            n_tripped: tripped,
        });
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let slope = |g: fn(&CorrectorRow) -> f64| loglog_slope(&eps, &rows.iter().map(g).collect::<Vec<_>>());
    let slope_f1 = slope(|r| r.sup_f1);
    let slope_f3 = slope(|r| r.sup_f3);
    let slope_f4 = slope(|r| r.sup_f4);
    let passed = slope_f1 >= F1_SLOPE.0 && slope_f1 <= F1_SLOPE.1;
    Ok(CorrectorReport { checkpoints: spec.checkpoints.clone(), rows, slope_f1, slope_f3, slope_f4, passed })
}

// ---------------------------------------------------------------------------------
// ε → 0 diffusion limit

/// Which random PDE is compared with which SPDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// rde_corrected(ε) against spde_ito
    Corrected,
    /// rde_plain(ε) against spde_limit
    Plain,
}

impl Pairing {
    pub fn schemes(self) -> (Scheme, Scheme) {
        match self {
            Pairing::Corrected => (Scheme::RdeCorrected, Scheme::SpdeIto),
            Pairing::Plain => (Scheme::RdePlain, Scheme::SpdeLimit),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionSpec<'a> {
    pub basis: &'a WeightedBasis,
    pub model: &'a NoiseModel,
    pub ic: InitialCondition,
    pub n_paths: usize,
    pub root_seed: u64,
    /// Decreasing, at least two values.
    pub epsilons: Vec<f64>,
    pub tau: f64,
    pub functionals: Vec<usize>,
    /// Both ensembles for ε step with min(ε/10, max_dt).
    pub max_dt: f64,
    pub r_max: f64,
    pub repetitions: usize,
    pub min_pass: usize,
    pub alpha: f64,
    pub pairings: Vec<Pairing>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffusionRow {
    pub pairing: Pairing,
    pub repetition: usize,
    pub epsilon: f64,
    pub tau: f64,
    pub functional: usize,
    pub ks: f64,
    pub w1: f64,
    pub critical: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffusionSummary {
    pub pairing: Pairing,
    pub epsilons: Vec<f64>,
    /// mean KS over repetitions, indexed [functional][epsilon]
    pub mean_ks: Vec<Vec<f64>>,
    pub monotone: bool,
    pub reps_below: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffusionReport {
    pub functionals: Vec<usize>,
    pub rows: Vec<DiffusionRow>,
    pub summaries: Vec<DiffusionSummary>,
    pub n_tripped: usize,
    pub min_pass: usize,
    pub passed: bool,
}

impl DiffusionReport {
    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for s in &self.summaries {
            let name = match s.pairing {
                Pairing::Corrected => "diffusion_limit_corrected",
                Pairing::Plain => "diffusion_limit_plain",
            };
            let table: Vec<String> = s
                .mean_ks
                .iter()
                .zip(&self.functionals)
                .map(|(row, k)| {
                    let vals: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
                    format!("k={k}: [{}]", vals.join(", "))
                })
                .collect();
            out.push(
                Check::new(name, s.passed, s.reps_below as f64, self.min_pass as f64, s.epsilons.len())
                    .with_detail(format!(
                        "monotone={} mean KS over eps {:?}: {}",
                        s.monotone,
                        s.epsilons,
                        table.join("; ")
                    )),
            );
        }
        out
    }
}

const REFERENCE_TAG: u64 = 1 << 32;

/// KS and W₁ distances between the functional laws of a random PDE at each ε and
/// its limiting SPDE at time τ, over independent seed repetitions. Both laws for a
/// given ε come from the same step, so they differ only through ε.
pub fn verify_diffusion_limit(spec: &DiffusionSpec) -> Result<DiffusionReport> {
    if spec.epsilons.len() < 2 || spec.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter("need at least two strictly decreasing epsilons".into()));
    }
    let nf = spec.functionals.len();
    let ne = spec.epsilons.len();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut n_tripped = 0;
    for (pi, &pairing) in spec.pairings.iter().enumerate() {
        let (rde, spde) = pairing.schemes();
        let mut ks_sum = vec![vec![0.0; ne]; nf];
        let mut reps_below = 0;
        for rep in 0..spec.repetitions {
            let rep_seed = derive_seed(derive_seed(spec.root_seed, pi as u64), rep as u64);
            let ensemble = |scheme: Scheme, dt: f64, eps: f64, tag: u64| {
                let e = EnsembleSpec {
                    basis: spec.basis,
                    model: spec.model,
                    stepper: StepperConfig {
                        scheme,
                        dt,
                        t_end: spec.tau,
                        epsilon: eps,
                        r_max: spec.r_max,
                        record_every: 1,
                    },
                    ic: spec.ic.clone(),
                    n_paths: spec.n_paths,
                    root_seed: derive_seed(rep_seed, tag),
                    functionals: spec.functionals.clone(),
                    observe_times: vec![spec.tau],
                };
                run_ensemble(&e)
            };
            // one reference per distinct step, so that the laws differ only through ε
            let mut references: Vec<(f64, EnsembleResult)> = Vec::new();
            let mut below = true;
            for (ei, &eps) in spec.epsilons.iter().enumerate() {
                let dt = (eps / 10.0).min(spec.max_dt);
                if !references.iter().any(|(d, _)| *d == dt) {
                    let r = ensemble(spde, dt, 1.0, REFERENCE_TAG + references.len() as u64)?;
                    n_tripped += r.n_tripped;
                    references.push((dt, r));
                }
                let reference = &references.iter().find(|(d, _)| *d == dt).expect("just inserted").1;
                let res = ensemble(rde, dt, eps, 1 + ei as u64)?;
                n_tripped += res.n_tripped;
                let critical = ks_critical(res.n_used, reference.n_used, spec.alpha);
                for f in 0..nf {
                    let (a, b) = (res.law(f, 0), reference.law(f, 0));
                    let ks = ks_distance(a, b);
                    ks_sum[f][ei] += ks;
                    if ei + 1 == ne && ks >= critical {
                        below = false;
                    }
                    rows.push(DiffusionRow {
                        pairing,
                        repetition: rep,
                        epsilon: eps,
                        tau: spec.tau,
                        functional: spec.functionals[f],
                        ks,
                        w1: wasserstein1(a, b),
                        critical,
                    });
                }
            }
            if below {
                reps_below += 1;
            }
        }
        let reps = spec.repetitions.max(1) as f64;
        let mean_ks: Vec<Vec<f64>> = ks_sum.iter().map(|r| r.iter().map(|v| v / reps).collect()).collect();
        let monotone = mean_ks.iter().all(|r| r.windows(2).all(|w| w[1] <= w[0]));
        let passed = monotone && reps_below >= spec.min_pass;
        summaries.push(DiffusionSummary {
            pairing,
            epsilons: spec.epsilons.clone(),
            mean_ks,
            monotone,
            reps_below,
            passed,
        });
    }
    let passed = summaries.iter().all(|s| s.passed);
    Ok(DiffusionReport {
        functionals: spec.functionals.clone(),
        rows,
        summaries,
        n_tripped,
        min_pass: spec.min_pass,
        passed,
    })
}


// ---------------------------------------------------------------------------------
// basis suite

pub const GRAM_TOLERANCE: f64 = 1e-10;
pub const DIAGONALITY_TOLERANCE: f64 = 1e-6;
pub const SHIFT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct BasisReport {
    pub nu: f64,
    pub n_modes: usize,
    pub n_quad: usize,
    pub gram_defect: f64,
    /// max |⟨𝓛e_k, e_j⟩ + (k/2)δ_jk| for k ≤ N-4, 𝓛 by finite differences
    pub diagonality_defect: f64,
    /// max |⟨∂e_k, e_m⟩ - r_k δ_{m,k+1}| by finite differences
    pub shift_defect: f64,
    pub poincare_fields: usize,
    pub poincare_violations: usize,
    /// min over fields of ‖∂u‖² / (½‖u‖²)
    pub poincare_min_ratio: f64,
}

impl BasisReport {
    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::new("gram", self.gram_defect <= GRAM_TOLERANCE, self.gram_defect, GRAM_TOLERANCE, self.n_quad),
            Check::new(
                "diagonality",
                self.diagonality_defect <= DIAGONALITY_TOLERANCE,
                self.diagonality_defect,
                DIAGONALITY_TOLERANCE,
                self.n_modes,
            ),
            Check::new("derivative_shift", self.shift_defect <= SHIFT_TOLERANCE, self.shift_defect, SHIFT_TOLERANCE, self.n_modes),
            Check::new(
                "poincare",
                self.poincare_violations == 0,
                self.poincare_min_ratio,
                1.0,
                self.poincare_fields,
            )
            .with_detail(format!("{} of {} random fields violate", self.poincare_violations, self.poincare_fields)),
        ]
    }
}

/// Gram identity on the quadrature, diagonality of 𝓛 and the shift law measured by
/// fourth-order differences on a fine uniform grid, and the Poincaré inequality on
/// `n_fields` random fields with an empty top mode.
pub fn verify_basis(basis: &WeightedBasis, n_fields: usize, seed: u64) -> BasisReport {
    let (n, m, nu) = (basis.n_modes(), basis.n_quad(), basis.nu());
    let mut gram_defect = 0.0f64;
    for j in 0..n {
        for k in j..n {
            let g: f64 = (0..m).map(|i| basis.weighted_value(i, j) * basis.weighted_value(i, k)).sum();
            let target = if j == k { 1.0 } else { 0.0 };
            gram_defect = gram_defect.max((g - target).abs());
        }
    }

    // rolling five-point window over ξ_j = -L + j·h
    let h = 1e-3;
    let half = 2.0 * nu.sqrt() * ((2.0 * n as f64 + 1.0).sqrt() + 9.0);
    let points = (2.0 * half / h).round() as usize;
    let x_at = |j: usize| -half + j as f64 * h;
    let mut window: std::collections::VecDeque<Vec<f64>> = (0..5).map(|j| basis.basis_values(x_at(j))).collect();
    let n_diag = n.saturating_sub(3);
    let mut lmat = vec![0.0; n_diag * n];
    let mut dmat = vec![0.0; n * n];
    let mut lk = vec![0.0; n];
    let mut dk = vec![0.0; n];
    for j in 2..points - 2 {
        if j > 2 {
            window.pop_front();
            window.push_back(basis.basis_values(x_at(j + 2)));
        }
        let xi = x_at(j);
        let wk = h * (xi * xi / (4.0 * nu)).exp();
        if wk == 0.0 || !wk.is_finite() {
            continue;
        }
        for k in 0..n {
            let f = |p: usize| window[p][k];
            dk[k] = (f(0) - 8.0 * f(1) + 8.0 * f(3) - f(4)) / (12.0 * h);
            let d2 = (-f(0) + 16.0 * f(1) - 30.0 * f(2) + 16.0 * f(3) - f(4)) / (12.0 * h * h);
            lk[k] = nu * d2 + 0.5 * xi * dk[k] + 0.5 * f(2);
        }
        let e = &window[2];
        for k in 0..n {
            let (a, b) = (wk * dk[k], if k < n_diag { wk * lk[k] } else { 0.0 });
            for (mm, &ev) in e.iter().enumerate() {
                dmat[k * n + mm] += a * ev;
                if k < n_diag {
                    lmat[k * n + mm] += b * ev;
                }
            }
        }
    }
    let mut diagonality_defect = 0.0f64;
    for k in 0..n_diag {
        for j in 0..n {
            let target = if j == k { -(k as f64) / 2.0 } else { 0.0 };
            diagonality_defect = diagonality_defect.max((lmat[k * n + j] - target).abs());
        }
    }
    let r = basis.deriv_shift();
    let mut shift_defect = 0.0f64;
    for k in 0..n.saturating_sub(1) {
        for mm in 0..n {
            let target = if mm == k + 1 { r[k] } else { 0.0 };
            shift_defect = shift_defect.max((dmat[k * n + mm] - target).abs());
        }
    }

    let mut rng = path_rng(seed, 0);
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..n_fields {
        let kmax = rng.random_range(0..n.saturating_sub(1).max(1));
        let mut c = vec![0.0; n];
        for (k, v) in c.iter_mut().enumerate().take(kmax + 1) {
            *v = rng.random_range(-1.0..1.0) / (1.0 + k as f64);
        }
        if n > 1 {
            c[n - 1] = 0.0;
        }
        let l2: f64 = c.iter().map(|v| v * v).sum();
        if l2 == 0.0 {
            continue;
        }
        let h1 = basis.h1k_norm_coeffs(&c).powi(2);
        let ratio = h1 / (0.5 * l2);
        min_ratio = min_ratio.min(ratio);
        if 0.5 * l2 > h1 * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    BasisReport {
        nu,
        n_modes: n,
        n_quad: m,
        gram_defect,
        diagonality_defect,
        shift_defect,
        poincare_fields: n_fields,
        poincare_violations: violations,
        poincare_min_ratio: min_ratio,
    }
}

// ---------------------------------------------------------------------------------
// conservation and sup bound

pub const MASS_DRIFT_TOLERANCE: f64 = 1e-12;
pub const SUP_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Serialize)]
pub struct MassDriftRow {
    pub scheme: Scheme,
    pub steps: usize,
    pub drift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SupRow {
    pub scheme: Scheme,
    pub ic_seed: u64,
    /// sup norm of the initial condition
    pub m: f64,
    pub max_sup: f64,
    pub ratio: f64,
    /// max over records of sup(τ) / (e^{τ/2} m)
    pub scaled_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConservationReport {
    pub mass: Vec<MassDriftRow>,
    pub sup: Vec<SupRow>,
}

impl ConservationReport {
    pub fn mass_passed(&self) -> bool {
        self.mass.iter().all(|r| r.drift <= MASS_DRIFT_TOLERANCE)
    }

    pub fn sup_passed(&self) -> bool {
        self.sup.iter().all(|r| r.ratio <= 1.0 + SUP_TOLERANCE)
    }

    pub fn checks(&self) -> Vec<Check> {
        let drift = self.mass.iter().map(|r| r.drift).fold(0.0, f64::max);
        let worst = self.sup.iter().map(|r| r.ratio).fold(0.0, f64::max);
        let bad = self.sup.iter().filter(|r| r.ratio > 1.0 + SUP_TOLERANCE).count();
        let scaled = self.sup.iter().map(|r| r.scaled_ratio).fold(0.0, f64::max);
        vec![
            Check::new("mass_drift", self.mass_passed(), drift, MASS_DRIFT_TOLERANCE, self.mass.len())
                .with_detail(format!("{} schemes x {} steps", self.mass.len(), self.mass.first().map_or(0, |r| r.steps))),
            Check::new("sup_bound", self.sup_passed(), worst, 1.0 + SUP_TOLERANCE, self.sup.len()).with_detail(format!(
                "{bad} of {} runs exceed (1+tol)·m; max sup(τ)/(e^(τ/2)·m) = {scaled:.4}",
                self.sup.len()
            )),
        ]
    }
}

/// Mass drift of every scheme over `mass_steps` steps, and sup(τ)/sup(0) for
/// `n_ics` random initial conditions under the deterministic and rde_plain schemes.
pub fn verify_conservation(
    basis: &WeightedBasis,
    model: &NoiseModel,
    dt: f64,
    epsilon: f64,
    mass_steps: usize,
    n_ics: usize,
    sup_horizon: f64,
    seed: u64,
) -> Result<ConservationReport> {
    let random_ic = |s: u64| InitialCondition::Random { mass: 1.0, k_max: 8.min(basis.n_modes() - 1), amp: 0.1, seed: s };
    let mut mass = Vec::new();
    for scheme in Scheme::ALL {
        let cfg = StepperConfig { scheme, dt, t_end: mass_steps as f64 * dt, epsilon, r_max: 1e3, record_every: 1 };
        let mut st = Stepper::new(basis, model, &cfg)?;
        let mut rng = path_rng(seed, scheme as u64);
        let u0 = random_ic(derive_seed(seed, u64::MAX)).build(basis)?;
        let c0 = u0.coeffs()[0];
        let mut u = u0.into_coeffs();
        let mut ou = st.initial_ou(&mut rng);
        let mut drift = 0.0f64;
        for n in 1..=mass_steps {
            st.step(&mut u, ou.as_mut(), &mut rng);
            st.check_state(&u, n as f64 * dt)?;
            drift = drift.max(((u[0] - c0) * basis.e0_integral()).abs());
        }
        mass.push(MassDriftRow { scheme, steps: mass_steps, drift });
    }

    let jobs: Vec<(Scheme, u64)> = [Scheme::Deterministic, Scheme::RdePlain]
        .into_iter()
        .flat_map(|sc| (0..n_ics as u64).map(move |i| (sc, i)))
        .collect();
    let sup: Vec<Result<SupRow>> = jobs
        .into_par_iter()
        .map(|(scheme, i)| {
            let ic_seed = derive_seed(seed, i);
            let u0 = random_ic(ic_seed).build(basis)?;
            let cfg = StepperConfig { scheme, dt, t_end: sup_horizon, epsilon, r_max: 1e3, record_every: 10 };
            let mut st = Stepper::new(basis, model, &cfg)?;
            let mut rng = path_rng(ic_seed, 0);
            let mut ou = st.initial_ou(&mut rng);
            let m = basis.sup_norm(&u0);
            let mut u = u0.into_coeffs();
            let (mut max_sup, mut scaled) = (m, 1.0f64);
            for n in 1..=cfg.n_steps() {
                st.step(&mut u, ou.as_mut(), &mut rng);
                let tau = n as f64 * dt;
                st.check_state(&u, tau)?;
                if n % cfg.record_every == 0 {
                    let s = basis.sup_norm(&SpectralField::from_coeffs(basis, &u)?);
                    max_sup = max_sup.max(s);
                    scaled = scaled.max(s / ((0.5 * tau).exp() * m));
                }
            }
            Ok(SupRow { scheme, ic_seed, m, max_sup, ratio: max_sup / m, scaled_ratio: scaled })
        })
        .collect();
    Ok(ConservationReport { mass, sup: sup.into_iter().collect::<Result<Vec<_>>>()? })
}

// ---------------------------------------------------------------------------------
// deterministic profile

pub const PROFILE_TOLERANCE: f64 = 1e-3;
pub const ORACLE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct ProfileReport {
    pub mass: f64,
    pub t_end: f64,
    pub dt: f64,
    pub oracle_residual: f64,
    pub oracle_mass_error: f64,
    pub l2k_error: f64,
    pub tail_energy: f64,
}

impl ProfileReport {
    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::new("oracle_residual", self.oracle_residual <= ORACLE_TOLERANCE, self.oracle_residual, ORACLE_TOLERANCE, 1),
            Check::new(
                "oracle_mass",
                self.oracle_mass_error <= ORACLE_TOLERANCE,
                self.oracle_mass_error,
                ORACLE_TOLERANCE,
                1,
            ),
            Check::new("profile_l2k_error", self.l2k_error <= PROFILE_TOLERANCE, self.l2k_error, PROFILE_TOLERANCE, 1)
                .with_detail(format!("bump IC, T = {}, tail energy {:.2e}", self.t_end, self.tail_energy)),
        ]
    }
}

/// Noise-off run from the bump initial condition compared with the Cole-Hopf profile.
pub fn verify_profile(basis: &WeightedBasis, mass: f64, t_end: f64, dt: f64) -> Result<ProfileReport> {
    let oracle = crate::selfsim::validate_colehopf(mass, basis.nu());
    let cfg = StepperConfig { scheme: Scheme::Deterministic, dt, t_end, epsilon: 1.0, r_max: 1e3, record_every: usize::MAX };
    let model = NoiseModel::zero(basis);
    let u0 = InitialCondition::Bump { mass }.build(basis)?;
    let traj = crate::dynamics::integrate(basis, &model, &cfg, &u0, &mut path_rng(0, 0)).map_err(|f| f.error)?;
    let last = traj.last().expect("final state is recorded");
    let err = last.sub(&crate::selfsim::colehopf_field(basis, mass))?.l2k_norm();
    Ok(ProfileReport {
        mass,
        t_end,
        dt,
        oracle_residual: oracle.residual,
        oracle_mass_error: oracle.mass_error,
        l2k_error: err,
        tail_energy: last.tail_energy(),
    })
}

// ---------------------------------------------------------------------------------
// OU law

#[derive(Debug, Clone, Serialize)]
pub struct OuRow {
    pub mode: usize,
    pub lag: f64,
    pub mean: f64,
    pub mean_band: f64,
    pub variance: f64,
    pub variance_target: f64,
    pub variance_band: f64,
    pub correlation: f64,
    pub correlation_target: f64,
    pub correlation_band: f64,
}

impl OuRow {
    pub fn passed(&self) -> bool {
        self.mean.abs() <= self.mean_band
            && (self.variance - self.variance_target).abs() <= self.variance_band
            && (self.correlation - self.correlation_target).abs() <= self.correlation_band
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OuReport {
    pub epsilon: f64,
    pub n_paths: usize,
    pub rows: Vec<OuRow>,
}

impl OuReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(OuRow::passed)
    }

    pub fn checks(&self) -> Vec<Check> {
        let bad: Vec<String> =
            self.rows.iter().filter(|r| !r.passed()).map(|r| format!("k={} lag={}", r.mode, r.lag)).collect();
        let worst = self
            .rows
            .iter()
            .map(|r| (r.correlation - r.correlation_target).abs() / r.correlation_band)
            .chain(self.rows.iter().map(|r| (r.variance - r.variance_target).abs() / r.variance_band))
            .fold(0.0, f64::max);
        vec![Check::new("ou_law", bad.is_empty(), worst, 1.0, self.n_paths)
            .with_detail(format!("{} rows outside 3-sigma bands: [{}]", bad.len(), bad.join(", ")))]
    }
}

/// Stationary mean, variance q_k/2 and lag correlation e^{-Δ/ε} of every active mode,
/// each against a 3σ sampling band, with one ensemble per lag.
pub fn verify_ou_law(model: &NoiseModel, epsilon: f64, n_paths: usize, seed: u64, lags: &[f64]) -> OuReport {
    let mut rows = Vec::new();
    let nf = n_paths as f64;
    for (li, &lag) in lags.iter().enumerate() {
        let mut rng = path_rng(seed, li as u64);
        let kn = model.k_noise();
        let mut before = vec![Vec::with_capacity(n_paths); kn];
        let mut after = vec![Vec::with_capacity(n_paths); kn];
        for _ in 0..n_paths {
            let mut s = OUState::stationary(model, epsilon, &mut rng);
            let b0 = s.coeffs.clone();
            s.step(model, lag, &mut rng);
            for k in 0..kn {
                before[k].push(b0[k]);
                after[k].push(s.coeffs[k]);
            }
        }
        for k in 0..kn {
            let q = model.spectrum()[k];
            if q == 0.0 {
                continue;
            }
            let (a, b) = (&before[k], &after[k]);
            let ma = a.iter().sum::<f64>() / nf;
            let mb = b.iter().sum::<f64>() / nf;
            let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (nf - 1.0);
            let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (nf - 1.0);
            let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (nf - 1.0);
            let rho = (-lag / epsilon).exp();
            rows.push(OuRow {
                mode: k,
                lag,
                mean: ma,
                mean_band: 3.0 * (0.5 * q / nf).sqrt(),
                variance: va,
                variance_target: 0.5 * q,
                variance_band: 3.0 * 0.5 * q * (2.0 / (nf - 1.0)).sqrt(),
                correlation: cov / (va * vb).sqrt(),
                correlation_target: rho,
                correlation_band: 3.0 * (1.0 - rho * rho) / nf.sqrt(),
            });
        }
    }
    OuReport { epsilon, n_paths, rows }
}

// ---------------------------------------------------------------------------------
// covariance suite

#[derive(Debug, Clone, Serialize)]
pub struct UwCase {
    pub field: String,
    pub probe: usize,
    pub report: UwReport,
}

/// Three frozen fields (bump, nwave, random) against probes e_1 and e_2.
pub fn verify_uw_suite(basis: &WeightedBasis, model: &NoiseModel, n_samples: usize, seed: u64) -> Result<Vec<UwCase>> {
    let fields = [
        ("bump", InitialCondition::Bump { mass: 1.0 }),
        ("nwave", InitialCondition::Nwave { mass: 1.0, amp: 0.3 }),
        ("random", InitialCondition::Random { mass: 0.8, k_max: 6.min(basis.n_modes() - 1), amp: 0.2, seed: derive_seed(seed, 1) }),
    ];
    let mut out = Vec::new();
    for (fi, (name, ic)) in fields.iter().enumerate() {
        let u = ic.build(basis)?;
        for probe in [1usize, 2] {
            let phi = SpectralField::mode(basis, probe);
            let tag = (fi * 2 + probe) as u64;
            let report = verify_uw_covariance(basis, model, &u, &phi, n_samples, derive_seed(seed, tag))?;
            out.push(UwCase { field: name.to_string(), probe, report });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn law(v: &[f64]) -> EmpiricalLaw {
        EmpiricalLaw::new(v.to_vec())
    }

    #[test]
    fn ks_examples() {
        let a = law(&[0.1, 0.5, 0.2, 0.9]);
        assert_eq!(ks_distance(&a, &a), 0.0);
        assert_eq!(ks_distance(&law(&[0.0, 1.0]), &law(&[2.0, 3.0])), 1.0);
        assert_abs_diff_eq!(ks_distance(&law(&[1.0, 2.0]), &law(&[2.0, 3.0])), 0.5);
        // ties across samples
        assert_eq!(ks_distance(&law(&[1.0, 1.0, 2.0]), &law(&[1.0, 2.0, 1.0])), 0.0);
    }

    #[test]
    fn w1_examples() {
        let a = law(&[0.3, -1.0, 2.0]);
        assert_eq!(wasserstein1(&a, &a), 0.0);
        assert_abs_diff_eq!(wasserstein1(&law(&[0.0]), &law(&[2.5])), 2.5);
        let shifted = law(&[1.3, 0.0, 3.0]);
        assert_abs_diff_eq!(wasserstein1(&a, &shifted), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn cdf_is_right_continuous() {
        let a = law(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(a.cdf(0.5), 0.0);
        assert_eq!(a.cdf(2.0), 0.75);
        assert_eq!(a.cdf(3.0), 1.0);
    }

    #[test]
    fn critical_value() {
        assert_abs_diff_eq!(ks_critical(10_000, 10_000, 0.01), 1.6276 * (2.0f64 / 1e4).sqrt(), epsilon = 1e-5);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.04, 0.01];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.5)).collect();
        assert_abs_diff_eq!(loglog_slope(&x, &y), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn test_function_derivatives() {
        let f = TestFunction::Sine { freq: 2.0, phase: 0.3 };
        let h = 1e-5;
        let x = 0.4;
        let fv = |x: f64| (2.0 * x + 0.3).sin();
        assert_abs_diff_eq!(f.d1(x), (fv(x + h) - fv(x - h)) / (2.0 * h), epsilon = 1e-8);
        assert_abs_diff_eq!(f.d2(x), (f.d1(x + h) - f.d1(x - h)) / (2.0 * h), epsilon = 1e-8);
    }
}
