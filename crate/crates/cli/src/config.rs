//! Run configuration: a TOML document with sections `basis`, `noise`, `stepper`,
//! `ic`, `ensemble` and `experiment`. Every section and key is optional; missing
//! values take the defaults below and the filled-in result is echoed in manifests.

use serde::{Deserialize, Serialize};
use stochburgers::dynamics::{InitialCondition, Scheme, StepperConfig};
use stochburgers::stats::Pairing;
use toml::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub nu: f64,
    pub n_modes: usize,
    pub n_quad: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { nu: 1.0, n_modes: 64, n_quad: 128 }
    }
}

/// q_k = σ²ρ^k on the first `k_noise` modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub rho: f64,
    pub k_noise: usize,
    pub q_max: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma: 0.05, rho: 0.6, k_noise: 16, q_max: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub root_seed: u64,
    pub functionals: Vec<usize>,
    /// empty means "t_end only"
    pub observe_times: Vec<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { n_paths: 200, root_seed: 0, functionals: vec![0, 1, 2, 3, 4], observe_times: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunctionKind {
    Linear,
    Quadratic,
    Sine,
}

/// Knobs of the individual verification suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    pub tau: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub repetitions: usize,
    pub min_pass: usize,
    pub alpha: f64,
    pub pairings: Vec<Pairing>,
    pub max_dt: f64,
    pub lags: Vec<f64>,
    pub n_samples: usize,
    pub n_fields: usize,
    pub mass_steps: usize,
    pub n_ics: usize,
    pub sup_horizon: f64,
    pub profile_t_end: f64,
    pub n_pairs: usize,
    pub noise_paths: usize,
    pub rel_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_mass: Option<f64>,
    pub checkpoints: Vec<f64>,
    pub test_function: TestFunctionKind,
    pub freq: f64,
    pub phase: f64,
    pub probe: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            suite: None,
            epsilons: None,
            tau: 5.0,
            tau1: 15.0,
            tau2: 20.0,
            repetitions: 20,
            min_pass: 15,
            alpha: 0.01,
            pairings: vec![Pairing::Corrected],
            max_dt: 0.01,
            lags: Vec::new(),
            n_samples: 100_000,
            n_fields: 1000,
            mass_steps: 10_000,
            n_ics: 50,
            sup_horizon: 10.0,
            profile_t_end: 20.0,
            n_pairs: 20,
            noise_paths: 5,
            rel_tol: 1e-6,
            second_mass: None,
            checkpoints: vec![0.25, 0.5, 0.75, 1.0],
            test_function: TestFunctionKind::Sine,
            freq: 1.0,
            phase: 0.5,
            probe: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub basis: BasisConfig,
    pub noise: NoiseConfig,
    pub stepper: StepperConfig,
    pub ic: InitialCondition,
    pub ensemble: EnsembleConfig,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            basis: BasisConfig::default(),
            noise: NoiseConfig::default(),
            stepper: StepperConfig::default(),
            ic: InitialCondition::Bump { mass: 1.0 },
            ensemble: EnsembleConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

pub const SUITES: [&str; 9] =
    ["basis", "conservation", "profile", "ou", "uw", "contraction", "corrector", "diffusion", "stationarity"];

// (section, key, alternative spellings used only for suggestions)
const KEYS: &[(&str, &[(&str, &[&str])])] = &[
    ("basis", &[("nu", &["viscosity", "diffusivity"]), ("n_modes", &["modes", "n"]), ("n_quad", &["quadrature", "m", "nodes"])]),
    ("noise", &[("sigma", &["amplitude", "strength"]), ("rho", &["decay", "ratio"]), ("k_noise", &["noise_modes"]), ("q_max", &["smallness"])]),
    (
        "stepper",
        &[
            ("scheme", &["method", "integrator"]),
            ("dt", &["step", "time_step", "dtau"]),
            ("t_end", &["tend", "horizon", "t_final", "tau_end"]),
            ("epsilon", &["eps", "correlation_time"]),
            ("r_max", &["guard", "cutoff"]),
            ("record_every", &["stride", "output_every"]),
        ],
    ),
    ("ic", &[("preset", &["kind", "type", "initial_condition"]), ("mass", &["m"]), ("amp", &["amplitude"]), ("k_max", &["kmax"]), ("seed", &[])]),
    ("ensemble", &[("n_paths", &["paths", "samples"]), ("root_seed", &["seed"]), ("functionals", &["modes"]), ("observe_times", &["times", "observe"])]),
    (
        "experiment",
        &[
            ("suite", &["selector", "check"]),
            ("epsilons", &["epsilon", "eps", "eps_grid"]),
            ("tau", &["time"]),
            ("tau1", &[]),
            ("tau2", &[]),
            ("repetitions", &["reps"]),
            ("min_pass", &[]),
            ("alpha", &["significance", "level"]),
            ("pairings", &["pairing"]),
            ("max_dt", &[]),
            ("lags", &["lag"]),
            ("n_samples", &["samples"]),
            ("n_fields", &["fields"]),
            ("mass_steps", &[]),
            ("n_ics", &[]),
            ("sup_horizon", &[]),
            ("profile_t_end", &[]),
            ("n_pairs", &["pairs"]),
            ("noise_paths", &[]),
            ("rel_tol", &["tolerance", "tol"]),
            ("second_mass", &[]),
            ("checkpoints", &[]),
            ("test_function", &["f"]),
            ("freq", &["frequency"]),
            ("phase", &[]),
            ("probe", &["phi"]),
        ],
    ),
];

fn keys_of(section: &str) -> &'static [(&'static str, &'static [&'static str])] {
    KEYS.iter().find(|(s, _)| *s == section).map_or(&[], |(_, k)| k)
}

/// Closest known name to `word`, looking at keys and their alternative spellings.
fn suggest(word: &str, candidates: impl IntoIterator<Item = (String, Vec<String>)>) -> Option<String> {
    let w = word.to_ascii_lowercase();
    let mut best: Option<(f64, String)> = None;
    for (name, alts) in candidates {
        for probe in std::iter::once(name.clone()).chain(alts) {
            let d = strsim::damerau_levenshtein(&w, &probe) as f64 / w.len().max(probe.len()).max(1) as f64;
            if d <= 0.4 && best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, name.clone()));
            }
        }
    }
    best.map(|(_, n)| n)
}

fn unknown_key(section: Option<&str>, key: &str) -> String {
    let cands: Vec<(String, Vec<String>)> = match section {
        Some(s) => keys_of(s).iter().map(|(k, alts)| (k.to_string(), alts.iter().map(|a| a.to_string()).collect())).collect(),
        None => KEYS
            .iter()
            .map(|(s, _)| (s.to_string(), Vec::new()))
            .chain(KEYS.iter().flat_map(|(s, ks)| {
                ks.iter().map(move |(k, alts)| (format!("{s}.{k}"), std::iter::once(k.to_string()).chain(alts.iter().map(|a| a.to_string())).collect()))
            }))
            .collect(),
    };
    let place = section.map_or("top level".to_string(), |s| format!("[{s}]"));
    match suggest(key, cands) {
        Some(s) => format!("unknown key `{key}` in {place}; did you mean `{s}`?"),
        None => format!("unknown key `{key}` in {place}"),
    }
}

// Typed reads from one table, recording every problem instead of stopping.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a toml::Table>,
    errors: &'a mut Vec<String>,
}

impl Section<'_> {
    fn raw(&self, key: &str) -> Option<&Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn bad(&mut self, key: &str, want: &str, got: &Value) {
        self.errors.push(format!("{}.{key}: expected {want}, got {}", self.name, got.type_str()));
    }

    fn float(&mut self, key: &str, slot: &mut f64) {
        match self.raw(key).cloned() {
            None => {}
            Some(Value::Float(x)) => *slot = x,
            Some(Value::Integer(i)) => *slot = i as f64,
            Some(v) => self.bad(key, "a number", &v),
        }
    }

    fn uint(&mut self, key: &str, slot: &mut usize) {
        match self.raw(key).cloned() {
            None => {}
            Some(Value::Integer(i)) if i >= 0 => *slot = i as usize,
            Some(Value::Integer(i)) => self.errors.push(format!("{}.{key}: must be non-negative, got {i}", self.name)),
            Some(v) => self.bad(key, "a non-negative integer", &v),
        }
    }

    fn seed(&mut self, key: &str, slot: &mut u64) {
        match self.raw(key).cloned() {
            None => {}
            Some(Value::Integer(i)) if i >= 0 => *slot = i as u64,
            // seeds above i64::MAX can be written as strings
            Some(Value::String(s)) => match s.parse() {
                Ok(v) => *slot = v,
                Err(_) => self.errors.push(format!("{}.{key}: `{s}` is not an unsigned 64-bit integer", self.name)),
            },
            Some(v) => self.bad(key, "a non-negative integer", &v),
        }
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.raw(key).cloned() {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(v) => {
                self.bad(key, "a string", &v);
                None
            }
        }
    }

    fn floats(&mut self, key: &str) -> Option<Vec<f64>> {
        let v = self.raw(key)?.clone();
        let arr = match v {
            Value::Array(a) => a,
            other => {
                self.bad(key, "an array of numbers", &other);
                return None;
            }
        };
        let mut out = Vec::with_capacity(arr.len());
        for x in arr {
            match x {
                Value::Float(f) => out.push(f),
                Value::Integer(i) => out.push(i as f64),
                other => {
                    self.bad(key, "an array of numbers", &other);
                    return None;
                }
            }
        }
        Some(out)
    }

    fn uints(&mut self, key: &str) -> Option<Vec<usize>> {
        let v = self.raw(key)?.clone();
        match v {
            Value::Array(a) if a.iter().all(|x| matches!(x, Value::Integer(i) if *i >= 0)) => {
                Some(a.into_iter().map(|x| x.as_integer().unwrap_or(0) as usize).collect())
            }
            other => {
                self.bad(key, "an array of non-negative integers", &other);
                None
            }
        }
    }

    fn strings(&mut self, key: &str) -> Option<Vec<String>> {
        let v = self.raw(key)?.clone();
        match v {
            Value::String(s) => Some(vec![s]),
            Value::Array(a) if a.iter().all(Value::is_str) => {
                Some(a.into_iter().map(|x| x.as_str().unwrap_or_default().to_string()).collect())
            }
            other => {
                self.bad(key, "a string or an array of strings", &other);
                None
            }
        }
    }
}

fn section<'a>(root: &'a toml::Table, name: &'static str, errors: &'a mut Vec<String>) -> Section<'a> {
    let table = match root.get(name) {
        None => None,
        Some(Value::Table(t)) => {
            let known = keys_of(name);
            for k in t.keys() {
                if !known.iter().any(|(n, _)| n == k) {
                    errors.push(unknown_key(Some(name), k));
                }
            }
            Some(t)
        }
        Some(v) => {
            errors.push(format!("[{name}] must be a table, got {}", v.type_str()));
            None
        }
    };
    Section { name, table, errors }
}

/// Parses and validates a config document, reporting every violation at once.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<String>> {
    let root: toml::Table = text.parse().map_err(|e: toml::de::Error| vec![format!("malformed document: {}", e.message())])?;
    let mut errors = Vec::new();
    for k in root.keys() {
        if !KEYS.iter().any(|(s, _)| s == k) {
            errors.push(unknown_key(None, k));
        }
    }
    let mut cfg = RunConfig::default();

    let mut s = section(&root, "basis", &mut errors);
    s.float("nu", &mut cfg.basis.nu);
    s.uint("n_modes", &mut cfg.basis.n_modes);
    s.uint("n_quad", &mut cfg.basis.n_quad);

    let mut s = section(&root, "noise", &mut errors);
    s.float("sigma", &mut cfg.noise.sigma);
    s.float("rho", &mut cfg.noise.rho);
    s.uint("k_noise", &mut cfg.noise.k_noise);
    s.float("q_max", &mut cfg.noise.q_max);

    let mut s = section(&root, "stepper", &mut errors);
    if let Some(name) = s.string("scheme") {
        match Scheme::from_name(&name) {
            Some(sc) => cfg.stepper.scheme = sc,
            None => {
                let names = Scheme::ALL.map(Scheme::name);
                let hint = suggest(&name, names.iter().map(|n| (n.to_string(), Vec::new())))
                    .map_or(String::new(), |n| format!("; did you mean `{n}`?"));
                s.errors.push(format!("stepper.scheme: unknown scheme `{name}` (one of {}){hint}", names.join(", ")));
            }
        }
    }
    s.float("dt", &mut cfg.stepper.dt);
    s.float("t_end", &mut cfg.stepper.t_end);
    s.float("epsilon", &mut cfg.stepper.epsilon);
    s.float("r_max", &mut cfg.stepper.r_max);
    s.uint("record_every", &mut cfg.stepper.record_every);

    let mut s = section(&root, "ic", &mut errors);
    let preset = s.string("preset").unwrap_or_else(|| "bump".into());
    let (mut mass, mut amp, mut k_max, mut seed) = (1.0, 0.1, 8usize, 0u64);
    s.float("mass", &mut mass);
    s.float("amp", &mut amp);
    s.uint("k_max", &mut k_max);
    s.seed("seed", &mut seed);
    let used: &[&str] = match preset.as_str() {
        "bump" => &["preset", "mass"],
        "nwave" => &["preset", "mass", "amp"],
        "random" => &["preset", "mass", "amp", "k_max", "seed"],
        "zero" => &["preset"],
        _ => &[],
    };
    cfg.ic = match preset.as_str() {
        "bump" => InitialCondition::Bump { mass },
        "nwave" => InitialCondition::Nwave { mass, amp },
        "random" => InitialCondition::Random { mass, k_max, amp, seed },
        "zero" => InitialCondition::Zero,
        other => {
            s.errors.push(format!("ic.preset: unknown preset `{other}` (one of bump, nwave, random, zero)"));
            InitialCondition::Bump { mass }
        }
    };
    if let (Some(t), false) = (s.table, used.is_empty()) {
        for k in t.keys().filter(|k| !used.contains(&k.as_str()) && keys_of("ic").iter().any(|(n, _)| n == k)) {
            s.errors.push(format!("ic.{k}: not used by preset `{preset}`"));
        }
    }

    let mut s = section(&root, "ensemble", &mut errors);
    s.uint("n_paths", &mut cfg.ensemble.n_paths);
    s.seed("root_seed", &mut cfg.ensemble.root_seed);
    if let Some(v) = s.uints("functionals") {
        cfg.ensemble.functionals = v;
    }
    if let Some(v) = s.floats("observe_times") {
        cfg.ensemble.observe_times = v;
    }

    let mut s = section(&root, "experiment", &mut errors);
    let e = &mut cfg.experiment;
    e.suite = s.string("suite");
    e.epsilons = s.floats("epsilons");
    s.float("tau", &mut e.tau);
    s.float("tau1", &mut e.tau1);
    s.float("tau2", &mut e.tau2);
    s.uint("repetitions", &mut e.repetitions);
    s.uint("min_pass", &mut e.min_pass);
    s.float("alpha", &mut e.alpha);
    if let Some(names) = s.strings("pairings") {
        let mut ps = Vec::new();
        for n in names {
            match n.as_str() {
                "corrected" => ps.push(Pairing::Corrected),
                "plain" => ps.push(Pairing::Plain),
                other => s.errors.push(format!("experiment.pairings: unknown pairing `{other}` (corrected or plain)")),
            }
        }
        e.pairings = ps;
    }
    s.float("max_dt", &mut e.max_dt);
    if let Some(v) = s.floats("lags") {
        e.lags = v;
    }
    s.uint("n_samples", &mut e.n_samples);
    s.uint("n_fields", &mut e.n_fields);
    s.uint("mass_steps", &mut e.mass_steps);
    s.uint("n_ics", &mut e.n_ics);
    s.float("sup_horizon", &mut e.sup_horizon);
    s.float("profile_t_end", &mut e.profile_t_end);
    s.uint("n_pairs", &mut e.n_pairs);
    s.uint("noise_paths", &mut e.noise_paths);
    s.float("rel_tol", &mut e.rel_tol);
    if s.raw("second_mass").is_some() {
        let mut m = 0.0;
        s.float("second_mass", &mut m);
        e.second_mass = Some(m);
    }
    if let Some(v) = s.floats("checkpoints") {
        e.checkpoints = v;
    }
    if let Some(f) = s.string("test_function") {
        match f.as_str() {
            "linear" => e.test_function = TestFunctionKind::Linear,
            "quadratic" => e.test_function = TestFunctionKind::Quadratic,
            "sine" => e.test_function = TestFunctionKind::Sine,
            other => s.errors.push(format!("experiment.test_function: unknown `{other}` (linear, quadratic or sine)")),
        }
    }
    s.float("freq", &mut e.freq);
    s.float("phase", &mut e.phase);
    s.uint("probe", &mut e.probe);

    cfg.fill_defaults();
    errors.extend(cfg.violations());
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

/// Accepts a config document or a run manifest (JSON with a `config` object).
pub fn parse_any(text: &str) -> Result<RunConfig, Vec<String>> {
    if text.trim_start().starts_with('{') {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| vec![format!("malformed manifest: {e}")])?;
        let cfg = v.get("config").cloned().ok_or_else(|| vec!["manifest has no `config` object".to_string()])?;
        let cfg: RunConfig = serde_json::from_value(cfg).map_err(|e| vec![format!("manifest config: {e}")])?;
        let errors = cfg.violations();
        return if errors.is_empty() { Ok(cfg) } else { Err(errors) };
    }
    parse_config(text)
}

impl RunConfig {
    fn fill_defaults(&mut self) {
        if self.experiment.lags.is_empty() {
            let eps = self.stepper.epsilon;
            self.experiment.lags = vec![0.5 * eps, eps, 2.0 * eps];
        }
        if self.ensemble.observe_times.is_empty() {
            self.ensemble.observe_times = vec![self.stepper.t_end];
        }
    }

    /// Range and cross-field rules; empty when the config is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                v.push(msg);
            }
        };
        let (b, n, st, en, ex) = (&self.basis, &self.noise, &self.stepper, &self.ensemble, &self.experiment);
        let positive = |x: f64| x > 0.0 && x.is_finite();

        need(positive(b.nu), format!("basis.nu must be positive, got {}", b.nu));
        need(b.n_modes >= 2, format!("basis.n_modes must be at least 2, got {}", b.n_modes));
        need(
            b.n_quad >= 2 * b.n_modes,
            format!("basis.n_quad = {} is below 2·n_modes = {}; raise n_quad or lower n_modes", b.n_quad, 2 * b.n_modes),
        );
        need(n.sigma >= 0.0 && n.sigma.is_finite(), format!("noise.sigma must be non-negative, got {}", n.sigma));
        need(n.rho > 0.0 && n.rho < 1.0, format!("noise.rho must lie in (0, 1), got {}", n.rho));
        need(
            n.k_noise < b.n_modes,
            format!("noise.k_noise = {} must be at most n_modes-1 = {}", n.k_noise, b.n_modes.saturating_sub(1)),
        );
        need(positive(n.q_max), format!("noise.q_max must be positive, got {}", n.q_max));

        need(positive(st.dt), format!("stepper.dt must be positive, got {}", st.dt));
        need(st.t_end >= 0.0 && st.t_end.is_finite(), format!("stepper.t_end must be non-negative, got {}", st.t_end));
        need(positive(st.epsilon), format!("stepper.epsilon must be positive, got {}", st.epsilon));
        need(positive(st.r_max), format!("stepper.r_max must be positive, got {}", st.r_max));
        need(st.record_every >= 1, "stepper.record_every must be at least 1".into());
        if st.scheme.is_rde() {
            need(
                st.dt <= st.epsilon / 10.0 * (1.0 + 1e-12),
                format!(
                    "stepper.dt = {} violates dt ≤ ε/10 = {} for {}; use dt ≤ {}",
                    st.dt,
                    st.epsilon / 10.0,
                    st.scheme,
                    st.epsilon / 10.0
                ),
            );
        }

        match self.ic {
            InitialCondition::Random { k_max, .. } => need(
                k_max >= 1 && k_max < b.n_modes,
                format!("ic.k_max = {k_max} must lie in 1..={}", b.n_modes.saturating_sub(1)),
            ),
            InitialCondition::Nwave { .. } | InitialCondition::Bump { .. } | InitialCondition::Zero => {}
        }

        need(en.n_paths >= 1, "ensemble.n_paths must be at least 1".into());
        need(!en.functionals.is_empty(), "ensemble.functionals must not be empty".into());
        if let Some(k) = en.functionals.iter().find(|&&k| k >= b.n_modes) {
            need(false, format!("ensemble.functionals: mode {k} is out of range for n_modes = {}", b.n_modes));
        }
        if en.observe_times.iter().any(|&t| !(t >= 0.0 && t <= st.t_end * (1.0 + 1e-12))) {
            need(false, format!("ensemble.observe_times must lie in [0, t_end = {}]", st.t_end));
        }
        if en.observe_times.windows(2).any(|w| w[1] <= w[0]) {
            need(false, "ensemble.observe_times must be strictly increasing".into());
        }

        if let Some(s) = &ex.suite {
            if !SUITES.contains(&s.as_str()) {
                let hint = suggest(s, SUITES.iter().map(|n| (n.to_string(), Vec::new())))
                    .map_or(String::new(), |n| format!("; did you mean `{n}`?"));
                need(false, format!("experiment.suite: unknown suite `{s}`{hint}"));
            }
        }
        if let Some(eps) = &ex.epsilons {
            if eps.len() < 2 || eps.iter().any(|&e| !positive(e)) || eps.windows(2).any(|w| w[1] >= w[0]) {
                need(false, format!("experiment.epsilons must hold at least two positive, strictly decreasing values, got {eps:?}"));
            }
        }
        need(positive(ex.tau), format!("experiment.tau must be positive, got {}", ex.tau));
        need(ex.tau1 >= 0.0 && ex.tau2 > ex.tau1, format!("experiment needs 0 ≤ tau1 < tau2, got {} and {}", ex.tau1, ex.tau2));
        need(ex.repetitions >= 1, "experiment.repetitions must be at least 1".into());
        need(
            ex.min_pass <= ex.repetitions,
            format!("experiment.min_pass = {} exceeds repetitions = {}", ex.min_pass, ex.repetitions),
        );
        need(ex.alpha > 0.0 && ex.alpha < 1.0, format!("experiment.alpha must lie in (0, 1), got {}", ex.alpha));
        need(!ex.pairings.is_empty(), "experiment.pairings must not be empty".into());
        need(positive(ex.max_dt), format!("experiment.max_dt must be positive, got {}", ex.max_dt));
        if ex.lags.iter().any(|&l| !positive(l)) {
            need(false, format!("experiment.lags must be positive, got {:?}", ex.lags));
        }
        need(ex.n_samples >= 2, "experiment.n_samples must be at least 2".into());
        need(positive(ex.sup_horizon), "experiment.sup_horizon must be positive".into());
        need(positive(ex.profile_t_end), "experiment.profile_t_end must be positive".into());
        need(positive(ex.rel_tol), "experiment.rel_tol must be positive".into());
        if ex.checkpoints.is_empty() || ex.checkpoints.iter().any(|&t| !positive(t)) || ex.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            need(false, format!("experiment.checkpoints must be positive and strictly increasing, got {:?}", ex.checkpoints));
        }
        need(
            ex.probe < b.n_modes,
            format!("experiment.probe = {} is out of range for n_modes = {}", ex.probe, b.n_modes),
        );
        drop(need);
        v
    }

    /// Extra requirements of one command or suite, checked before any work starts.
    pub fn requirements(&self, task: &str) -> Vec<String> {
        let mut v = Vec::new();
        let ex = &self.experiment;
        match task {
            "diffusion" | "compare-limit" | "corrector" if ex.epsilons.is_none() => {
                v.push(format!("`{task}` needs experiment.epsilons, e.g. epsilons = [0.1, 0.04, 0.01]"));
            }
            "contraction" => {
                if !self.stepper.scheme.is_rde() {
                    v.push(format!("contraction runs an rde scheme; stepper.scheme is {}", self.stepper.scheme));
                }
                let m = self.ic_mass();
                if let Some(m2) = ex.second_mass {
                    if (m2 - m).abs() > 1e-10 {
                        v.push(format!("contraction needs equal masses: ic.mass = {m}, experiment.second_mass = {m2}"));
                    }
                }
            }
            _ => {}
        }
        v
    }

    pub fn ic_mass(&self) -> f64 {
        match self.ic {
            InitialCondition::Bump { mass } | InitialCondition::Nwave { mass, .. } | InitialCondition::Random { mass, .. } => mass,
            InitialCondition::Zero => 0.0,
        }
    }

    /// Canonical JSON form; the manifest hash is taken over these bytes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.basis, BasisConfig::default());
        assert_eq!(cfg.ensemble.observe_times, vec![cfg.stepper.t_end]);
        assert_eq!(cfg.experiment.lags.len(), 3);
    }

    #[test]
    fn rde_step_rule() {
        let errs = parse_config("[stepper]\nscheme = \"rde_plain\"\ndt = 0.01\nepsilon = 0.05\n").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("dt ≤ ε/10"), "{errs:?}");
    }

    #[test]
    fn misspelled_key_gets_suggestion() {
        let errs = parse_config("[basis]\nviscocity = 0.5\n").unwrap_err();
        assert!(errs[0].contains("did you mean `nu`"), "{errs:?}");
        let errs = parse_config("[stepper]\nepsilom = 0.5\n").unwrap_err();
        assert!(errs[0].contains("`epsilon`"), "{errs:?}");
        let errs = parse_config("viscocity = 0.5\n").unwrap_err();
        assert!(errs[0].contains("`basis.nu`"), "{errs:?}");
    }

    #[test]
    fn all_violations_are_reported() {
        let errs = parse_config("[basis]\nn_modes = 32\nn_quad = 40\n[noise]\nk_noise = 40\nrho = \"x\"\n[bogus]\n").unwrap_err();
        assert_eq!(errs.len(), 4, "{errs:?}");
        let errs = parse_config("[basis]\nn_modes = 32\nn_quad = 40\n[noise]\nk_noise = 40\n").unwrap_err();
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn manifest_round_trip() {
        let cfg = parse_config("[ic]\npreset = \"random\"\nk_max = 4\nseed = 9\n").unwrap();
        let doc = format!("{{\"config\": {}}}", cfg.canonical_json());
        assert_eq!(parse_any(&doc).unwrap(), cfg);
    }
}
