//! Time integrators in spectral coordinates.
//!
//! Every scheme is semi-implicit: 𝓛 is diagonal and treated exactly through the
//! division by 1 + Δτ·k/2, all other terms are explicit and evaluated at the start of
//! the step. The forcing terms are assembled as exact ξ-derivatives of collocation
//! products, so mode 0 (the mass) never changes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{SpectralField, WeightedBasis};
use crate::error::{Error, Result};
use crate::noise::{NoiseModel, OUState};
use crate::rng::{path_rng, IC_STREAM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Itô SPDE with (u dW)_ξ forcing.
    SpdeIto,
    /// Random PDE driven by η̄^ε/√ε.
    RdePlain,
    /// Random PDE with the correctors -½(u q)_ξξ + ½(u q')_ξ.
    RdeCorrected,
    /// Itô SPDE with the correctors +½(u q)_ξξ - ½(u q')_ξ.
    SpdeLimit,
    Deterministic,
}

impl Scheme {
    pub const ALL: [Scheme; 5] =
        [Scheme::SpdeIto, Scheme::RdePlain, Scheme::RdeCorrected, Scheme::SpdeLimit, Scheme::Deterministic];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::SpdeIto => "spde_ito",
            Scheme::RdePlain => "rde_plain",
            Scheme::RdeCorrected => "rde_corrected",
            Scheme::SpdeLimit => "spde_limit",
            Scheme::Deterministic => "deterministic",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }

    pub fn is_rde(self) -> bool {
        matches!(self, Scheme::RdePlain | Scheme::RdeCorrected)
    }

    pub fn is_spde(self) -> bool {
        matches!(self, Scheme::SpdeIto | Scheme::SpdeLimit)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    /// OU correlation time; only read by the rde schemes.
    pub epsilon: f64,
    pub r_max: f64,
    pub record_every: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self { scheme: Scheme::Deterministic, dt: 0.01, t_end: 1.0, epsilon: 0.1, r_max: 1e3, record_every: 1 }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        if !(self.r_max > 0.0) {
            return Err(Error::InvalidParameter(format!("r_max must be positive, got {}", self.r_max)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be at least 1".into()));
        }
        if self.scheme.is_rde() {
            if !(self.epsilon > 0.0) {
                return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
            }
            if self.dt > self.epsilon / 10.0 * (1.0 + 1e-12) {
                return Err(Error::StepTooLarge { dt: self.dt, epsilon: self.epsilon });
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Step index closest to time `tau`.
    pub fn step_index(&self, tau: f64) -> usize {
        (tau / self.dt).round() as usize
    }
}

/// Reusable scratch space and constants for one path.
pub struct Stepper<'a> {
    basis: &'a WeightedBasis,
    model: &'a NoiseModel,
    cfg: StepperConfig,
    noisy: bool,
    inv_denominator: Vec<f64>,
    vu: Vec<f64>,
    vn: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    dw: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(basis: &'a WeightedBasis, model: &'a NoiseModel, cfg: &StepperConfig) -> Result<Self> {
        cfg.validate()?;
        if model.basis_id() != basis.id() {
            return Err(Error::BasisMismatch { left: basis.id(), right: model.basis_id() });
        }
        let (m, n) = (basis.n_quad(), basis.n_modes());
        let noisy = cfg.scheme != Scheme::Deterministic && !model.is_zero();
        Ok(Self {
            basis,
            model,
            cfg: cfg.clone(),
            noisy,
            inv_denominator: (0..n).map(|k| 1.0 / (1.0 + cfg.dt * k as f64 / 2.0)).collect(),
            vu: vec![0.0; m],
            vn: vec![0.0; m],
            g1: vec![0.0; m],
            g2: vec![0.0; m],
            p1: vec![0.0; n],
            p2: vec![0.0; n],
            dw: vec![0.0; model.k_noise()],
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    pub fn basis(&self) -> &WeightedBasis {
        self.basis
    }

    pub fn model(&self) -> &NoiseModel {
        self.model
    }

    /// True when the scheme actually consumes random numbers.
    pub fn is_noisy(&self) -> bool {
        self.noisy
    }

    // u ← (u + ∂P(g1) + ∂²P(g2)) / (1 + Δτ k/2), where g1, g2 are weighted node values
    fn finish(&mut self, u: &mut [f64], second: bool) {
        let r = self.basis.deriv_shift();
        let n = u.len();
        self.basis.project(&self.g1, &mut self.p1);
        if second {
            self.basis.project(&self.g2, &mut self.p2);
            for k in (2..n).rev() {
                u[k] += r[k - 1] * (self.p1[k - 1] + r[k - 2] * self.p2[k - 2]);
            }
            u[1] += r[0] * self.p1[0];
        } else {
            for k in (1..n).rev() {
                u[k] += r[k - 1] * self.p1[k - 1];
            }
        }
        for (c, d) in u.iter_mut().zip(&self.inv_denominator) {
            *c *= d;
        }
    }

    fn deterministic_step(&mut self, u: &mut [f64]) {
        let dt = self.cfg.dt;
        self.basis.synthesize(u, &mut self.vu);
        let s = self.basis.node_scale();
        for i in 0..self.vu.len() {
            let a = self.vu[i];
            self.g1[i] = -0.5 * dt * s[i] * a * a;
        }
        self.finish(u, false);
    }

    // shared body of all noisy schemes; `vn` holds the weighted node values of the
    // increment that multiplies u inside the first derivative
    fn noisy_step(&mut self, u: &mut [f64], corrector: f64) {
        let dt = self.cfg.dt;
        let s = self.basis.node_scale();
        let qd = self.model.q_diag_nodes();
        let qpd = self.model.qp_diag_nodes();
        let c1 = -0.5 * dt * corrector;
        let c2 = 0.5 * dt * corrector;
        for i in 0..self.vu.len() {
            let a = self.vu[i];
            self.g1[i] = a * (s[i] * (-0.5 * dt * a + self.vn[i]) + c1 * qpd[i]);
            self.g2[i] = a * c2 * qd[i];
        }
        self.finish(u, corrector != 0.0);
    }

    /// One semi-implicit Euler-Maruyama step of spde_ito / spde_limit, or the
    /// deterministic step when the noise is off.
    pub fn step_spde<R: Rng + ?Sized>(&mut self, u: &mut [f64], rng: &mut R) {
        if !self.noisy {
            return self.deterministic_step(u);
        }
        let dt = self.cfg.dt;
        self.model.fill_wiener(dt, rng, &mut self.dw);
        self.basis.synthesize(u, &mut self.vu);
        self.basis.synthesize(&self.dw, &mut self.vn);
        let corrector = if self.cfg.scheme == Scheme::SpdeLimit { 1.0 } else { 0.0 };
        self.noisy_step(u, corrector);
    }

    /// Spde step with a caller-supplied Wiener increment (modal coefficients).
    pub fn step_spde_with(&mut self, u: &mut [f64], dw: &[f64]) {
        if !self.noisy {
            return self.deterministic_step(u);
        }
        self.basis.synthesize(u, &mut self.vu);
        self.basis.synthesize(&dw[..self.model.k_noise()], &mut self.vn);
        let corrector = if self.cfg.scheme == Scheme::SpdeLimit { 1.0 } else { 0.0 };
        self.noisy_step(u, corrector);
    }

    /// Rde step with the OU state frozen at `eta`; the caller advances the OU process.
    pub fn step_rde_frozen(&mut self, u: &mut [f64], eta: &[f64]) {
        if !self.noisy {
            return self.deterministic_step(u);
        }
        let scale = self.cfg.dt / self.cfg.epsilon.sqrt();
        self.basis.synthesize(u, &mut self.vu);
        self.basis.synthesize(eta, &mut self.vn);
        self.vn.iter_mut().for_each(|v| *v *= scale);
        let corrector = if self.cfg.scheme == Scheme::RdeCorrected { -1.0 } else { 0.0 };
        self.noisy_step(u, corrector);
    }

    /// Rde step followed by the exact OU transition.
    pub fn step_rde<R: Rng + ?Sized>(&mut self, u: &mut [f64], ou: &mut OUState, rng: &mut R) {
        self.step_rde_frozen(u, &ou.coeffs);
        if self.noisy {
            ou.step(self.model, self.cfg.dt, rng);
        }
    }

    /// Advances whichever scheme is configured. `ou` is required for the rde schemes.
    pub fn step<R: Rng + ?Sized>(&mut self, u: &mut [f64], ou: Option<&mut OUState>, rng: &mut R) {
        match self.cfg.scheme {
            Scheme::RdePlain | Scheme::RdeCorrected => {
                let ou = ou.expect("rde schemes need an OU state");
                self.step_rde(u, ou, rng)
            }
            _ => self.step_spde(u, rng),
        }
    }

    /// Guard and finiteness checks on a freshly stepped state.
    pub fn check_state(&self, u: &[f64], tau: f64) -> Result<()> {
        if u.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { tau });
        }
        let norm = self.basis.h1k_norm_coeffs(u);
        if norm > self.cfg.r_max {
            return Err(Error::GuardTripped { tau, norm, r_max: self.cfg.r_max });
        }
        Ok(())
    }

    /// Initial OU state for the configured scheme (None for non-rde schemes).
    pub fn initial_ou<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<OUState> {
        if !self.cfg.scheme.is_rde() {
            return None;
        }
        if self.noisy {
            Some(OUState::stationary(self.model, self.cfg.epsilon, rng))
        } else {
            Some(OUState { coeffs: vec![0.0; self.model.k_noise()], epsilon: self.cfg.epsilon, tau: 0.0 })
        }
    }
}

/// 𝓛u - ½∂_ξ(u²).
pub fn rhs_deterministic(basis: &WeightedBasis, u: &SpectralField) -> Result<SpectralField> {
    let sq = basis.pointwise_product(u, u)?;
    basis.apply_l(u).axpy(-0.5, &basis.derivative_xi(&sq))
}

/// ∂_ξ P(u w): product first, then the shift.
pub fn advective_conservative(basis: &WeightedBasis, u: &SpectralField, w: &SpectralField) -> Result<SpectralField> {
    Ok(basis.derivative_xi(&basis.pointwise_product(u, w)?))
}

/// P(u_ξ w) + P(u w_ξ): the Leibniz assembly of the same term.
pub fn advective_leibniz(basis: &WeightedBasis, u: &SpectralField, w: &SpectralField) -> Result<SpectralField> {
    let a = basis.pointwise_product(&basis.derivative_xi(u), w)?;
    let b = basis.pointwise_product(u, &basis.derivative_xi(w))?;
    a.add(&b)
}

fn check_scheme(cfg: &StepperConfig, ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} called with scheme {}", cfg.scheme)))
    }
}

fn checked(stepper: &Stepper, c: Vec<f64>, basis: &WeightedBasis, tau: f64) -> Result<SpectralField> {
    stepper.check_state(&c, tau)?;
    SpectralField::from_coeffs(basis, &c)
}

pub fn step_spde_ito<R: Rng + ?Sized>(
    basis: &WeightedBasis,
    u: &SpectralField,
    model: &NoiseModel,
    cfg: &StepperConfig,
    rng: &mut R,
) -> Result<SpectralField> {
    check_scheme(cfg, cfg.scheme == Scheme::SpdeIto, "step_spde_ito")?;
    let mut st = Stepper::new(basis, model, cfg)?;
    let mut c = u.coeffs().to_vec();
    st.step_spde(&mut c, rng);
    checked(&st, c, basis, cfg.dt)
}

pub fn step_spde_limit<R: Rng + ?Sized>(
    basis: &WeightedBasis,
    u: &SpectralField,
    model: &NoiseModel,
    cfg: &StepperConfig,
    rng: &mut R,
) -> Result<SpectralField> {
    check_scheme(cfg, cfg.scheme == Scheme::SpdeLimit, "step_spde_limit")?;
    let mut st = Stepper::new(basis, model, cfg)?;
    let mut c = u.coeffs().to_vec();
    st.step_spde(&mut c, rng);
    checked(&st, c, basis, cfg.dt)
}

pub fn step_rde<R: Rng + ?Sized>(
    basis: &WeightedBasis,
    u: &SpectralField,
    ou: &OUState,
    model: &NoiseModel,
    cfg: &StepperConfig,
    rng: &mut R,
) -> Result<(SpectralField, OUState)> {
    check_scheme(cfg, cfg.scheme.is_rde(), "step_rde")?;
    let mut st = Stepper::new(basis, model, cfg)?;
    let mut c = u.coeffs().to_vec();
    let mut ou = ou.clone();
    st.step_rde(&mut c, &mut ou, rng);
    Ok((checked(&st, c, basis, cfg.dt)?, ou))
}

/// Named initial conditions; all have finitely many modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum InitialCondition {
    /// mass × unit-mass Gaussian
    Bump { mass: f64 },
    /// mass × unit-mass Gaussian + amp·e_1
    Nwave { mass: f64, amp: f64 },
    /// mass × unit-mass Gaussian + Σ_{1≤k≤k_max} amp·g_k/k with seeded g_k ~ N(0,1)
    Random { mass: f64, k_max: usize, amp: f64, seed: u64 },
    Zero,
}

impl InitialCondition {
    pub fn build(&self, basis: &WeightedBasis) -> Result<SpectralField> {
        use rand_distr::StandardNormal;
        let gauss = |m: f64| basis.unit_mass_gaussian().scaled(m);
        match *self {
            InitialCondition::Bump { mass } => Ok(gauss(mass)),
            InitialCondition::Nwave { mass, amp } => {
                let mut u = gauss(mass);
                if basis.n_modes() < 2 {
                    return Err(Error::InvalidParameter("nwave needs at least 2 modes".into()));
                }
                u.coeffs_mut()[1] = amp;
                Ok(u)
            }
            InitialCondition::Random { mass, k_max, amp, seed } => {
                if k_max >= basis.n_modes() {
                    return Err(Error::InvalidParameter(format!(
                        "random IC k_max = {k_max} must be below n_modes = {}",
                        basis.n_modes()
                    )));
                }
                let mut rng = path_rng(seed, IC_STREAM);
                let mut u = gauss(mass);
                for k in 1..=k_max {
                    let g: f64 = rng.sample(StandardNormal);
                    u.coeffs_mut()[k] = amp * g / k as f64;
                }
                Ok(u)
            }
            InitialCondition::Zero => Ok(SpectralField::zeros(basis)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mass: f64,
    pub sup_norm: f64,
    pub l2k_norm: f64,
    pub h1k_norm: f64,
    pub tail_energy: f64,
    pub guard_tripped: bool,
}

impl Diagnostics {
    pub fn of(basis: &WeightedBasis, u: &SpectralField, r_max: f64) -> Self {
        let h1 = basis.h1k_norm(u);
        Self {
            mass: basis.mass(u),
            sup_norm: basis.sup_norm(u),
            l2k_norm: u.l2k_norm(),
            h1k_norm: h1,
            tail_energy: u.tail_energy(),
            guard_tripped: h1 > r_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
    pub diagnostics: Vec<Diagnostics>,
}

impl Trajectory {
    fn push(&mut self, basis: &WeightedBasis, tau: f64, u: SpectralField, r_max: f64) {
        self.diagnostics.push(Diagnostics::of(basis, &u, r_max));
        self.times.push(tau);
        self.states.push(u);
    }

    pub fn last(&self) -> Option<&SpectralField> {
        self.states.last()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug, Clone)]
pub struct IntegrationFailure {
    pub error: Error,
    pub partial: Trajectory,
}

impl std::fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({} snapshots kept)", self.error, self.partial.len())
    }
}

impl std::error::Error for IntegrationFailure {}

/// Runs the configured scheme from `u0`, recording every `record_every` steps and
/// always the final state.
pub fn integrate<R: Rng + ?Sized>(
    basis: &WeightedBasis,
    model: &NoiseModel,
    cfg: &StepperConfig,
    u0: &SpectralField,
    rng: &mut R,
) -> std::result::Result<Trajectory, IntegrationFailure> {
    let mut traj = Trajectory { times: Vec::new(), states: Vec::new(), diagnostics: Vec::new() };
    let fail = |error, partial| IntegrationFailure { error, partial };
    let mut st = match Stepper::new(basis, model, cfg) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, traj)),
    };
    if u0.basis_id() != basis.id() {
        return Err(fail(Error::BasisMismatch { left: basis.id(), right: u0.basis_id() }, traj));
    }
    if !u0.is_finite() {
        return Err(fail(Error::NonFinite { tau: 0.0 }, traj));
    }
    traj.push(basis, 0.0, u0.clone(), cfg.r_max);
    let mut u = u0.coeffs().to_vec();
    let mut ou = st.initial_ou(rng);
    let n_steps = cfg.n_steps();
    for n in 1..=n_steps {
        st.step(&mut u, ou.as_mut(), rng);
        let tau = n as f64 * cfg.dt;
        if let Err(e) = st.check_state(&u, tau) {
            if matches!(e, Error::GuardTripped { .. }) {
                let f = SpectralField::from_coeffs(basis, &u).expect("same length");
                traj.push(basis, tau, f, cfg.r_max);
            }
            return Err(fail(e, traj));
        }
        if n % cfg.record_every == 0 || n == n_steps {
            let f = SpectralField::from_coeffs(basis, &u).expect("same length");
            traj.push(basis, tau, f, cfg.r_max);
        }
    }
    Ok(traj)
}
