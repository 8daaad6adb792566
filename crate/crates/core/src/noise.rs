//! Q-Wiener noise diagonal in {e_k}, the fast OU driver η̄^ε, and the kernel forms
//! Σ(u) and A(u) that appear in the diffusion limit.
//!
//! Throughout, q(ξ,ζ) = Σ q_k e_k(ξ)e_k(ζ) and q'(ξ,ζ) = ∂_ξ∂_ζ q = Σ q_k r_k² e_{k+1}(ξ)e_{k+1}(ζ).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::{SpectralField, WeightedBasis};
use crate::error::{Error, Result};

/// Spectrum {q_k} of Q together with its diagonal kernels on the quadrature nodes.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    spectrum: Vec<f64>,
    basis_id: u64,
    nu: f64,
    trace_q: f64,
    trace_qp: f64,
    // physical q(ξ_i,ξ_i) and q'(ξ_i,ξ_i)
    q_diag: Vec<f64>,
    qp_diag: Vec<f64>,
    sup_q: f64,
    sup_qp: f64,
}

impl NoiseModel {
    /// Validates the spectrum and the smallness gate sup q, sup q' ≤ q_max.
    pub fn new(basis: &WeightedBasis, spectrum: Vec<f64>, q_max: f64) -> Result<Self> {
        let n = basis.n_modes();
        if spectrum.len() > n.saturating_sub(1) {
            return Err(Error::InvalidParameter(format!(
                "{} noise modes for a {}-mode basis; at most n_modes-1 allowed",
                spectrum.len(),
                n
            )));
        }
        if let Some(q) = spectrum.iter().find(|q| !(q.is_finite() && **q >= 0.0)) {
            return Err(Error::InvalidParameter(format!("noise variance {q} is not a finite non-negative number")));
        }
        let r = basis.deriv_shift();
        let trace_q = spectrum.iter().sum();
        let trace_qp = spectrum.iter().zip(r).map(|(q, r)| q * r * r).sum();

        let kn = spectrum.len();
        let mut q_diag = vec![0.0; basis.n_quad()];
        let mut qp_diag = vec![0.0; basis.n_quad()];
        for i in 0..basis.n_quad() {
            for k in 0..kn {
                let e = basis.basis_value(i, k);
                let e1 = basis.basis_value(i, k + 1);
                q_diag[i] += spectrum[k] * e * e;
                qp_diag[i] += spectrum[k] * r[k] * r[k] * e1 * e1;
            }
        }
        let mut model = Self {
            spectrum,
            basis_id: basis.id(),
            nu: basis.nu(),
            trace_q,
            trace_qp,
            q_diag,
            qp_diag,
            sup_q: 0.0,
            sup_qp: 0.0,
        };
        let (sq, sqp) = model.diag_sup(basis);
        model.sup_q = sq;
        model.sup_qp = sqp;
        if sq > q_max || sqp > q_max {
            return Err(Error::InvalidParameter(format!(
                "noise too strong: sup q = {sq:.4e}, sup q' = {sqp:.4e}, limit q_max = {q_max}"
            )));
        }
        Ok(model)
    }

    /// q_k = σ²ρ^k for k < k_noise.
    pub fn geometric(basis: &WeightedBasis, sigma: f64, rho: f64, k_noise: usize, q_max: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidParameter(format!("rho must lie in (0, 1), got {rho}")));
        }
        if !(sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be non-negative, got {sigma}")));
        }
        let spectrum = (0..k_noise).map(|k| sigma * sigma * rho.powi(k as i32)).collect();
        Self::new(basis, spectrum, q_max)
    }

    /// Noise switched off.
    pub fn zero(basis: &WeightedBasis) -> Self {
        Self::new(basis, Vec::new(), f64::INFINITY).expect("empty spectrum is always valid")
    }

    // sup over a dense grid (nodes and midpoints); off-diagonal values are bounded by
    // the diagonal through Cauchy-Schwarz.
    fn diag_sup(&self, basis: &WeightedBasis) -> (f64, f64) {
        let nodes = basis.quad_nodes();
        let mut xs: Vec<f64> = nodes.to_vec();
        xs.extend(nodes.windows(2).map(|p| 0.5 * (p[0] + p[1])));
        xs.iter().fold((0.0f64, 0.0f64), |(a, b), &x| {
            (a.max(self.kernel_q(basis, x, x)), b.max(self.kernel_qp(basis, x, x)))
        })
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Number K_n of driven modes.
    pub fn k_noise(&self) -> usize {
        self.spectrum.len()
    }

    pub fn basis_id(&self) -> u64 {
        self.basis_id
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn trace_q(&self) -> f64 {
        self.trace_q
    }

    pub fn trace_qp(&self) -> f64 {
        self.trace_qp
    }

    pub fn sup_q(&self) -> f64 {
        self.sup_q
    }

    pub fn sup_qp(&self) -> f64 {
        self.sup_qp
    }

    /// True when every q_k vanishes; steppers then never touch the RNG.
    pub fn is_zero(&self) -> bool {
        self.spectrum.iter().all(|&q| q == 0.0)
    }

    /// q(ξ_i, ξ_i) on the quadrature nodes.
    pub fn q_diag_nodes(&self) -> &[f64] {
        &self.q_diag
    }

    /// q'(ξ_i, ξ_i) on the quadrature nodes.
    pub fn qp_diag_nodes(&self) -> &[f64] {
        &self.qp_diag
    }

    fn mode_values(&self, basis: &WeightedBasis, x: f64) -> Vec<f64> {
        basis.basis_values(x)
    }

    pub fn kernel_q(&self, basis: &WeightedBasis, xi: f64, zeta: f64) -> f64 {
        let a = self.mode_values(basis, xi);
        let b = self.mode_values(basis, zeta);
        self.spectrum.iter().enumerate().map(|(k, q)| q * (a[k] * b[k])).sum()
    }

    pub fn kernel_qp(&self, basis: &WeightedBasis, xi: f64, zeta: f64) -> f64 {
        let a = self.mode_values(basis, xi);
        let b = self.mode_values(basis, zeta);
        let r = basis.deriv_shift();
        self.spectrum.iter().enumerate().map(|(k, q)| q * r[k] * r[k] * (a[k + 1] * b[k + 1])).sum()
    }

    /// Writes √(q_k·dt)·g_k into `out[..K_n]`.
    pub fn fill_wiener<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R, out: &mut [f64]) {
        for (o, q) in out.iter_mut().zip(&self.spectrum) {
            let g: f64 = rng.sample(StandardNormal);
            *o = (q * dt).sqrt() * g;
        }
    }

    fn check(&self, basis: &WeightedBasis) -> Result<()> {
        if self.basis_id != basis.id() {
            return Err(Error::BasisMismatch { left: self.basis_id, right: basis.id() });
        }
        Ok(())
    }
}

/// Wiener increment ΔW over `dt`, zero beyond K_n.
pub fn sample_wiener_increment<R: Rng + ?Sized>(
    basis: &WeightedBasis,
    model: &NoiseModel,
    dt: f64,
    rng: &mut R,
) -> SpectralField {
    let mut w = SpectralField::zeros(basis);
    model.fill_wiener(dt, rng, &mut w.coeffs_mut()[..model.k_noise()]);
    w
}

/// Fast OU process dη_k = -η_k/ε dτ + √(q_k/ε) dβ_k, stationary variance q_k/2.
#[derive(Debug, Clone, PartialEq)]
pub struct OUState {
    pub coeffs: Vec<f64>,
    pub epsilon: f64,
    pub tau: f64,
}

impl OUState {
    /// Draw from the stationary law.
    pub fn stationary<R: Rng + ?Sized>(model: &NoiseModel, epsilon: f64, rng: &mut R) -> Self {
        let coeffs = model
            .spectrum
            .iter()
            .map(|q| {
                let g: f64 = rng.sample(StandardNormal);
                (0.5 * q).sqrt() * g
            })
            .collect();
        Self { coeffs, epsilon, tau: 0.0 }
    }

    /// Exact transition over `dt`.
    pub fn step<R: Rng + ?Sized>(&mut self, model: &NoiseModel, dt: f64, rng: &mut R) {
        let a = (-dt / self.epsilon).exp();
        let v = -(-2.0 * dt / self.epsilon).exp_m1();
        for (eta, q) in self.coeffs.iter_mut().zip(&model.spectrum) {
            let g: f64 = rng.sample(StandardNormal);
            *eta = a * *eta + (0.5 * q * v).sqrt() * g;
        }
        self.tau += dt;
    }

    /// η̄^ε(τ, ·) as a field.
    pub fn field(&self, basis: &WeightedBasis) -> SpectralField {
        SpectralField::from_coeffs(basis, &self.coeffs).expect("K_n < n_modes")
    }
}

pub fn ou_init<R: Rng + ?Sized>(model: &NoiseModel, epsilon: f64, rng: &mut R) -> OUState {
    OUState::stationary(model, epsilon, rng)
}

pub fn ou_step<R: Rng + ?Sized>(state: &OUState, model: &NoiseModel, dt: f64, rng: &mut R) -> OUState {
    let mut s = state.clone();
    s.step(model, dt, rng);
    s
}

pub fn ou_field(state: &OUState, basis: &WeightedBasis) -> SpectralField {
    state.field(basis)
}

/// ψ = φ_ξ + ξφ/(2ν) = K^{-1}(φK)_ξ, which stays in the span.
pub fn k_derivative(basis: &WeightedBasis, phi: &SpectralField) -> SpectralField {
    basis.derivative_adjoint(phi).scaled(-1.0)
}

/// ⟨Σ(u)φ, φ⟩ = Σ_k q_k ⟨u e_k, ψ⟩².
pub fn sigma_form(basis: &WeightedBasis, model: &NoiseModel, u: &SpectralField, phi: &SpectralField) -> Result<f64> {
    model.check(basis)?;
    let psi = k_derivative(basis, phi);
    let p = basis.pointwise_product(u, &psi)?;
    Ok(model.spectrum.iter().zip(p.coeffs()).map(|(q, c)| q * c * c).sum())
}

/// ⟨A(u), φ⟩ = ½∫u q(ξ,ξ)(φK)'' dξ + ½∫u q'(ξ,ξ)(φK)' dξ.
pub fn a_form(basis: &WeightedBasis, model: &NoiseModel, u: &SpectralField, phi: &SpectralField) -> Result<f64> {
    model.check(basis)?;
    let psi = k_derivative(basis, phi);
    // (φK)'' = K·ψ2 with ψ2 = ∂*∂*φ
    let psi2 = basis.derivative_adjoint(&basis.derivative_adjoint(phi));
    let m = basis.n_quad();
    let (mut vu, mut v1, mut v2) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    basis.synthesize(u.coeffs(), &mut vu);
    basis.synthesize(psi.coeffs(), &mut v1);
    basis.synthesize(psi2.coeffs(), &mut v2);
    let s: f64 = (0..m).map(|i| vu[i] * (model.q_diag[i] * v2[i] + model.qp_diag[i] * v1[i])).sum();
    Ok(0.5 * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::path_rng;
    use approx::assert_abs_diff_eq;

    fn setup() -> (WeightedBasis, NoiseModel) {
        let b = WeightedBasis::new(1.0, 16, 32).unwrap();
        let m = NoiseModel::geometric(&b, 0.05, 0.6, 8, 0.05).unwrap();
        (b, m)
    }

    #[test]
    fn spectrum_validation() {
        let b = WeightedBasis::new(1.0, 8, 16).unwrap();
        assert!(NoiseModel::new(&b, vec![0.1; 8], 1.0).is_err());
        assert!(NoiseModel::new(&b, vec![-0.1], 1.0).is_err());
        assert!(NoiseModel::geometric(&b, 0.05, 1.5, 4, 1.0).is_err());
        assert!(NoiseModel::geometric(&b, 3.0, 0.6, 4, 0.05).is_err());
    }

    #[test]
    fn traces_are_modal_sums() {
        let (b, m) = setup();
        let tq: f64 = (0..8).map(|k| 0.0025 * 0.6f64.powi(k)).sum();
        assert_abs_diff_eq!(m.trace_q(), tq, epsilon = 1e-15);
        let tqp: f64 = (0..8).map(|k| 0.0025 * 0.6f64.powi(k) * (k as f64 + 1.0) / 2.0).sum();
        assert_abs_diff_eq!(m.trace_qp(), tqp, epsilon = 1e-12);
        let _ = b;
    }

    #[test]
    fn single_mode_kernel() {
        let b = WeightedBasis::new(0.7, 8, 16).unwrap();
        let m = NoiseModel::new(&b, vec![1.0], f64::INFINITY).unwrap();
        let e0 = SpectralField::mode(&b, 0);
        let v = b.eval_field(&e0, &[0.3, -1.1]);
        assert_abs_diff_eq!(m.kernel_q(&b, 0.3, -1.1), v[0] * v[1], epsilon = 1e-15);
    }

    #[test]
    fn zero_increment_for_zero_dt() {
        let (b, m) = setup();
        let w = sample_wiener_increment(&b, &m, 0.0, &mut path_rng(1, 0));
        assert_eq!(w.l2k_norm(), 0.0);
    }

    #[test]
    fn zero_spectrum_gives_zero_ou() {
        let b = WeightedBasis::new(1.0, 8, 16).unwrap();
        let m = NoiseModel::new(&b, vec![0.0; 4], 1.0).unwrap();
        let s = ou_init(&m, 0.1, &mut path_rng(3, 0));
        assert!(s.coeffs.iter().all(|&c| c == 0.0));
        assert!(m.is_zero());
    }

    #[test]
    fn ou_field_assembly() {
        let (b, m) = setup();
        let s = ou_init(&m, 0.1, &mut path_rng(3, 0));
        let f = ou_field(&s, &b);
        let e: f64 = s.coeffs.iter().map(|c| c * c).sum();
        assert_abs_diff_eq!(f.l2k_norm().powi(2), e, epsilon = 1e-18);
        let single = OUState { coeffs: vec![0.0, 2.0], epsilon: 0.1, tau: 0.0 };
        assert_eq!(single.field(&b), SpectralField::mode(&b, 1).scaled(2.0));
    }

    #[test]
    fn ou_large_step_forgets() {
        let (_, m) = setup();
        let mut rng = path_rng(5, 0);
        let s = OUState { coeffs: vec![10.0; 8], epsilon: 0.01, tau: 0.0 };
        let t = ou_step(&s, &m, 1e3, &mut rng);
        assert!(t.coeffs.iter().all(|c| c.abs() < 1.0));
    }

    #[test]
    fn sigma_form_basics() {
        let (b, m) = setup();
        let phi = SpectralField::mode(&b, 1);
        assert_eq!(sigma_form(&b, &m, &SpectralField::zeros(&b), &phi).unwrap(), 0.0);
        let u = SpectralField::from_coeffs(&b, &[0.7, -0.3, 0.2]).unwrap();
        assert!(sigma_form(&b, &m, &u, &phi).unwrap() > 0.0);
    }

    #[test]
    fn a_form_is_linear() {
        let (b, m) = setup();
        let phi = SpectralField::from_coeffs(&b, &[0.0, 1.0, 0.5]).unwrap();
        let u = SpectralField::from_coeffs(&b, &[0.7, -0.3, 0.2]).unwrap();
        let v = SpectralField::from_coeffs(&b, &[0.1, 0.4, 0.0, 0.3]).unwrap();
        let lhs = a_form(&b, &m, &u.axpy(2.0, &v).unwrap(), &phi).unwrap();
        let rhs = a_form(&b, &m, &u, &phi).unwrap() + 2.0 * a_form(&b, &m, &v, &phi).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-15);
        assert_eq!(a_form(&b, &m, &SpectralField::zeros(&b), &phi).unwrap(), 0.0);
    }
}
