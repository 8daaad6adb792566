//! Physical variables (t, x, w) versus self-similar ones (τ, ξ, u):
//! τ = log t, ξ = x/√t, u = √t·w. Also the Cole-Hopf source profile, the stationary
//! state of the noise-free equation.

use crate::basis::{SpectralField, WeightedBasis};
use crate::error::{Error, Result};

/// Relative L² residual above which a projection is rejected.
pub const PROJECTION_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalSnapshot {
    pub t: f64,
    pub xs: Vec<f64>,
    pub ws: Vec<f64>,
}

impl PhysicalSnapshot {
    /// Samples `w` at `xs`.
    pub fn from_fn(t: f64, xs: Vec<f64>, w: impl Fn(f64) -> f64) -> Self {
        let ws = xs.iter().map(|&x| w(x)).collect();
        Self { t, xs, ws }
    }
}

/// Physical abscissae x_i = √t·ξ_i that map onto the quadrature nodes at time t.
pub fn physical_nodes(basis: &WeightedBasis, t: f64) -> Vec<f64> {
    let st = t.sqrt();
    basis.quad_nodes().iter().map(|xi| xi * st).collect()
}

// natural cubic spline through (xs, ys), xs strictly increasing
struct Spline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>,
}

impl Spline {
    fn new(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the second derivatives
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let rhs = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
                let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
                c[i] = h1 / diag;
                d[i] = (rhs - h0 * d[i - 1]) / diag;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - c[i] * m[i + 1];
            }
        }
        Self { xs: xs.to_vec(), ys: ys.to_vec(), m }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 0 || x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        if n == 1 {
            return self.ys[0];
        }
        let j = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.xs[j + 1] - self.xs[j];
        let a = (self.xs[j + 1] - x) / h;
        let b = (x - self.xs[j]) / h;
        a * self.ys[j]
            + b * self.ys[j + 1]
            + ((a * a * a - a) * self.m[j] + (b * b * b - b) * self.m[j + 1]) * h * h / 6.0
    }
}

/// τ = log t and u(ξ) = √t·w(t, ξ√t) projected onto the basis.
///
/// Samples that land exactly on the scaled quadrature nodes are used as is; otherwise
/// the samples are interpolated by a natural cubic spline (zero outside their range).
pub fn to_selfsimilar(snap: &PhysicalSnapshot, basis: &WeightedBasis) -> Result<(f64, SpectralField)> {
    let t = snap.t;
    if !(t >= 1.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("transform needs t >= 1, got {t}")));
    }
    if snap.xs.len() != snap.ws.len() || snap.xs.is_empty() {
        return Err(Error::InvalidParameter("snapshot needs matching, non-empty xs and ws".into()));
    }
    if snap.xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("snapshot abscissae must be strictly increasing".into()));
    }
    let st = t.sqrt();
    let targets = physical_nodes(basis, t);
    let exact = snap.xs.len() == targets.len()
        && snap.xs.iter().zip(&targets).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0));
    let u = if exact {
        let ws = snap.ws.clone();
        basis.project_fn_indexed(|i| st * ws[i])
    } else {
        let spline = Spline::new(&snap.xs, &snap.ws);
        basis.project_fn(|xi| st * spline.eval(xi * st))
    };

    // residual of the projection, measured on the samples themselves
    let xis: Vec<f64> = snap.xs.iter().map(|x| x / st).collect();
    let back = basis.eval_field(&u, &xis);
    let (mut num, mut den) = (0.0, 0.0);
    for (b, w) in back.iter().zip(&snap.ws) {
        let target = st * w;
        num += (b - target) * (b - target);
        den += target * target;
    }
    let residual = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    if residual > PROJECTION_TOLERANCE {
        return Err(Error::ProjectionLoss { residual });
    }
    Ok((t.ln(), u))
}

/// t = e^τ and w(t, x) = e^{-τ/2}·u(x·e^{-τ/2}) sampled at `xs`.
pub fn from_selfsimilar(basis: &WeightedBasis, tau: f64, u: &SpectralField, xs: &[f64]) -> PhysicalSnapshot {
    let damp = (-0.5 * tau).exp();
    let xis: Vec<f64> = xs.iter().map(|x| x * damp).collect();
    let ws = basis.eval_field(u, &xis).into_iter().map(|v| v * damp).collect();
    PhysicalSnapshot { t: tau.exp(), xs: xs.to_vec(), ws }
}

/// Mass-M source solution of ν u'' + ½ξu' + ½u - u u' = 0:
///
///   u = -2ν ∂_ξ log θ,  θ(ξ) = e^{-M/2ν} + β·½erfc(ξ/(2√ν)),  β = 1 - e^{-M/2ν}.
pub fn colehopf_profile(mass: f64, nu: f64, xs: &[f64]) -> Vec<f64> {
    assert!(nu > 0.0, "nu must be positive");
    let a = mass / (2.0 * nu);
    let beta = -(-a).exp_m1();
    let rest = (-a).exp();
    let norm = (4.0 * std::f64::consts::PI * nu).sqrt();
    xs.iter()
        .map(|&xi| {
            let g = (-xi * xi / (4.0 * nu)).exp() / norm;
            let theta = rest + beta * 0.5 * libm::erfc(xi / (2.0 * nu.sqrt()));
            2.0 * nu * beta * g / theta
        })
        .collect()
}

/// The Cole-Hopf profile projected onto `basis`.
pub fn colehopf_field(basis: &WeightedBasis, mass: f64) -> SpectralField {
    let nu = basis.nu();
    basis.project_fn(|xi| colehopf_profile(mass, nu, &[xi])[0])
}

/// Self-check of the profile: max |ν u'' + ½ξu' + ½u − uu'| on |ξ| ≤ 8√ν by
/// fourth-order differences, and |∫u − M| by the trapezoid rule on |ξ| ≤ 40√ν.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileCheck {
    pub residual: f64,
    pub mass_error: f64,
}

pub fn validate_colehopf(mass: f64, nu: f64) -> ProfileCheck {
    let h = 1e-3;
    let half = 8.0 * nu.sqrt();
    let n = (half / h).ceil() as usize + 2;
    let xs: Vec<f64> = (0..=2 * n).map(|j| (j as f64 - n as f64) * h).collect();
    let u = colehopf_profile(mass, nu, &xs);
    let mut residual = 0.0f64;
    for j in 2..xs.len() - 2 {
        if xs[j].abs() > half {
            continue;
        }
        let u1 = (u[j - 2] - 8.0 * u[j - 1] + 8.0 * u[j + 1] - u[j + 2]) / (12.0 * h);
        let u2 = (-u[j - 2] + 16.0 * u[j - 1] - 30.0 * u[j] + 16.0 * u[j + 1] - u[j + 2]) / (12.0 * h * h);
        residual = residual.max((nu * u2 + 0.5 * xs[j] * u1 + 0.5 * u[j] - u[j] * u1).abs());
    }
    let wide = (40.0 * nu.sqrt() / h).ceil() as usize;
    let xw: Vec<f64> = (0..=2 * wide).map(|j| (j as f64 - wide as f64) * h).collect();
    let uw = colehopf_profile(mass, nu, &xw);
    let total: f64 = uw.iter().sum::<f64>() - 0.5 * (uw[0] + uw[uw.len() - 1]);
    ProfileCheck { residual, mass_error: (total * h - mass).abs() }
}
