//! Weighted Hermite basis of L²(K), K(ξ) = exp(ξ²/4ν).
//!
//! With x = ξ/(2√ν) and φ_k the normalized Hermite functions, the modes are
//!
//!   e_k(ξ) = (4ν)^{-1/4} e^{-x²/2} (-1)^k φ_k(x).
//!
//! They are orthonormal in L²(K), diagonalize 𝓛 = ν∂² + ½ξ∂ + ½ with eigenvalue
//! -k/2, and obey the shift law ∂_ξ e_k = r_k e_{k+1}, r_k = √((k+1)/(2ν)).
//!
//! Node values are handled in a "weighted" form v_i = u(ξ_i)/s_i where s_i² is the
//! reciprocal of the K-absorbing quadrature weight. The weights themselves grow like
//! e^{x_i²} at the outer nodes and are never needed in the hot paths.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest supported mode count (keeps the parity scratch buffers on the stack).
pub const MAX_MODES: usize = 512;
const HALF_CAP: usize = MAX_MODES / 2;

/// Half-width of the L¹ grid in units of its spacing.
const L1_HALF_POINTS: usize = 2048;

/// Normalized Hermite functions φ_0..φ_{n-1} at `x`.
pub fn hermite_functions(x: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    out[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if n > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
}

/// Gauss-Hermite rule for the weight e^{-x²}: ascending nodes and the scaled
/// weights λ_i = W_i e^{x_i²}.
pub fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let jac = DMatrix::from_fn(m, m, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut x: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut phi = vec![0.0; m + 1];
    for xi in x.iter_mut() {
        for _ in 0..3 {
            hermite_functions(*xi, &mut phi);
            let d = (2.0 * m as f64).sqrt() * phi[m - 1] - *xi * phi[m];
            if d != 0.0 {
                *xi -= phi[m] / d;
            }
        }
    }
    for i in 0..m / 2 {
        let a = 0.5 * (x[m - 1 - i] - x[i]);
        x[i] = -a;
        x[m - 1 - i] = a;
    }
    if m % 2 == 1 {
        x[m / 2] = 0.0;
    }

    let mut lam = vec![0.0; m];
    let mut phi = vec![0.0; m];
    for i in (m / 2)..m {
        hermite_functions(x[i], &mut phi);
        lam[i] = 1.0 / phi.iter().map(|p| p * p).sum::<f64>();
        lam[m - 1 - i] = lam[i];
    }
    (x, lam)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[2]) + (acc[1] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline(always)]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

// out[l] += Σ_r w(r)·table[r·stride + l] for r < rows, summed over r in order for
// every l, so the result matches repeated axpy bit for bit. Blocks of 32 lanes stay
// in registers.
#[inline(always)]
fn accumulate(out: &mut [f64], rows: usize, w: impl Fn(usize) -> f64, table: &[f64], stride: usize) {
    const B: usize = 32;
    let n = out.len();
    let full = n - n % B;
    for start in (0..full).step_by(B) {
        let mut acc = [0.0f64; B];
        acc.copy_from_slice(&out[start..start + B]);
        for r in 0..rows {
            let a = w(r);
            let row: &[f64; B] = table[r * stride + start..r * stride + start + B].try_into().unwrap();
            for l in 0..B {
                acc[l] += a * row[l];
            }
        }
        out[start..start + B].copy_from_slice(&acc);
    }
    if full < n {
        for r in 0..rows {
            axpy(&mut out[full..], w(r), &table[r * stride + full..r * stride + n]);
        }
    }
}

fn fingerprint(nu: f64, n: usize, m: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for word in [nu.to_bits(), n as u64, m as u64] {
        for b in word.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// A function as N coefficients in {e_k}.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    coeffs: Vec<f64>,
    basis_id: u64,
    truncated: bool,
}

impl SpectralField {
    pub fn zeros(basis: &WeightedBasis) -> Self {
        Self { coeffs: vec![0.0; basis.n_modes], basis_id: basis.id, truncated: false }
    }

    /// Field with the given leading coefficients; missing modes are zero.
    pub fn from_coeffs(basis: &WeightedBasis, coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() > basis.n_modes {
            return Err(Error::InvalidParameter(format!(
                "{} coefficients for a {}-mode basis",
                coeffs.len(),
                basis.n_modes
            )));
        }
        let mut f = Self::zeros(basis);
        f.coeffs[..coeffs.len()].copy_from_slice(coeffs);
        Ok(f)
    }

    /// The basis function e_k.
    pub fn mode(basis: &WeightedBasis, k: usize) -> Self {
        let mut f = Self::zeros(basis);
        f.coeffs[k] = 1.0;
        f
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn basis_id(&self) -> u64 {
        self.basis_id
    }

    /// Set when an operation pushed content past the top retained mode.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.basis_id != other.basis_id || self.coeffs.len() != other.coeffs.len() {
            return Err(Error::BasisMismatch { left: self.basis_id, right: other.basis_id });
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut f = self.clone();
        f.coeffs.iter_mut().for_each(|c| *c *= a);
        f
    }

    /// self + a·other
    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut f = self.clone();
        axpy(&mut f.coeffs, a, &other.coeffs);
        f.truncated |= other.truncated;
        Ok(f)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    /// ‖u‖_{L²(K)} by Parseval.
    pub fn l2k_norm(&self) -> f64 {
        dot(&self.coeffs, &self.coeffs).sqrt()
    }

    /// û²_{N-1}/‖u‖², zero for the zero field.
    pub fn tail_energy(&self) -> f64 {
        let e = dot(&self.coeffs, &self.coeffs);
        if e == 0.0 {
            0.0
        } else {
            let top = self.coeffs[self.coeffs.len() - 1];
            top * top / e
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

struct L1Grid {
    step: f64,
    table: Vec<f64>,
}

/// Precomputed eigenbasis of 𝓛 with its quadrature rule. Immutable once built.
pub struct WeightedBasis {
    nu: f64,
    n_modes: usize,
    n_quad: usize,
    id: u64,
    nodes: Vec<f64>,
    scale: Vec<f64>,
    // M × N, row i holds e_k(ξ_i)/s_i
    table: Vec<f64>,
    shift: Vec<f64>,
    // parity-split copy of the table over the positive nodes; row j is node M-1-j
    half: usize,
    n_even: usize,
    n_odd: usize,
    even: Vec<f64>,
    odd: Vec<f64>,
    // mode-major copies; odd_t runs over nodes in reverse
    even_t: Vec<f64>,
    odd_t: Vec<f64>,
    center_even: Option<Vec<f64>>,
    mid_table: Vec<f64>,
    e0_integral: f64,
    l1: OnceLock<L1Grid>,
}

impl std::fmt::Debug for WeightedBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WeightedBasis")
            .field("nu", &self.nu)
            .field("n_modes", &self.n_modes)
            .field("n_quad", &self.n_quad)
            .field("id", &format_args!("{:#x}", self.id))
            .finish()
    }
}

impl WeightedBasis {
    /// Builds the basis and validates the derivative shift against quadrature.
    pub fn new(nu: f64, n_modes: usize, n_quad: usize) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
        }
        if n_modes == 0 || n_modes > MAX_MODES {
            return Err(Error::InvalidParameter(format!(
                "n_modes must be in 1..={MAX_MODES}, got {n_modes}"
            )));
        }
        if n_quad < 2 * n_modes {
            return Err(Error::InvalidParameter(format!(
                "n_quad = {n_quad} aliases; need at least 2*n_modes = {}",
                2 * n_modes
            )));
        }
        let (n, m) = (n_modes, n_quad);
        let (xs, lam) = gauss_hermite(m);
        let two_sqrt_nu = 2.0 * nu.sqrt();
        let c = (4.0 * nu).powf(-0.25);

        // weighted table with one extra column (e_N) for the top shift coefficient
        let w = n + 1;
        let mut full = vec![0.0; m * w];
        let mut dtab = vec![0.0; m * n];
        let mut phi = vec![0.0; n + 2];
        for i in 0..m {
            hermite_functions(xs[i], &mut phi);
            let sl = lam[i].sqrt();
            for k in 0..w {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                full[i * w + k] = sign * sl * phi[k];
            }
            for k in 0..n {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let kf = k as f64;
                let lower = if k > 0 { (kf / 2.0).sqrt() * phi[k - 1] } else { 0.0 };
                let dphi = lower - ((kf + 1.0) / 2.0).sqrt() * phi[k + 1];
                dtab[i * n + k] = sign * sl * (dphi - xs[i] * phi[k]) / two_sqrt_nu;
            }
        }
        let mut norms = vec![0.0; w];
        for i in 0..m {
            for k in 0..w {
                norms[k] += full[i * w + k] * full[i * w + k];
            }
        }
        for i in 0..m {
            for k in 0..w {
                full[i * w + k] /= norms[k].sqrt();
            }
            for k in 0..n {
                dtab[i * n + k] /= norms[k].sqrt();
            }
        }
        let mut shift = vec![0.0; n];
        for (k, r) in shift.iter_mut().enumerate() {
            let measured: f64 = (0..m).map(|i| dtab[i * n + k] * full[i * w + k + 1]).sum();
            let expected = ((k as f64 + 1.0) / (2.0 * nu)).sqrt();
            if (measured - expected).abs() > 1e-9 * expected.max(1.0) {
                return Err(Error::ShiftMismatch { k, measured, expected });
            }
            *r = measured;
        }

        let mut table = vec![0.0; m * n];
        for i in 0..m {
            table[i * n..(i + 1) * n].copy_from_slice(&full[i * w..i * w + n]);
        }
        let nodes: Vec<f64> = xs.iter().map(|x| x * two_sqrt_nu).collect();
        let scale: Vec<f64> =
            xs.iter().zip(&lam).map(|(x, l)| c * (-0.5 * x * x).exp() / l.sqrt()).collect();

        let half = m / 2;
        let n_even = n.div_ceil(2);
        let n_odd = n / 2;
        let mut even = vec![0.0; half * n_even];
        let mut odd = vec![0.0; half * n_odd];
        for j in 0..half {
            let row = &table[(m - 1 - j) * n..(m - j) * n];
            for q in 0..n_even {
                even[j * n_even + q] = row[2 * q];
            }
            for q in 0..n_odd {
                odd[j * n_odd + q] = row[2 * q + 1];
            }
        }
        let mut even_t = vec![0.0; half * n_even];
        let mut odd_t = vec![0.0; half * n_odd];
        for j in 0..half {
            for q in 0..n_even {
                even_t[q * half + j] = even[j * n_even + q];
            }
            for q in 0..n_odd {
                odd_t[q * half + half - 1 - j] = odd[j * n_odd + q];
            }
        }
        let center_even = (m % 2 == 1).then(|| {
            let row = &table[half * n..(half + 1) * n];
            (0..n_even).map(|q| row[2 * q]).collect()
        });

        let e0_integral: f64 = (0..m).map(|i| table[i * n] * lam[i].sqrt() * (-0.5 * xs[i] * xs[i]).exp() / c).sum();

        let mut basis = Self {
            nu,
            n_modes: n,
            n_quad: m,
            id: fingerprint(nu, n, m),
            nodes,
            scale,
            table,
            shift,
            half,
            n_even,
            n_odd,
            even,
            odd,
            even_t,
            odd_t,
            center_even,
            mid_table: Vec::new(),
            e0_integral,
            l1: OnceLock::new(),
        };
        let mids: Vec<f64> = basis.nodes.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        basis.mid_table = basis.physical_table(&mids);
        Ok(basis)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_quad(&self) -> usize {
        self.n_quad
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Quadrature abscissae ξ_i, ascending.
    pub fn quad_nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// K-absorbing quadrature weights. Outer weights overflow to +inf for large M;
    /// use the weighted node form when that matters.
    pub fn quad_weights(&self) -> Vec<f64> {
        self.scale.iter().map(|s| 1.0 / (s * s)).collect()
    }

    /// s_i, with u(ξ_i) = s_i·v_i for weighted node values v.
    pub fn node_scale(&self) -> &[f64] {
        &self.scale
    }

    /// e_k(ξ_i).
    pub fn basis_value(&self, i: usize, k: usize) -> f64 {
        self.scale[i] * self.table[i * self.n_modes + k]
    }

    /// Weighted table entry e_k(ξ_i)/s_i = √w_i·e_k(ξ_i).
    pub fn weighted_value(&self, i: usize, k: usize) -> f64 {
        self.table[i * self.n_modes + k]
    }

    /// Shift coefficients r_0..r_{N-1}; the last one maps e_{N-1} out of the span.
    pub fn deriv_shift(&self) -> &[f64] {
        &self.shift
    }

    /// Measured ∫ e_0 dξ, equal to (4πν)^{1/4}.
    pub fn e0_integral(&self) -> f64 {
        self.e0_integral
    }

    /// Field with unit mass and Gaussian shape (4πν)^{-1/2} exp(-ξ²/4ν).
    pub fn unit_mass_gaussian(&self) -> SpectralField {
        let mut g = SpectralField::zeros(self);
        g.coeffs[0] = 1.0 / self.e0_integral;
        g
    }

    fn check(&self, f: &SpectralField) -> Result<()> {
        if f.basis_id != self.id || f.coeffs.len() != self.n_modes {
            return Err(Error::BasisMismatch { left: self.id, right: f.basis_id });
        }
        Ok(())
    }

    /// Weighted node values v_i = u(ξ_i)/s_i from (possibly fewer than N) coefficients.
    pub fn synthesize(&self, coeffs: &[f64], out: &mut [f64]) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx512f") {
                // SAFETY: the CPU supports avx512f
                return unsafe { self.synthesize_avx512(coeffs, out) };
            }
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports avx2
                return unsafe { self.synthesize_avx2(coeffs, out) };
            }
        }
        self.synthesize_impl(coeffs, out)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn synthesize_avx512(&self, coeffs: &[f64], out: &mut [f64]) {
        self.synthesize_impl(coeffs, out)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn synthesize_avx2(&self, coeffs: &[f64], out: &mut [f64]) {
        self.synthesize_impl(coeffs, out)
    }

    #[inline(always)]
    fn synthesize_impl(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert!(coeffs.len() <= self.n_modes && out.len() == self.n_quad);
        let (m, h) = (self.n_quad, self.half);
        // even part into out[..h], odd part (reversed) into out[m - h..]
        out.fill(0.0);
        let (ne, no) = (coeffs.len().div_ceil(2), coeffs.len() / 2);
        accumulate(&mut out[..h], ne, |q| coeffs[2 * q], &self.even_t, h);
        accumulate(&mut out[m - h..], no, |q| coeffs[2 * q + 1], &self.odd_t, h);
        for j in 0..h {
            let (e, o) = (out[j], out[m - 1 - j]);
            out[m - 1 - j] = e + o;
            out[j] = e - o;
        }
        if let Some(ctr) = &self.center_even {
            let mut ce = [0.0f64; HALF_CAP];
            for (q, &c) in coeffs.iter().step_by(2).enumerate() {
                ce[q] = c;
            }
            out[h] = dot(&ctr[..ne], &ce[..ne]);
        }
    }

    /// Quadrature projection of weighted node values onto all N modes.
    pub fn project(&self, vals: &[f64], out: &mut [f64]) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx512f") {
                // SAFETY: the CPU supports avx512f
                return unsafe { self.project_avx512(vals, out) };
            }
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports avx2
                return unsafe { self.project_avx2(vals, out) };
            }
        }
        self.project_impl(vals, out)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn project_avx512(&self, vals: &[f64], out: &mut [f64]) {
        self.project_impl(vals, out)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn project_avx2(&self, vals: &[f64], out: &mut [f64]) {
        self.project_impl(vals, out)
    }

    #[inline(always)]
    fn project_impl(&self, vals: &[f64], out: &mut [f64]) {
        debug_assert!(vals.len() == self.n_quad && out.len() == self.n_modes);
        let mut ae = [0.0f64; HALF_CAP];
        let mut ao = [0.0f64; HALF_CAP];
        let (ne, no) = (self.n_even, self.n_odd);
        let (m, h) = (self.n_quad, self.half);
        accumulate(&mut ae[..ne], h, |j| vals[m - 1 - j] + vals[j], &self.even, ne);
        accumulate(&mut ao[..no], h, |j| vals[m - 1 - j] - vals[j], &self.odd, no);
        if let Some(ctr) = &self.center_even {
            axpy(&mut ae[..ne], vals[self.half], ctr);
        }
        for q in 0..ne {
            out[2 * q] = ae[q];
        }
        for q in 0..no {
            out[2 * q + 1] = ao[q];
        }
    }

    /// Physical values u(ξ_i) at the quadrature nodes.
    pub fn node_values(&self, u: &SpectralField) -> Vec<f64> {
        let mut v = vec![0.0; self.n_quad];
        self.synthesize(&u.coeffs, &mut v);
        v.iter_mut().zip(&self.scale).for_each(|(vi, s)| *vi *= s);
        v
    }

    /// Quadrature projection of a function given pointwise.
    pub fn project_fn(&self, f: impl Fn(f64) -> f64) -> SpectralField {
        let vals: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.scale)
            .map(|(&xi, &s)| if s > 0.0 { f(xi) / s } else { 0.0 })
            .collect();
        let mut out = SpectralField::zeros(self);
        self.project(&vals, &mut out.coeffs);
        out
    }

    /// Projection of node values given by index.
    pub fn project_fn_indexed(&self, f: impl Fn(usize) -> f64) -> SpectralField {
        let vals: Vec<f64> =
            self.scale.iter().enumerate().map(|(i, &s)| if s > 0.0 { f(i) / s } else { 0.0 }).collect();
        let mut out = SpectralField::zeros(self);
        self.project(&vals, &mut out.coeffs);
        out
    }

    /// Projection of ξ_i ↦ f(i, u(ξ_i)) evaluated on the quadrature nodes.
    pub fn map_nodes(&self, u: &SpectralField, f: impl Fn(usize, f64) -> f64) -> SpectralField {
        let mut v = vec![0.0; self.n_quad];
        self.synthesize(&u.coeffs, &mut v);
        for (i, vi) in v.iter_mut().enumerate() {
            let s = self.scale[i];
            *vi = if s > 0.0 { f(i, s * *vi) / s } else { 0.0 };
        }
        let mut out = SpectralField::zeros(self);
        self.project(&v, &mut out.coeffs);
        out
    }

    /// Σ f̂_k ĝ_k.
    pub fn inner_product(&self, f: &SpectralField, g: &SpectralField) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        Ok(dot(&f.coeffs, &g.coeffs))
    }

    /// (𝓛u)̂_k = -(k/2) û_k.
    pub fn apply_l(&self, u: &SpectralField) -> SpectralField {
        let mut out = u.clone();
        for (k, c) in out.coeffs.iter_mut().enumerate() {
            *c *= -(k as f64) / 2.0;
        }
        out
    }

    /// ∂_ξ u via the shift law; flags truncation if the top mode is occupied.
    pub fn derivative_xi(&self, u: &SpectralField) -> SpectralField {
        let n = self.n_modes;
        let mut out = SpectralField::zeros(self);
        for k in 0..n - 1 {
            out.coeffs[k + 1] = self.shift[k] * u.coeffs[k];
        }
        out.truncated = u.truncated || u.coeffs[n - 1] != 0.0;
        out
    }

    /// Adjoint of ∂_ξ in L²(K): (∂*v)_k = r_k v_{k+1}. As a differential operator
    /// this is -(∂_ξ + ξ/2ν).
    pub fn derivative_adjoint(&self, v: &SpectralField) -> SpectralField {
        let n = self.n_modes;
        let mut out = SpectralField::zeros(self);
        for k in 0..n - 1 {
            out.coeffs[k] = self.shift[k] * v.coeffs[k + 1];
        }
        out.truncated = v.truncated;
        out
    }

    /// Collocation product projected back onto the basis.
    pub fn pointwise_product(&self, f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
        self.check(f)?;
        self.check(g)?;
        let m = self.n_quad;
        let mut vf = vec![0.0; m];
        let mut vg = vec![0.0; m];
        self.synthesize(&f.coeffs, &mut vf);
        self.synthesize(&g.coeffs, &mut vg);
        for i in 0..m {
            vf[i] *= self.scale[i] * vg[i];
        }
        let mut out = SpectralField::zeros(self);
        self.project(&vf, &mut out.coeffs);
        out.truncated = f.truncated || g.truncated;
        Ok(out)
    }

    /// Physical values e_k(ξ) for each point, row-major points × N.
    fn physical_table(&self, xs: &[f64]) -> Vec<f64> {
        let n = self.n_modes;
        let c = (4.0 * self.nu).powf(-0.25);
        let inv = 1.0 / (2.0 * self.nu.sqrt());
        let mut out = vec![0.0; xs.len() * n];
        for (p, &xi) in xs.iter().enumerate() {
            let x = xi * inv;
            let row = &mut out[p * n..(p + 1) * n];
            hermite_functions(x, row);
            let g = c * (-0.5 * x * x).exp();
            for (k, v) in row.iter_mut().enumerate() {
                *v *= if k % 2 == 0 { g } else { -g };
            }
        }
        out
    }

    /// e_0(ξ)..e_{N-1}(ξ).
    pub fn basis_values(&self, xi: f64) -> Vec<f64> {
        self.physical_table(&[xi])
    }

    /// u(ξ) = Σ û_k e_k(ξ) by the Hermite recurrence.
    pub fn eval_field(&self, u: &SpectralField, xs: &[f64]) -> Vec<f64> {
        let n = self.n_modes;
        let t = self.physical_table(xs);
        (0..xs.len()).map(|p| dot(&t[p * n..(p + 1) * n], &u.coeffs)).collect()
    }

    /// ∫ u dξ; only mode 0 contributes.
    pub fn mass(&self, u: &SpectralField) -> f64 {
        u.coeffs[0] * self.e0_integral
    }

    /// max |u| over the quadrature nodes and their midpoints.
    pub fn sup_norm(&self, u: &SpectralField) -> f64 {
        let n = self.n_modes;
        let nodes = self.node_values(u).into_iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mids = self
            .mid_table
            .chunks_exact(n)
            .fold(0.0f64, |a, row| a.max(dot(row, &u.coeffs).abs()));
        nodes.max(mids)
    }

    /// ‖∂_ξ u‖_{L²(K)}, including the component of the top mode that leaves the span.
    pub fn h1k_norm(&self, u: &SpectralField) -> f64 {
        self.h1k_norm_coeffs(&u.coeffs)
    }

    pub(crate) fn h1k_norm_coeffs(&self, c: &[f64]) -> f64 {
        c.iter().zip(&self.shift).map(|(a, r)| a * a * r * r).sum::<f64>().sqrt()
    }

    pub fn l2k_norm(&self, u: &SpectralField) -> f64 {
        u.l2k_norm()
    }

    fn l1_grid(&self) -> &L1Grid {
        self.l1.get_or_init(|| {
            let l = self.nodes[self.n_quad - 1] + 4.0 * self.nu.sqrt();
            let step = l / L1_HALF_POINTS as f64;
            let xs: Vec<f64> =
                (0..=2 * L1_HALF_POINTS).map(|j| -l + j as f64 * step).collect();
            L1Grid { step, table: self.physical_table(&xs) }
        })
    }

    /// ∫ |u - v| dξ by the trapezoid rule on a uniform grid covering the nodes.
    pub fn l1_distance(&self, u: &SpectralField, v: &SpectralField) -> Result<f64> {
        let d = u.sub(v)?;
        self.check(&d)?;
        Ok(self.l1_norm_coeffs(&d.coeffs))
    }

    pub(crate) fn l1_norm_coeffs(&self, d: &[f64]) -> f64 {
        let grid = self.l1_grid();
        let n = self.n_modes;
        let rows = grid.table.len() / n;
        let mut s = 0.0;
        for (j, row) in grid.table.chunks_exact(n).enumerate() {
            let w = if j == 0 || j + 1 == rows { 0.5 } else { 1.0 };
            s += w * dot(row, d).abs();
        }
        s * grid.step
    }
}
