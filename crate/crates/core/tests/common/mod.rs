//! Independent reference implementations for the oracle tests.
#![allow(dead_code)]

/// e_k(ξ), k < n, from physicists' Hermite polynomials with explicit normalization
/// (4ν)^{-1/4} (-1)^k H_k(x) e^{-x²} / √(2^k k! √π), x = ξ/(2√ν).
pub fn oracle_modes(nu: f64, n: usize, xi: f64) -> Vec<f64> {
    let x = xi / (2.0 * nu.sqrt());
    let mut h = vec![0.0; n.max(2)];
    h[0] = 1.0;
    h[1] = 2.0 * x;
    for k in 1..n.saturating_sub(1) {
        h[k + 1] = 2.0 * x * h[k] - 2.0 * k as f64 * h[k - 1];
    }
    let pre = (4.0 * nu).powf(-0.25) * (-x * x).exp();
    let mut log_norm = 0.25 * std::f64::consts::PI.ln();
    (0..n)
        .map(|k| {
            if k > 0 {
                log_norm += 0.5 * (2.0 * k as f64).ln();
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * pre * h[k] * (-log_norm).exp()
        })
        .collect()
}

/// Uniform grid on [-l, l] with spacing h, and trapezoid weights.
pub fn grid(l: f64, h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = (2.0 * l / h).round() as usize;
    let xs: Vec<f64> = (0..=n).map(|j| -l + j as f64 * h).collect();
    let ws: Vec<f64> = (0..=n).map(|j| if j == 0 || j == n { 0.5 * h } else { h }).collect();
    (xs, ws)
}

pub fn weight_k(nu: f64, xi: f64) -> f64 {
    (xi * xi / (4.0 * nu)).exp()
}

/// Fourth-order central first and second differences of samples on a uniform grid,
/// valid for 2 ≤ j < len - 2.
pub fn d1(f: &[f64], j: usize, h: f64) -> f64 {
    (f[j - 2] - 8.0 * f[j - 1] + 8.0 * f[j + 1] - f[j + 2]) / (12.0 * h)
}

pub fn d2(f: &[f64], j: usize, h: f64) -> f64 {
    (-f[j - 2] + 16.0 * f[j - 1] - 30.0 * f[j] + 16.0 * f[j + 1] - f[j + 2]) / (12.0 * h * h)
}

/// RK4 for the first integral ν u' = ½u² - ½ξu from ξ = 0 with u(0) = u0, on
/// ξ_j = j·h for j in 0..=steps (and the mirrored negative side).
pub fn rk4_profile(nu: f64, u0: f64, h: f64, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let f = |xi: f64, u: f64| (0.5 * u * u - 0.5 * xi * u) / nu;
    let run = |h: f64| {
        let mut out = vec![u0];
        let (mut xi, mut u) = (0.0, u0);
        for _ in 0..steps {
            let k1 = f(xi, u);
            let k2 = f(xi + 0.5 * h, u + 0.5 * h * k1);
            let k3 = f(xi + 0.5 * h, u + 0.5 * h * k2);
            let k4 = f(xi + h, u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            xi += h;
            out.push(u);
        }
        out
    };
    (run(h), run(-h))
}
