mod common;

use approx::assert_abs_diff_eq;
use common::{d1, d2, grid, oracle_modes, weight_k};
use proptest::prelude::*;
use std::sync::LazyLock;
use stochburgers::{SpectralField, WeightedBasis};

static REFERENCE: LazyLock<WeightedBasis> = LazyLock::new(|| WeightedBasis::new(1.0, 64, 128).unwrap());

fn reference() -> &'static WeightedBasis {
    &REFERENCE
}

#[test]
fn modes_match_independent_hermite_construction() {
    for nu in [0.3, 1.0, 2.5] {
        let b = WeightedBasis::new(nu, 40, 80).unwrap();
        for xi in [-7.3, -1.0, 0.0, 0.4, 2.2, 9.9] {
            let got = b.basis_values(xi);
            let want = oracle_modes(nu, 40, xi);
            for k in 0..40 {
                assert_abs_diff_eq!(got[k], want[k], epsilon = 1e-12 * (1.0 + want[k].abs()));
            }
        }
    }
}

#[test]
fn gram_matrix_on_quadrature() {
    let b = reference();
    let (m, n) = (b.n_quad(), b.n_modes());
    let mut worst = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            let g: f64 = (0..m).map(|i| b.weighted_value(i, j) * b.weighted_value(i, k)).sum();
            let target = if j == k { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    assert!(worst <= 1e-10, "gram defect {worst:e}");
}

#[test]
fn gram_matrix_on_refined_grid() {
    // independent of the quadrature rule: trapezoid on a fine uniform grid
    let nu = 1.0;
    let n = 64;
    let (xs, ws) = grid(44.0, 0.01);
    let mut gram = vec![0.0; n * n];
    for (&xi, &w) in xs.iter().zip(&ws) {
        let e = oracle_modes(nu, n, xi);
        let wk = w * weight_k(nu, xi);
        for j in 0..n {
            for k in j..n {
                gram[j * n + k] += wk * e[j] * e[k];
            }
        }
    }
    for j in 0..n {
        for k in j..n {
            let target = if j == k { 1.0 } else { 0.0 };
            assert!((gram[j * n + k] - target).abs() <= 1e-10, "({j},{k}): {}", gram[j * n + k]);
        }
    }
}

#[test]
fn operator_is_diagonal() {
    // ⟨𝓛e_k, e_j⟩ with 𝓛 = ν∂² + ½ξ∂ + ½ applied by finite differences
    let b = reference();
    let (nu, n) = (b.nu(), b.n_modes());
    let h = 1e-3;
    let (xs, ws) = grid(40.0, h);
    let table: Vec<Vec<f64>> = xs.iter().map(|&x| b.basis_values(x)).collect();
    let mut worst = 0.0f64;
    for k in 0..=n - 4 {
        let col: Vec<f64> = table.iter().map(|r| r[k]).collect();
        let mut row = vec![0.0; n];
        for j in 2..xs.len() - 2 {
            let l = nu * d2(&col, j, h) + 0.5 * xs[j] * d1(&col, j, h) + 0.5 * col[j];
            let wk = ws[j] * weight_k(nu, xs[j]) * l;
            for (r, e) in row.iter_mut().zip(&table[j]) {
                *r += wk * e;
            }
        }
        let lk = b.apply_l(&SpectralField::mode(b, k));
        for j in 0..n {
            worst = worst.max((row[j] - lk.coeffs()[j]).abs());
        }
    }
    assert!(worst <= 1e-6, "diagonality defect {worst:e}");
}

#[test]
fn shift_law_by_finite_differences() {
    let b = WeightedBasis::new(0.5, 16, 32).unwrap();
    let (nu, n) = (b.nu(), b.n_modes());
    let h = 1e-3;
    let (xs, ws) = grid(20.0, h);
    let table: Vec<Vec<f64>> = xs.iter().map(|&x| oracle_modes(nu, n, x)).collect();
    for k in 0..n - 1 {
        let col: Vec<f64> = table.iter().map(|r| r[k]).collect();
        let mut proj = vec![0.0; n];
        for j in 2..xs.len() - 2 {
            let wd = ws[j] * weight_k(nu, xs[j]) * d1(&col, j, h);
            for (p, e) in proj.iter_mut().zip(&table[j]) {
                *p += wd * e;
            }
        }
        let r = ((k as f64 + 1.0) / (2.0 * nu)).sqrt();
        for (m, &p) in proj.iter().enumerate() {
            let target = if m == k + 1 { r } else { 0.0 };
            assert!((p - target).abs() <= 1e-9, "k={k} m={m}: {p} vs {target}");
        }
        assert!((b.deriv_shift()[k] - r).abs() <= 1e-9);
    }
}

#[test]
fn product_matches_refined_quadrature() {
    let b = WeightedBasis::new(0.8, 32, 64).unwrap();
    let (nu, n) = (b.nu(), b.n_modes());
    let u = SpectralField::from_coeffs(&b, &[0.7, -0.3, 0.2, 0.05]).unwrap();
    let v = SpectralField::from_coeffs(&b, &[0.1, 0.4, 0.0, -0.2, 0.1]).unwrap();
    let p = b.pointwise_product(&u, &v).unwrap();
    let (xs, ws) = grid(30.0, 0.005);
    let mut want = vec![0.0; n];
    for (&xi, &w) in xs.iter().zip(&ws) {
        let e = oracle_modes(nu, n, xi);
        let uv = e.iter().zip(u.coeffs()).map(|(a, c)| a * c).sum::<f64>()
            * e.iter().zip(v.coeffs()).map(|(a, c)| a * c).sum::<f64>();
        let f = w * weight_k(nu, xi) * uv;
        for (o, ek) in want.iter_mut().zip(&e) {
            *o += f * ek;
        }
    }
    for k in 0..n {
        assert_abs_diff_eq!(p.coeffs()[k], want[k], epsilon = 1e-10);
    }
}

#[test]
fn mass_constant_matches_direct_integral() {
    for nu in [0.5, 1.0, 3.0] {
        let b = WeightedBasis::new(nu, 16, 32).unwrap();
        let (xs, ws) = grid(20.0 * nu.sqrt() * 2.0, 0.002);
        let direct: f64 = xs.iter().zip(&ws).map(|(&x, &w)| w * oracle_modes(nu, 1, x)[0]).sum();
        assert_abs_diff_eq!(b.e0_integral(), direct, epsilon = 1e-12);
        assert_abs_diff_eq!(b.mass(&SpectralField::mode(&b, 0)), direct, epsilon = 1e-12);
        assert_eq!(b.mass(&SpectralField::mode(&b, 3)), 0.0);
        assert_abs_diff_eq!(b.mass(&b.unit_mass_gaussian()), 1.0, epsilon = 1e-14);
    }
}

#[test]
fn sup_norm_and_l1_of_gaussian() {
    let b = reference();
    let e0 = SpectralField::mode(b, 0);
    // e_0(0) = (4ν)^{-1/4} π^{-1/4}
    assert_abs_diff_eq!(b.sup_norm(&e0), (4.0 * std::f64::consts::PI).powf(-0.25), epsilon = 1e-14);
    let g = b.unit_mass_gaussian();
    assert_abs_diff_eq!(b.sup_norm(&g), (4.0 * std::f64::consts::PI).powf(-0.5), epsilon = 1e-14);
    let zero = SpectralField::zeros(b);
    assert_abs_diff_eq!(b.l1_distance(&g, &zero).unwrap(), 1.0, epsilon = 1e-10);
    assert_eq!(b.l1_distance(&g, &g).unwrap(), 0.0);
    assert_abs_diff_eq!(b.sup_norm(&g.scaled(2.0)), 2.0 * b.sup_norm(&g), epsilon = 1e-15);
}

#[test]
fn h1k_norm_of_ground_mode() {
    let b = reference();
    let e0 = SpectralField::mode(b, 0);
    assert_abs_diff_eq!(b.h1k_norm(&e0), (1.0f64 / 2.0).sqrt(), epsilon = 1e-12);
    assert_eq!(b.h1k_norm(&SpectralField::zeros(b)), 0.0);
    // equality case of the Poincaré inequality at ν = 1
    assert!(0.5 * e0.l2k_norm().powi(2) <= b.h1k_norm(&e0).powi(2) * (1.0 + 1e-12));
}

fn field_strategy() -> impl Strategy<Value = Vec<f64>> {
    // truncation-safe: the top mode is left empty
    (1usize..63, prop::collection::vec(-1.0f64..1.0, 63)).prop_map(|(kmax, mut c)| {
        for (k, v) in c.iter_mut().enumerate() {
            if k > kmax {
                *v = 0.0;
            } else {
                *v /= 1.0 + k as f64;
            }
        }
        c.push(0.0);
        c
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn poincare_inequality(c in field_strategy()) {
        let b = reference();
        let u = SpectralField::from_coeffs(b, &c).unwrap();
        let lhs = 0.5 * u.l2k_norm().powi(2);
        let rhs = b.h1k_norm(&u).powi(2);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    }

    #[test]
    fn derivative_has_no_mass(c in field_strategy()) {
        let b = reference();
        let u = SpectralField::from_coeffs(b, &c).unwrap();
        prop_assert_eq!(b.mass(&b.derivative_xi(&u)), 0.0);
    }

    #[test]
    fn mass_is_linear(a in field_strategy(), c in field_strategy()) {
        let b = reference();
        let u = SpectralField::from_coeffs(b, &a).unwrap();
        let v = SpectralField::from_coeffs(b, &c).unwrap();
        let lhs = b.mass(&u.add(&v).unwrap());
        prop_assert!((lhs - b.mass(&u) - b.mass(&v)).abs() <= 1e-14);
    }
}
