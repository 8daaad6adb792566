mod common;

use approx::assert_abs_diff_eq;
use common::{d1, d2, grid, rk4_profile};
use rand::Rng;
use stochburgers::dynamics::{
    advective_conservative, advective_leibniz, integrate, InitialCondition, Scheme, Stepper, StepperConfig,
};
use stochburgers::noise::NoiseModel;
use stochburgers::rng::path_rng;
use stochburgers::selfsim::{colehopf_field, colehopf_profile};
use stochburgers::{SpectralField, WeightedBasis};

#[test]
fn colehopf_profile_solves_first_integral() {
    for (mass, nu) in [(1.0, 1.0), (3.0, 0.5), (0.2, 2.0)] {
        let h = 1e-3;
        let steps = (8.0 * f64::sqrt(nu) / h).round() as usize;
        let u0 = colehopf_profile(mass, nu, &[0.0])[0];
        let (pos, neg) = rk4_profile(nu, u0, h, steps);
        let xs: Vec<f64> = (0..=steps).map(|j| j as f64 * h).collect();
        let xn: Vec<f64> = xs.iter().map(|x| -x).collect();
        for (p, want) in colehopf_profile(mass, nu, &xs).iter().zip(&pos) {
            assert_abs_diff_eq!(p, want, epsilon = 1e-10);
        }
        for (p, want) in colehopf_profile(mass, nu, &xn).iter().zip(&neg) {
            assert_abs_diff_eq!(p, want, epsilon = 1e-10);
        }
    }
}

#[test]
fn colehopf_profile_residual_and_mass() {
    for (mass, nu) in [(1.0, 1.0), (3.0, 0.5), (0.2, 2.0)] {
        let h = 1e-3;
        let half = 8.0 * f64::sqrt(nu);
        let (xs, _) = grid(half + 3.0 * h, h);
        let u = colehopf_profile(mass, nu, &xs);
        let mut worst = 0.0f64;
        for j in 2..xs.len() - 2 {
            if xs[j].abs() > half {
                continue;
            }
            let (u1, u2) = (d1(&u, j, h), d2(&u, j, h));
            let r = nu * u2 + 0.5 * xs[j] * u1 + 0.5 * u[j] - u[j] * u1;
            worst = worst.max(r.abs());
        }
        assert!(worst <= 1e-8, "residual {worst:e}");
        let (xw, ww) = grid(40.0 * f64::sqrt(nu), 1e-3);
        let m: f64 = colehopf_profile(mass, nu, &xw).iter().zip(&ww).map(|(u, w)| u * w).sum();
        assert!((m - mass).abs() <= 1e-8, "mass {m}");
    }
}

#[test]
fn deterministic_run_reaches_colehopf_profile() {
    let b = WeightedBasis::new(1.0, 64, 128).unwrap();
    let model = NoiseModel::zero(&b);
    let cfg = StepperConfig { scheme: Scheme::Deterministic, dt: 0.01, t_end: 20.0, epsilon: 0.1, r_max: 1e3, record_every: 100 };
    let u0 = InitialCondition::Bump { mass: 1.0 }.build(&b).unwrap();
    let traj = integrate(&b, &model, &cfg, &u0, &mut path_rng(0, 0)).unwrap();
    let err = traj.last().unwrap().sub(&colehopf_field(&b, 1.0)).unwrap().l2k_norm();
    assert!(err <= 1e-3, "L2(K) error {err:e}");
    assert!(traj.last().unwrap().tail_energy() < 1e-6);
}

#[test]
fn leibniz_and_conservative_assemblies_agree() {
    let b = WeightedBasis::new(1.0, 48, 96).unwrap();
    let mut rng = path_rng(9, 0);
    for _ in 0..20 {
        let mut cu = vec![0.0; 48];
        let mut cw = vec![0.0; 48];
        for k in 0..12 {
            cu[k] = rng.random_range(-1.0..1.0) / (1.0 + k as f64);
            cw[k] = rng.random_range(-1.0..1.0) / (1.0 + k as f64);
        }
        let u = SpectralField::from_coeffs(&b, &cu).unwrap();
        let w = SpectralField::from_coeffs(&b, &cw).unwrap();
        assert!(u.tail_energy() < 1e-8 && w.tail_energy() < 1e-8);
        let a = advective_conservative(&b, &u, &w).unwrap();
        let l = advective_leibniz(&b, &u, &w).unwrap();
        let d = a.sub(&l).unwrap().l2k_norm();
        assert!(d <= 1e-9, "{d:e}");
    }
}

fn all_schemes_cfg(scheme: Scheme, t_end: f64) -> StepperConfig {
    StepperConfig { scheme, dt: 0.005, t_end, epsilon: 0.05, r_max: 1e3, record_every: 500 }
}

#[test]
fn mass_is_invariant_over_ten_thousand_steps() {
    let b = WeightedBasis::new(1.0, 32, 64).unwrap();
    let model = NoiseModel::geometric(&b, 0.05, 0.6, 12, 0.05).unwrap();
    let u0 = InitialCondition::Random { mass: 1.3, k_max: 6, amp: 0.1, seed: 4 }.build(&b).unwrap();
    for scheme in Scheme::ALL {
        let cfg = all_schemes_cfg(scheme, 50.0);
        assert_eq!(cfg.n_steps(), 10_000);
        let traj = integrate(&b, &model, &cfg, &u0, &mut path_rng(1, 0)).unwrap();
        for d in &traj.diagnostics {
            assert!((d.mass - 1.3).abs() <= 1e-12, "{scheme}: {}", d.mass);
        }
        for s in &traj.states {
            assert_eq!(s.coeffs()[0], u0.coeffs()[0]);
        }
    }
}

#[test]
fn noise_off_collapses_to_deterministic_without_rng() {
    let b = WeightedBasis::new(1.0, 24, 48).unwrap();
    let zero = NoiseModel::zero(&b);
    let u0 = InitialCondition::Nwave { mass: 1.0, amp: 0.2 }.build(&b).unwrap();
    let reference = integrate(&b, &zero, &all_schemes_cfg(Scheme::Deterministic, 2.0), &u0, &mut path_rng(0, 0)).unwrap();
    for scheme in Scheme::ALL {
        let mut rng = path_rng(77, 3);
        let traj = integrate(&b, &zero, &all_schemes_cfg(scheme, 2.0), &u0, &mut rng).unwrap();
        assert_eq!(traj.states, reference.states, "{scheme}");
        let untouched: u64 = path_rng(77, 3).random();
        assert_eq!(rng.random::<u64>(), untouched, "{scheme} consumed randomness");
    }
}

#[test]
fn zero_initial_condition_stays_zero() {
    let b = WeightedBasis::new(1.0, 16, 32).unwrap();
    let model = NoiseModel::geometric(&b, 0.05, 0.6, 8, 0.05).unwrap();
    for scheme in Scheme::ALL {
        let traj = integrate(&b, &model, &all_schemes_cfg(scheme, 1.0), &SpectralField::zeros(&b), &mut path_rng(2, 0))
            .unwrap();
        assert!(traj.states.iter().all(|s| s.coeffs().iter().all(|&c| c == 0.0)), "{scheme}");
    }
}

#[test]
fn runs_are_deterministic_per_seed_and_path() {
    let b = WeightedBasis::new(1.0, 24, 48).unwrap();
    let model = NoiseModel::geometric(&b, 0.05, 0.6, 10, 0.05).unwrap();
    let u0 = InitialCondition::Bump { mass: 1.0 }.build(&b).unwrap();
    for scheme in [Scheme::SpdeIto, Scheme::RdeCorrected] {
        let cfg = all_schemes_cfg(scheme, 1.0);
        let a = integrate(&b, &model, &cfg, &u0, &mut path_rng(5, 2)).unwrap();
        let c = integrate(&b, &model, &cfg, &u0, &mut path_rng(5, 2)).unwrap();
        let d = integrate(&b, &model, &cfg, &u0, &mut path_rng(5, 3)).unwrap();
        assert_eq!(a.states, c.states);
        assert_ne!(a.states, d.states);
    }
}

#[test]
fn rde_shares_noise_with_frozen_stepping() {
    // step_rde is step_rde_frozen followed by the OU transition
    let b = WeightedBasis::new(1.0, 16, 32).unwrap();
    let model = NoiseModel::geometric(&b, 0.05, 0.6, 8, 0.05).unwrap();
    let cfg = all_schemes_cfg(Scheme::RdePlain, 0.1);
    let mut st = Stepper::new(&b, &model, &cfg).unwrap();
    let mut r1 = path_rng(8, 0);
    let mut ou1 = st.initial_ou(&mut r1).unwrap();
    let mut r2 = r1.clone();
    let mut ou2 = ou1.clone();
    let mut u1 = InitialCondition::Bump { mass: 1.0 }.build(&b).unwrap().into_coeffs();
    let mut u2 = u1.clone();
    for _ in 0..20 {
        st.step_rde(&mut u1, &mut ou1, &mut r1);
        st.step_rde_frozen(&mut u2, &ou2.coeffs);
        ou2.step(&model, cfg.dt, &mut r2);
    }
    assert_eq!(u1, u2);
}
