//! Wall-clock cost of one step per scheme.
//!
//!   cargo run --release -p stochburgers --example step_cost -- [N] [M]

use std::time::Instant;

use stochburgers::dynamics::{InitialCondition, Scheme, Stepper, StepperConfig};
use stochburgers::noise::NoiseModel;
use stochburgers::rng::path_rng;
use stochburgers::WeightedBasis;

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n = args.first().copied().unwrap_or(64);
    let m = args.get(1).copied().unwrap_or(2 * n);
    let basis = WeightedBasis::new(1.0, n, m).expect("basis");
    let model = NoiseModel::geometric(&basis, 0.1, 0.5, 16, 0.05).expect("noise");
    let u0 = InitialCondition::Bump { mass: 1.0 }.build(&basis).expect("ic");
    for scheme in Scheme::ALL {
        let cfg = StepperConfig { scheme, dt: 0.005, t_end: 1.0, epsilon: 0.1, r_max: 1e3, record_every: 1 };
        let mut st = Stepper::new(&basis, &model, &cfg).expect("stepper");
        let mut rng = path_rng(1, 0);
        let mut ou = st.initial_ou(&mut rng);
        let mut u = u0.coeffs().to_vec();
        let steps = 20_000;
        let t0 = Instant::now();
        for _ in 0..steps {
            st.step(&mut u, ou.as_mut(), &mut rng);
        }
        let per = t0.elapsed().as_secs_f64() / steps as f64;
        println!("{:<16} N={n} M={m}: {:.2} us/step (u0={:.4})", scheme.name(), per * 1e6, u[0]);
    }
}
