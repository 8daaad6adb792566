//! Pseudo-spectral solver for the stochastic Burgers equation with advective noise,
//! written in self-similar variables τ = log t, ξ = x/√t, u = √t·w:
//!
//!   du = [ν u_ξξ + ½ξ u_ξ + ½u − u u_ξ] dτ + (u dW)_ξ.
//!
//! Fields are expanded in the eigenbasis of the linear part in L²(K), K = exp(ξ²/4ν).

pub mod basis;
pub mod dynamics;
pub mod error;
pub mod noise;
pub mod rng;
pub mod selfsim;
pub mod stats;

pub use basis::{SpectralField, WeightedBasis};
pub use dynamics::{InitialCondition, Scheme, Stepper, StepperConfig};
pub use error::{Error, Result};
pub use noise::{NoiseModel, OUState};
