use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fields live in different bases ({left:#x} vs {right:#x})")]
    BasisMismatch { left: u64, right: u64 },

    #[error("derivative shift r_{k}: quadrature gives {measured}, closed form {expected}")]
    ShiftMismatch { k: usize, measured: f64, expected: f64 },

    #[error("projection residual {residual:.3e} exceeds tolerance")]
    ProjectionLoss { residual: f64 },

    #[error("H1(K) guard tripped at tau = {tau} (norm {norm:.6e} > {r_max})")]
    GuardTripped { tau: f64, norm: f64, r_max: f64 },

    #[error("non-finite state at tau = {tau}")]
    NonFinite { tau: f64 },

    #[error("dt = {dt} exceeds epsilon/10 = {}", epsilon / 10.0)]
    StepTooLarge { dt: f64, epsilon: f64 },

    #[error("initial masses differ: {a} vs {b}")]
    MassMismatch { a: f64, b: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
