use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),

    #[error("bisection for mode {mode} did not converge (residual {residual:e})")]
    RootFind { mode: usize, residual: f64 },

    #[error("linear solve failed (condition estimate {condition:e})")]
    Solver { condition: f64 },

    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },

    #[error("norm drift {drift:e} exceeds tolerance {tolerance:e} at t = {t}")]
    NormDrift { t: f64, drift: f64, tolerance: f64 },

    #[error("corrupted state: {what} has imaginary part {imag:e}")]
    NonReal { what: &'static str, imag: f64 },

    #[error("Fock cutoff did not converge by n_max = {n_max} (change {change:e})")]
    FockCutoff { n_max: usize, change: f64 },

    #[error("Rabi fit failed: {reason} (spectral period estimate {period_guess})")]
    Fit { reason: &'static str, period_guess: f64 },
}
