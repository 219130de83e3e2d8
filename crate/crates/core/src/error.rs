//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented invariant.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    /// A time or index argument fell outside its admissible range.
    #[error("{what} = {value} outside [{min}, {max}]")]
    Range {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    /// An iterative procedure stopped before meeting its tolerance.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// A physically inadmissible configuration, e.g. an unstable mode.
    #[error("{0}")]
    Structural(String),

    /// No admissible (non-negative) amplitude weights exist.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A linear system was singular or too ill-conditioned to trust.
    #[error("singular system: {0}")]
    Singular(String),

    /// Amplitude calibration failed (zero or wrong-sign angle, power limit).
    #[error("calibration: {0}")]
    Calibration(String),

    /// Fock truncation was too small for the simulated dynamics.
    #[error("truncation overflow: top Fock level population {population:.3e} on mode {mode}")]
    Truncation { mode: usize, population: f64 },

    /// The adaptive integrator could not meet its tolerance.
    #[error("step-size failure at t = {t:.6e} s (step {step:.3e} s)")]
    StepSize { t: f64, step: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
