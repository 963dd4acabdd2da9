use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the model, the solvers and the file formats.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the physical domain of a formula.
    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    /// The integrated inner radius left the open interval (0, r_o).
    #[error("inner radius of segment {segment} left the admissible range at t = {time:.6} s (r_i = {radius:e} m)")]
    RadiusOutOfRange {
        segment: usize,
        time: f64,
        radius: f64,
    },

    #[error("non-finite state at t = {time:.6} s")]
    NonFinite { time: f64 },

    #[error("step size underflow at t = {time:.6} s (h = {step:e})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("integrator exceeded {max_steps} steps before t = {time:.6} s")]
    TooManySteps { max_steps: usize, time: f64 },

    /// Mass matrix not positive definite or too badly conditioned.
    #[error("singular mass matrix (condition estimate {condition:e})")]
    SingularMassMatrix { condition: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("{what} did not converge in {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid configuration: {key}: {reason}")]
    Config { key: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{path}: {reason}")]
    Data { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery (as opposed to bad input files).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::RadiusOutOfRange { .. }
                | Error::NonFinite { .. }
                | Error::StepUnderflow { .. }
                | Error::TooManySteps { .. }
                | Error::SingularMassMatrix { .. }
                | Error::LinearSolve(_)
                | Error::NoConvergence { .. }
                | Error::DegenerateData(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
