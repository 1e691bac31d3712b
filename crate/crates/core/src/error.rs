use thiserror::Error;

use crate::model::{Diagnostic, Shape};
use crate::numerics::{QuadError, RangeError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {}", format_diagnostics(.0))]
    InvalidParams(Vec<Diagnostic>),
    #[error("non-positive kappa_hz = {0}")]
    NonPositiveKappa(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Range(#[from] RangeError),
    #[error("closed-form susceptibility is not available for {0:?} broadening")]
    UnsupportedClosedForm(Shape),
    #[error("xi_minus vanishes at omega = {omega} (lasing threshold, outside model validity)")]
    LasingThreshold { omega: f64 },
    #[error("Gamma(omega) vanishes at omega = {omega}")]
    NoisePole { omega: f64 },
    #[error("|T| = {modulus} exceeds unity at omega = {omega}")]
    ModelViolation { omega: f64, modulus: f64 },
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),
    #[error("invalid band [{lo}, {hi}]")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("threshold {0} must lie in (0, 1)")]
    InvalidThreshold(f64),
    #[error("baseline bandwidth is zero at threshold {threshold}")]
    ZeroBaseline { threshold: f64 },
    #[error("optimizer: {0}")]
    Optimizer(String),
}

impl Error {
    /// Frequency the failure was detected at, when there is one.
    pub fn omega(&self) -> Option<f64> {
        match self {
            Error::LasingThreshold { omega }
            | Error::NoisePole { omega }
            | Error::ModelViolation { omega, .. } => Some(*omega),
            _ => None,
        }
    }
}

fn format_diagnostics(d: &[Diagnostic]) -> String {
    d.iter()
        .map(|d| d.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
