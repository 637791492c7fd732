use serde::Serialize;
use thiserror::Error;

/// Errors raised by the numerical kernels.
///
/// Validation problems (bad parameters, points outside a chart) are kept
/// apart from numerical events so that callers can map them to different
/// exit codes.
#[derive(Debug, Clone, Error, PartialEq, Serialize)]
#[serde(tag = "error", rename_all = "kebab-case")]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("point {point:?} lies outside the chart domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("metric is singular at {point:?}")]
    SingularChart { point: Vec<f64> },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("implicit solve failed near a shock; characteristics cross at x1 ~ {x1_critical}")]
    ShockRegion { x1_critical: f64 },

    #[error("radicand negative at G1 = {g1}: alpha changes branch (turning point)")]
    TurningPoint { g1: f64 },

    #[error("step size {h:e} underflowed at t = {t}; the system looks stiff")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },

    #[error("flow map degenerates at t = {t} (det = {det:e})")]
    DegenerateFlow { t: f64, det: f64 },

    #[error("quadrature inconclusive: {reason}; try a truncation radius of at least {suggested_radius}")]
    InconclusiveQuadrature { reason: String, suggested_radius: f64 },

    #[error("asymptotic fit unreliable: {reason}")]
    FitUnreliable { reason: String },
}

impl Error {
    pub fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
    }

    /// True for problems with the inputs rather than with the computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidParameter { .. } | Error::OutsideDomain { .. } | Error::SingularChart { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], context: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context: context.to_string() })
    }
}
