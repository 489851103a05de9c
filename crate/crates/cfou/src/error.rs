//! Error types shared across the crate.

use num_complex::Complex64;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum CfouError {
    /// A parameter is outside the mathematically valid range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Gaussian path synthesis failed (negative circulant spectrum with the
    /// dense fallback disabled, or an embedding too large to factor densely).
    #[error("synthesis error: {0}")]
    Synthesis(String),

    /// A quadrature did not reach the requested tolerance. Carries the best
    /// available estimate and the final error bound.
    #[error("accuracy error: best estimate {best}, error bound {bound} ({context})")]
    Accuracy {
        best: Complex64,
        bound: f64,
        context: String,
    },

    /// The least-squares denominator is (numerically) zero.
    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),

    /// Diagnostics could not be formed (singular target, zero variance).
    #[error("diagnostics error: {0}")]
    Diagnostics(String),

    /// Invalid experiment configuration.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CfouError {
    /// Process exit status for the CLI: 2 for configuration problems,
    /// 3 for accuracy failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CfouError::Validation(_) | CfouError::Domain(_) => 2,
            CfouError::Accuracy { .. } => 3,
            _ => 1,
        }
    }

    /// One-line machine-parsable form for standard error.
    pub fn stderr_line(&self) -> String {
        let kind = match self {
            CfouError::Domain(_) => "domain",
            CfouError::Synthesis(_) => "synthesis",
            CfouError::Accuracy { .. } => "accuracy",
            CfouError::DegenerateDenominator(_) => "degenerate",
            CfouError::Diagnostics(_) => "diagnostics",
            CfouError::Validation(_) => "validation",
            CfouError::Io(_) => "io",
            CfouError::Json(_) => "json",
        };
        format!("error: kind={kind} reason={}", self).replace('\n', " ")
    }
}

pub type Result<T> = std::result::Result<T, CfouError>;
