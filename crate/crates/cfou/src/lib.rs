//! Numerical laboratory for the least-squares drift estimator of complex
//! fractional Ornstein-Uhlenbeck processes, built around exact fractional
//! Brownian motion synthesis, a singular-quadrature engine for the
//! reproducing-kernel Hilbert space of fBm, and Monte-Carlo verification
//! harnesses for the estimator's limit theorems.

pub mod bridges;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod fbm;
pub mod fou;
pub mod kernels;
pub mod quad;
pub mod report;
pub mod rkhs;

pub use error::{CfouError, Result};
pub use fbm::{ComplexPath, HurstParam, HurstRegime, RealPath, Seed, UniformGrid};
pub use fou::DriftParam;
