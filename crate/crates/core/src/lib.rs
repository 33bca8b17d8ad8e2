//! Minimum-norm interpolation and regularized least squares.
//!
//! The numerical core ([`norms`], [`linalg`], [`solvers`], [`certificates`])
//! is generic over the scalar type through [`Real`]; the Monte Carlo parts
//! ([`complexity`], [`experiments`]) work in `f64`.

pub mod certificates;
pub mod complexity;
pub mod covariance;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod norms;
pub mod rng;
pub mod scalar;
pub mod solvers;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use norms::{subgradient_lower, subgradient_upper, GroupPartition, MatrixShape, NormFamily, SubgradientSpec};
pub use scalar::Real;

pub type MatrixF64 = Matrix<f64>;
pub type MatrixF32 = Matrix<f32>;
pub type SubgradientSpecF64 = SubgradientSpec<f64>;
pub type ProblemInstanceF64 = solvers::ProblemInstance<f64>;
pub type ProblemInstanceF32 = solvers::ProblemInstance<f32>;
pub type SolverConfigF64 = solvers::SolverConfig<f64>;
pub type SolverConfigF32 = solvers::SolverConfig<f32>;
pub type EstimatorResultF64 = solvers::EstimatorResult<f64>;
pub type EstimatorResultF32 = solvers::EstimatorResult<f32>;
pub type DualCertificateF64 = certificates::DualCertificate<f64>;
pub type DualCertificateF32 = certificates::DualCertificate<f32>;
pub type CovarianceF64 = covariance::Covariance<f64>;
