//! Answering batches of linear counting queries under ε-differential privacy
//! by decomposing the workload matrix `W` into `B·L` and injecting Laplace
//! noise into the intermediate answers `L·D` (the low-rank mechanism).
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar for the common cases.

pub mod baselines;
pub mod decomposition;
pub mod error;
pub mod harness;
pub mod io;
pub mod lrm;
pub(crate) mod linalg;
pub mod mechanisms;
pub mod rng;
pub mod scalar;
pub mod workload;

pub use error::{Error, Result};
pub use scalar::Real;

pub type WorkloadMatrixF64 = workload::WorkloadMatrix<f64>;
pub type WorkloadMatrixF32 = workload::WorkloadMatrix<f32>;
pub type DatabaseVectorF64 = workload::DatabaseVector<f64>;
pub type DatabaseVectorF32 = workload::DatabaseVector<f32>;
pub type SpectrumSummaryF64 = workload::SpectrumSummary<f64>;
pub type DecompositionF64 = decomposition::Decomposition<f64>;
pub type DecompositionF32 = decomposition::Decomposition<f32>;
pub type PrivacyParamsF64 = mechanisms::PrivacyParams<f64>;
pub type PrivacyParamsF32 = mechanisms::PrivacyParams<f32>;
pub type NoisyAnswerF64 = mechanisms::NoisyAnswer<f64>;
pub type ErrorAnalysisF64 = lrm::ErrorAnalysis<f64>;
pub type StrategyMatrixF64 = baselines::matrix_mechanism::StrategyMatrix<f64>;
