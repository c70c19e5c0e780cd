//! Debiased two-sample U-statistics with cross-fitting, and the two-sample
//! conditional-distribution test built on them.
//!
//! * [`ustat`]: generic U-statistics, fold grids, cross-fitting, variance, z-test.
//! * [`covshift`]: the comparison kernel, plug-in and debiased kernels, the test pipeline.
//! * [`nuisance`]: density-ratio, score and α fits.
//! * [`solvers`]: IRLS logistic regression, coordinate-descent lasso, OLS/ridge, stability selection.
//! * [`simlab`]: synthetic Gaussian models and the Monte Carlo runner.
//! * [`dataio`]: CSV ingestion and real-data partitions.

pub mod covshift;
pub mod dataio;
pub mod error;
pub mod normal;
pub mod nuisance;
pub mod rng;
pub mod simlab;
pub mod solvers;
pub mod stats;
pub mod ustat;

pub use error::{Error, Result, Side};
