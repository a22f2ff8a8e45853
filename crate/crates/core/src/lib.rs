//! Restarted self-guiding spectral clustering.
//!
//! The engine keeps a current partition of the samples and, every cycle,
//! rebuilds a strictly block-diagonal Gaussian similarity whose blocks are
//! the current clusters. Each block is approximated with a low-rank Nyström
//! factorization, so no `n x n` matrix is ever formed. Two drivers are
//! provided:
//!
//! | Driver | Post-processing |
//! |--------|-----------------|
//! | [`restart::run_algorithm1`] | per-block top eigenvectors, then K-means |
//! | [`rotation::run_algorithm2`] | generalized power iteration, spectral rotation, argmax labels |
//!
//! Around those sit the dataset loaders ([`dataset`]), the clustering
//! criteria ([`metrics`]), and a dense-oracle harness that checks the
//! perturbation bounds for the low-rank approximation ([`theory`]).

mod clock;
pub mod dataset;
mod error;
pub mod kernel;
pub mod kmeans;
pub mod linalg;
pub mod metrics;
pub mod partition;
pub mod restart;
pub mod rotation;
pub mod runner;
pub mod seed;
pub mod theory;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use kernel::{BlockFactors, KernelParams};
pub use metrics::MetricsReport;
pub use partition::Partition;
