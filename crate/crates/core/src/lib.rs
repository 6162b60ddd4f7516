//! Kernels for incomplete multivariate time series (MTS) and an unsupervised
//! clustering pipeline built on top of them.
//!
//! Two kernels handle missing data natively:
//!
//! * [`tck`]: the time series cluster kernel, an ensemble of diagonal-covariance
//!   Gaussian mixtures fitted with MAP-EM where unobserved cells are integrated out.
//! * [`lps`]: learned pattern similarity, a histogram-intersection kernel over
//!   leaf counts of random-lag regression trees.
//!
//! Two baselines need complete data and therefore an [`impute`] step first:
//! the linear kernel and the global alignment kernel ([`kernels`]).
//!
//! Any of the four feeds the [`cluster`] head (kernel PCA, k-means, kNN
//! out-of-sample assignment), and [`eval`] runs the repeated-split evaluation.

pub mod cluster;
pub mod cohort;
pub mod error;
pub mod eval;
pub mod impute;
pub mod kernels;
pub mod lps;
pub mod seed;
pub mod tck;

pub use cluster::{ClusterAssignment, Embedding, KpcaModel};
pub use cohort::{Cohort, Mechanism, MissingnessSpec, MtSample, SynthConfig};
pub use error::{Error, Result};
pub use eval::{ExperimentConfig, ExperimentReport, MethodSpec};
pub use impute::{ImputationMethod, ImputationSpec};
pub use kernels::{GakParams, KernelMatrix};
pub use lps::{LpsConfig, LpsForest};
pub use tck::{TckConfig, TckModel};
