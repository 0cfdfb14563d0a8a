//! Tests for changes in the covariance structure of K independent,
//! possibly high-dimensional time series observed at different sampling
//! rates.
//!
//! The covariance matrices are never formed. Each observation vector `Y` is
//! reduced to the scalar bilinear product `(v'Y)(w'Y)`, and the CUSUM tests
//! run on the partial sums of those products.

pub mod cptest;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod limits;
pub mod lrv;
pub mod rng;
pub mod simgen;
pub mod sumproc;

pub use cptest::{run_test, Projection, TestReport, TestSpec};
pub use error::{Error, Result};
pub use harness::{run_experiment, ExperimentConfig, ExperimentResult};
pub use ingest::{load_bundle, BundleOptions, DataBundle};
pub use limits::{PathCache, StatisticKind};
pub use lrv::LrvMode;
pub use simgen::{gen_ar1_panel, gen_dirichlet_projection, PanelConfig};
pub use sumproc::{ProjectionPair, TargetBilinear};
