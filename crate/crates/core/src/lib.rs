//! Detecting an anomalous cluster of nodes in a network with scan statistics.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

pub mod cli;
pub mod cluster;
pub mod clusters;
pub mod detect;
pub mod error;
pub mod growth;
pub mod metric;
pub mod models;
pub mod network;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use cluster::{Cluster, Metadata, NodeId};
pub use error::{Result, ScanError};
pub use growth::ClusterSequence;
pub use models::NoiseModel;
pub use network::Mode;
pub use scalar::Scalar;

pub type NodeSet = network::NodeSet<f64>;
pub type NodeSet32 = network::NodeSet<f32>;
pub type Field = models::Field<f64>;
pub type Field32 = models::Field<f32>;
pub type EpsNet = metric::EpsNet<f64>;
pub type EpsNet32 = metric::EpsNet<f32>;
pub type ClassSpec = clusters::ClassSpec<f64>;
pub type TestResult = detect::TestResult<f64>;
pub type Calibration = detect::Calibration<f64>;
pub type ExperimentConfig = sim::ExperimentConfig<f64>;
