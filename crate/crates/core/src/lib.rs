//! Benchmark harness for cluster autoscaling policies: a synthetic
//! workload generator, a discrete-event executor simulator, baseline and
//! external policies, metrics, and the paired statistics used to compare
//! policies.

// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod genval;
pub mod harness;
pub mod metrics;
pub mod num;
pub mod policy;
pub mod sim;
pub mod stats;
pub mod store;
pub mod stub;
pub mod workload;

pub use error::{Error, Result};

pub type Sample = genval::Sample<f64>;
pub type Histogram = genval::Histogram<f64>;
pub type PairedSample = stats::PairedSample<f64>;
pub type Interval = stats::Interval<f64>;
