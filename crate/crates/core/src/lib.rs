//! Distributed multi-target tracking over a camera network.
//!
//! Every camera runs a Kalman-consensus filter on the ground plane, associates
//! its detections locally using geometry and appearance, and exchanges a single
//! message per frame with its graph neighbours. A distributed tracker manager
//! keeps identities, merges and drops consistent across the network.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod appearance;
pub mod assignment;
pub mod association;
pub mod dkf;
pub mod error;
pub mod experiment;
pub mod manager;
pub mod metrics;
pub mod model;
pub mod network;
pub mod scenario;

pub use error::{Error, Result};
