//! Two-layer networks trained by gradient descent on separable data, with
//! instrumentation for stable rank, margins, activation patterns and the
//! data-correlated decomposition of the weights.

pub mod data;
pub mod decomposition;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
