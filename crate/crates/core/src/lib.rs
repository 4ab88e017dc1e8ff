//! Dissipative quantum neural networks (DQNNs) in the isometry formulation.
//!
//! The crate covers the composite parametrization of isometries, conventional
//! and ancilla-extended network architectures, quantum channels and their
//! random sampling, eight state-distinguishability cost functions with their
//! analytic gradients, ADAM training (Choi-state and random-state protocols),
//! and a Monte-Carlo diamond-distance estimator used as an independent benchmark.

pub mod error;
pub mod tensor;
pub mod isometry;
pub mod channels;
pub mod network;
pub mod cost;
pub mod metrics;
pub mod train;

pub use error::{Error, Result};
