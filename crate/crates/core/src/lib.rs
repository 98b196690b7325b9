//! End-to-end training-cost analysis for rate-coded spiking networks on a
//! weight-stationary accelerator: a desk-scale BPTT reference trainer that
//! measures spike / firing-window / potential-gradient sparsity, analytic
//! operation and memory-access counters, an energy model with hypothetical
//! sweeps, a dataflow traffic simulator that validates the counters, and a
//! standard-backprop ANN baseline for training-energy comparisons.

pub mod ann;
pub mod checkpoint;
pub mod config;
pub mod counts;
pub mod dataflow;
pub mod encode;
pub mod energy;
pub mod error;
pub mod layers;
pub mod lif;
pub mod mnist;
pub mod network;
pub mod parallel;
pub mod probe;
pub mod snn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
