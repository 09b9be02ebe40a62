//! Trial-conditioned doctor representations with a memory network over
//! patient embeddings, plus reference baselines, metrics, a synthetic
//! corpus generator with a planted affinity signal, and transfer-learning
//! harnesses. Numerical work runs on the `numcore` reverse-mode tape.

pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod error;
pub mod evalx;
pub mod features;
pub mod model;
pub mod syngen;
pub mod text;
pub mod threshold;
pub mod train;

pub use error::{D2vError, Result};
