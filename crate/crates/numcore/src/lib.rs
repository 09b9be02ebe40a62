//! Dense tensors with reverse-mode automatic differentiation, an Adam
//! optimizer, seeded initialization, and a finite-difference gradient
//! checker. Everything is generic over the scalar type; the aliases at
//! the bottom pin the two float widths.
//!
//! The tape is define-by-run: ops compute eagerly and record enough to
//! replay the chain rule. `Tape::backward` consumes the tape; gradients
//! accumulate on tensors until `AdamState::step` (or an explicit
//! `zero_grad`) clears them.

mod adam;
mod error;
mod gradcheck;
mod init;
mod kernels;
mod params;
mod scalar;
mod tape;
mod tensor;
pub mod verify;

pub use adam::{AdamConfig, AdamState};
pub use error::NumError;
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use init::{full_param, xavier_uniform, xavier_uniform_vec, zeros_param};
pub use params::ParamSet;
pub use scalar::{count, lit, Scalar};
pub use tape::{Tape, PROB_FLOOR, PROB_SUM_TOL};
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Tape32 = Tape<f32>;
pub type Tape64 = Tape<f64>;
pub type ParamSet64 = ParamSet<f64>;
