//! Dense f64 tensors, named parameter storage, Adam, and a finite-difference
//! gradient checker.
//!
//! Everything here is deliberately small: the model zoo in [`crate::backbones`]
//! derives its gradients by hand, so the only generic machinery needed is a
//! flat row-major buffer, a parameter registry with optimizer moments, and an
//! oracle to validate the hand-written backward passes.

mod adam;
mod gradcheck;
mod params;
mod rng;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use params::{init_params, Gradients, InitKind, ParamId, ParamSpec, ParamStore};
pub use rng::Rng;
pub use tensor::Tensor;
