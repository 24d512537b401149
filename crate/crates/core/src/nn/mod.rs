//! From-scratch dense network numerics: linear layers, batch normalization,
//! activations, MSE loss, reverse-mode gradients, Adam, and a finite
//! difference gradient checker.
//!
//! All training arithmetic is f64; stored artifacts round to f32. Everything
//! here is single-threaded and bit-deterministic for a fixed seed.

mod activation;
mod adam;
mod batchnorm;
mod gradcheck;
mod linear;
mod loss;
mod stack;

pub use activation::Activation;
pub use adam::{adam_step, AdamHyper, AdamState};
pub use batchnorm::{BatchNormCache, BatchNormGrads, BatchNormLayer};
pub use gradcheck::{
    check_stack_mse, gradient_check_fn, stack_mse_gradients, GradCheckReport, DEFAULT_DENOM_FLOOR,
    DEFAULT_H,
};
pub use linear::{LinearGrads, LinearLayer};
pub use loss::mse_loss;
pub use stack::{Block, BlockGrads, DenseStack, StackCache, StackGrads};
