//! Minimal deterministic dense-network engine.

mod adam;
mod gradcheck;
mod mlp;
mod params;
mod rng;
mod tensor;

pub use adam::{adam_step, AdamSettings};
pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradReport, TensorCheck};
pub use mlp::{
    mlp_backward, mlp_forward, sigmoid, softplus, Activation, HeadOutputs, HeadSpec, MlpSpec, Tape,
};
pub use params::{ParamEntry, ParamStore};
pub use rng::{Rng, SeedStream};
pub use tensor::Tensor2;

/// Log-variance heads are clamped to this range before exponentiation.
pub const LOG_VAR_CLAMP: (f64, f64) = (-10.0, 10.0);
