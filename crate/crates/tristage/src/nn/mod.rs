//! Minimal 1-D neural-network plumbing: dense, convolution, transposed
//! convolution, and max-pool layers with explicit backward passes, plus an
//! Adam optimizer. Everything is f64 and deterministic given a seeded RNG;
//! gradients are validated against finite differences in the tests.

pub mod adam;
pub mod layers;

pub use adam::Adam;
pub use layers::{
    leaky_relu, leaky_relu_grad, relu, relu_grad, sigmoid, sigmoid_grad_from_output, Conv1d,
    ConvTranspose1d, Dense, Init, MaxPool1d, ParamView,
};
