//! Minimal numerical kernel: a dense 2-D tensor, the handful of layers the
//! models need (linear, ReLU, sigmoid, dilated temporal convolution,
//! dropout), masked binary cross-entropy, AdamW, a binary checkpoint format,
//! and a finite-difference gradient checker.
//!
//! Everything is generic over the scalar type: tests run the exact same code
//! in f64 for gradient checking, training runs in f32.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod tensor;

pub use tensor::{s, Scalar, Tensor2};
