//! Neural language-modeling core: a minimal dense-tensor reverse-mode
//! autodiff engine, an LSTM context encoder, and five interchangeable
//! output-layer parameterizations (full softmax, weight tying, bilinear,
//! dual nonlinear, and a deep residual label encoder), together with the
//! corpus, training, and evaluation machinery they need.
//!
//! Everything is f64 and row-major. The crate is `no_std`-compatible
//! (alloc required); the default `std` feature adds threaded matrix
//! kernels.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod gemm;
pub mod gradcheck;
pub mod lstm;
pub mod mathx;
pub mod model;
pub mod optim;
pub mod output;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use error::Error;
pub use rng::Rng;
pub use tape::{NodeId, ParamStore, Parameter, Tape};
pub use tensor::Tensor;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Whether a forward pass samples dropout (train) or is deterministic (eval).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}
