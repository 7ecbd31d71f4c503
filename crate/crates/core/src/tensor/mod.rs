//! Tensor trains over complex numbers.
//!
//! Site tensors are stored row-major: an MPS tensor `A[a, s, b]` at
//! `(a * p + s) * r + b`, an MPO tensor `W[w, s, t, v]` (output index `s`,
//! input index `t`) at `((w * p + s) * p + t) * r + v`. Dense vectors use the
//! first site as the slowest index.

mod mpo;
mod mps;

pub use mpo::{matvec_contract, OperatorTrain, SparsePattern, Tensor4};
pub use mps::{Tensor3, TensorTrain};
