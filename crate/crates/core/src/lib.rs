//! Numerics for the stochastic hierarchy of pure states (HOPS) and its
//! matrix product state form (HOMPS).
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches the
//! outside world, such as noise synthesis by FFT, worker pools and file
//! formats, lives in the `homps` companion crate.
//!
//! Layout:
//!
//! * [`bath`]: spectral densities, the finite-temperature bath correlation
//!   function and its exponential mode decomposition.
//! * [`noise`]: sampled noise paths and the memory shift of the nonlinear
//!   equation.
//! * [`hierarchy`]: multi-index bookkeeping and the dense HOPS integrator.
//! * [`tensor`]: tensor trains (MPS) and operator trains (MPO).
//! * [`homps`]: the effective-Hamiltonian MPO and the MPS propagator.
//! * [`models`]: spin-boson and molecular chain builders.
//! * [`ensemble`]: streaming trajectory reduction.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bath;
pub mod ensemble;
mod error;
pub mod hierarchy;
pub mod homps;
pub mod linalg;
pub mod models;
pub mod noise;
pub mod quad;
pub mod tensor;
pub mod trajectory;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
