//! Numerical core for fair synthetic tabular data generation.
//!
//! The pipeline has three stages:
//!
//! 1. [`fairvae`] trains a conditional VAE teacher whose latent code is pushed
//!    towards independence from a sensitive attribute with a distance
//!    covariance penalty ([`dcov`]).
//! 2. [`distill`] trains a small student network that maps pure Gaussian noise
//!    to the teacher's latent distribution. The student never sees a data row.
//! 3. [`synth`] composes the student with the teacher's decoder to emit
//!    synthetic records, which [`eval`] scores for fairness, utility and
//!    fidelity.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. File formats, CSV ingestion and the command line live in the
//! `fair4free` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dcov;
pub mod distill;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod fairvae;
pub mod numkernel;
pub mod schema;
pub mod synth;

pub use error::{Error, Result};
pub use numkernel::{AdamConfig, Matrix, ParamTensor};
