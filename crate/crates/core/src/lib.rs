//! Bayesian qubit-frequency sensing from Ramsey click counts.
//!
//! The crate fits together five pieces:
//! - [`quantum`]: exact 2x2 algebra, the ideal Ramsey unitary, and the
//!   click-probability map.
//! - [`sim`]: a configurable noisy-qubit simulator standing in for the
//!   experiment — dataset generation plus brute-force Monte-Carlo oracles.
//! - [`nn`] and [`graybox`]: a small reverse-mode autodiff engine and the
//!   hybrid model (dense network → noise-operator reconstruction → exact
//!   Ramsey layers → click probability).
//! - [`whitebox`]: the analytic Gaussian-envelope Ramsey baseline.
//! - [`bayes`]: grid-based posterior inference of the qubit frequency from
//!   batched click counts, generic over the likelihood provider.

pub mod bayes;
pub mod error;
pub mod graybox;
pub mod jsonfmt;
pub mod nn;
pub mod quantum;
pub mod seed;
pub mod sim;
pub mod whitebox;

pub use error::{Error, ErrorClass, Result};
pub use seed::StreamSeed;
