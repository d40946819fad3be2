//! Simulation and resource allocation for multi-cell backscatter sensor
//! networks.
//!
//! The pipeline is: build a cellular [`topology`], sample Rician links and
//! form compound scatter channels ([`channel`]), run MRC or ZF linear
//! detection ([`detection`]) across a measurement phase of randomly
//! re-allocated frames ([`measurement`]), then assign tags to frequency
//! subchannels per core with damped Max-Sum message passing
//! ([`allocator`]). [`experiment`] wires those stages into power sweeps,
//! convergence studies and timing comparisons.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod channel;
pub mod config;
pub mod detection;
mod error;
pub mod experiment;
pub mod linalg;
pub mod measurement;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Column vector of complex baseband samples.
pub type CVector = nalgebra::DVector<Complex64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
