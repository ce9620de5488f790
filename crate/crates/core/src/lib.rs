//! Quantum state smoothing for a resonantly driven, partially observed qubit.

pub mod algebra;
pub mod correlators;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod record_io;
pub mod rng;
pub mod smoothing;
pub mod unravelling;

pub use error::{Error, Result};
