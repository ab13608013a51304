//! Certification of non-entanglement-breaking qubit channels from
//! weak-coherent-pulse experiments.

pub mod channels;
pub mod decoy;
pub mod ebbound;
pub mod error;
pub mod game;
pub mod optics;
pub mod qkd;
pub mod qubit;
pub mod sweep;

pub use error::{Error, Result};
