//! Simulation library for approximate autonomous quantum error correction
//! in a single bosonic mode: truncated Fock-space algebra, Lindblad and
//! quantum-trajectory dynamics, bosonic codes with engineered recovery,
//! fidelity metrics, reduced analytic models, codeword search and a
//! three-component hardware model.

pub mod codes;
pub mod dynamics;
pub mod effective;
pub mod error;
pub mod fidelity;
pub mod fock;
pub mod hardware;
pub mod model;
pub mod rlsearch;

pub use error::{Error, Result};

/// Library version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
