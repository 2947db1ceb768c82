//! Exact computation and sparse simulation for the multi-photon entangled
//! state `|ψ_N⟩` over an idler and a signal register of `M` modes, its
//! behavior under beamsplitter loss, and the false-alarm / missed-detection
//! probabilities of the resulting target-detection test.

pub mod cli;
pub mod combinatorics;
pub mod detection;
pub mod error;
pub mod fock_core;
pub mod loss_channel;
pub mod psi_family;

pub use error::{Error, Result, AMPLITUDE_CAP};
