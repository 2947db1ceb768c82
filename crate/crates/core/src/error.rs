use thiserror::Error;

use crate::fock_core::Register;

/// Largest number of amplitudes any materialized state or ensemble may hold.
pub const AMPLITUDE_CAP: usize = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("mode count must be at least 1")]
    ZeroModes,

    #[error("mode index {mode} out of range for {modes} modes")]
    ModeOutOfRange { mode: usize, modes: usize },

    #[error("register {0} is not present in this state")]
    MissingRegister(Register),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("photon count {count} exceeds the packed per-mode limit of {max}", max = u16::MAX)]
    OccupancyOverflow { count: usize },

    #[error(
        "amplitude cap exceeded for N={photons}, M={modes}: {what} needs {required} entries (cap {cap})",
        cap = AMPLITUDE_CAP
    )]
    CapExceeded {
        what: &'static str,
        photons: usize,
        modes: usize,
        required: String,
    },

    #[error("absorbed photon count {absorbed} exceeds transmitted photon count {photons}")]
    AbsorbedExceedsPhotons { absorbed: usize, photons: usize },

    #[error("reflectivity {0} is outside [0, 1]")]
    InvalidEta(f64),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
