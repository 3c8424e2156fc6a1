//! Error type shared across the crate.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by network construction, relaxation, and training.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration (bad sizes, bad hyperparameters, unknown kind).
    Config(String),
    /// Runtime shape disagreement between tensors.
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// A nudged phase was requested with `beta == 0`.
    ZeroBeta,
    /// Non-finite values appeared during the named phase.
    Divergence {
        phase: &'static str,
        epoch: usize,
        batch: usize,
    },
    /// The linear fixed-point oracle was given a non-contractive system.
    NonContractive { spectral_radius_estimate: f64 },
    /// A loss evaluation handed to an oracle returned a non-finite value.
    NonFiniteLoss,
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::ShapeMismatch {
                context,
                expected,
                got,
            } => write!(
                f,
                "shape mismatch in {context}: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            Error::ZeroBeta => write!(f, "nudged phase requires a nonzero beta"),
            Error::Divergence {
                phase,
                epoch,
                batch,
            } => write!(
                f,
                "non-finite values in {phase} phase (epoch {epoch}, batch {batch})"
            ),
            Error::NonContractive {
                spectral_radius_estimate,
            } => write!(
                f,
                "linear system is not a contraction (spectral radius ~{spectral_radius_estimate})"
            ),
            Error::NonFiniteLoss => write!(f, "loss evaluation returned a non-finite value"),
        }
    }
}

impl core::error::Error for Error {}
