//! Energy-based fixed-point networks trained with equilibrium propagation.
//!
//! This crate implements layered networks that relax to a fixed point under
//! discrete synchronous dynamics, and two ways of training them on the same
//! dynamics:
//!
//! - **Equilibrium propagation** ([`ep`]): gradients estimated from the
//!   difference between free and weakly nudged fixed points, either as the
//!   classic two-phase update or as the centered symmetric estimator.
//! - **Backprop through time** ([`bptt`]): hand-derived reverse mode through
//!   the unrolled free phase, used both as a baseline trainer and as the
//!   gradient oracle that anchors the EP tests.
//!
//! Two neuron models share the relaxation machinery: a standard dense neuron
//! with transpose-symmetric feedback, and a dendritic neuron whose input is
//! aggregated from sparse nonlinear basal and apical branches ([`dendrite`]).
//!
//! Design points:
//!
//! - `no_std` + `alloc`; all math is `f64` via `libm`, so results do not
//!   depend on the host's libm.
//! - No autodiff and no BLAS: the handful of matrix kernels in [`linalg`]
//!   own their accumulation order, which makes single-threaded runs
//!   bit-reproducible and lets the dendritic layer reduce to the standard
//!   layer bit-exactly in its degenerate configuration.
//! - Batches are matrices with one column per sample; batch elements never
//!   interact except in final gradient averaging.
//! - [`gradcheck`] holds the independent oracles (central finite differences,
//!   closed-form linear fixed points) used by the verification suites. They
//!   share no code with the gradient paths they check.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod activation;
pub mod bptt;
pub mod config;
pub mod dendrite;
pub mod dynamics;
pub mod ep;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod optim;
pub mod params;
pub mod state;
pub mod train;

pub use activation::Activation;
pub use config::{BranchSpec, NetworkConfig, NeuronModel};
pub use dynamics::Network;
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use params::Parameters;
pub use state::{NetworkState, PhaseResult};
