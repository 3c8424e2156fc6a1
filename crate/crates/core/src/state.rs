//! Network state for a batch and the result of a relaxation phase.

use alloc::vec::Vec;

use crate::config::NetworkConfig;
use crate::linalg::Matrix;

/// Activations of every non-input layer for one batch.
///
/// `layers[l]` is (units, batch): one column per sample. The input layer is
/// not part of the state; it stays clamped to the presented batch.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub layers: Vec<Matrix>,
    /// Relaxation steps applied since this state was initialized.
    pub step_index: usize,
}

impl NetworkState {
    /// All-zero state (the free-phase starting point).
    pub fn zeros(config: &NetworkConfig, batch: usize) -> Self {
        let layers = (0..config.n_layers())
            .map(|l| Matrix::zeros(config.layer_width(l), batch))
            .collect();
        NetworkState {
            layers,
            step_index: 0,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.layers.first().map_or(0, |m| m.cols())
    }

    /// Output-layer activations (units, batch).
    pub fn output(&self) -> &Matrix {
        self.layers.last().expect("state has at least one layer")
    }

    /// Largest absolute componentwise difference across all layers.
    pub fn max_abs_diff(&self, other: &NetworkState) -> f64 {
        let mut m = 0.0f64;
        for (a, b) in self.layers.iter().zip(&other.layers) {
            let d = a.max_abs_diff(b);
            if d > m {
                m = d;
            }
        }
        m
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|m| m.all_finite())
    }
}

/// Outcome of running a relaxation phase.
#[derive(Debug, Clone)]
pub struct PhaseResult {
    pub final_state: NetworkState,
    /// One snapshot per executed step, when recording was requested.
    pub trajectory: Option<Vec<NetworkState>>,
    /// Max-abs componentwise state change over the final step.
    pub converged_delta: f64,
}
