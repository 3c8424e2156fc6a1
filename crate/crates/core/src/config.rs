//! Network topology and neuron-model configuration.

use alloc::format;
use alloc::vec::Vec;

use crate::activation::Activation;
use crate::error::{Error, Result};

/// Dendritic branch hyperparameters.
///
/// The trained configuration uses 8 basal branches, 2 apical branches,
/// sparsity 0.5, apical scaling 0.2, and ReLU branch nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BranchSpec {
    /// Basal (feedforward) branches per neuron.
    pub n_basal: usize,
    /// Apical (feedback) branches per neuron; 0 silences the apical path.
    pub n_apical: usize,
    /// Fraction of presynaptic neurons each branch connects to, in (0, 1].
    pub sparsity: f64,
    /// Scaling of the aggregated apical input at the soma.
    pub alpha: f64,
    /// Branch nonlinearity (ReLU in the trained models).
    pub branch_activation: Activation,
}

impl Default for BranchSpec {
    fn default() -> Self {
        BranchSpec {
            n_basal: 8,
            n_apical: 2,
            sparsity: 0.5,
            alpha: 0.2,
            branch_activation: Activation::ReLU,
        }
    }
}

impl BranchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_basal < 1 {
            return Err(Error::Config(format!(
                "n_basal must be >= 1, got {}",
                self.n_basal
            )));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(Error::Config(format!(
                "sparsity must be in (0, 1], got {}",
                self.sparsity
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        match self.branch_activation {
            Activation::ReLU | Activation::Identity => Ok(()),
            other => Err(Error::Config(format!(
                "branch activation must be relu or identity, got {other:?}"
            ))),
        }
    }

    /// Connections per branch row for a given presynaptic width:
    /// `ceil(sparsity * pre)`.
    pub fn fan_in(&self, pre_size: usize) -> usize {
        let k = libm::ceil(self.sparsity * pre_size as f64) as usize;
        k.clamp(1, pre_size)
    }
}

/// Which neuron model the hidden layers use.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NeuronModel {
    /// Dense weights with transpose-symmetric feedback.
    Standard,
    /// Sparse nonlinear basal/apical branches aggregated at the soma.
    /// The output layer stays a standard dense layer.
    Dendritic(BranchSpec),
}

/// Layer widths, neuron model and activation for one network.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkConfig {
    pub input_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_size: usize,
    pub neuron_model: NeuronModel,
    /// Somatic activation for hidden and output layers. `Identity` is only
    /// meant for the linear fixed-point oracles.
    pub hidden_activation: Activation,
    /// Default nudging strength for phases that do not override it.
    pub beta_default: f64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_size < 1 || self.output_size < 1 {
            return Err(Error::Config(format!(
                "input and output sizes must be >= 1, got {} and {}",
                self.input_size, self.output_size
            )));
        }
        if self.hidden_sizes.is_empty() {
            return Err(Error::Config("hidden_sizes must be non-empty".into()));
        }
        if self.hidden_sizes.iter().any(|&h| h < 1) {
            return Err(Error::Config("hidden sizes must be >= 1".into()));
        }
        if !(self.beta_default > 0.0) {
            return Err(Error::Config(format!(
                "beta_default must be > 0, got {}",
                self.beta_default
            )));
        }
        match self.hidden_activation {
            Activation::HardSigmoid | Activation::Tanh | Activation::Identity => {}
            other => {
                return Err(Error::Config(format!(
                    "somatic activation must be hard_sigmoid, tanh or identity, got {other:?}"
                )))
            }
        }
        if let NeuronModel::Dendritic(spec) = &self.neuron_model {
            spec.validate()?;
        }
        Ok(())
    }

    /// All layer widths, input first.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.hidden_sizes.len() + 2);
        v.push(self.input_size);
        v.extend_from_slice(&self.hidden_sizes);
        v.push(self.output_size);
        v
    }

    /// Number of non-input layers (hidden layers plus output).
    pub fn n_layers(&self) -> usize {
        self.hidden_sizes.len() + 1
    }

    /// Width of non-input layer `l` (0-based; the last one is the output).
    pub fn layer_width(&self, l: usize) -> usize {
        if l < self.hidden_sizes.len() {
            self.hidden_sizes[l]
        } else {
            self.output_size
        }
    }

    /// Width of the layer feeding non-input layer `l`.
    pub fn pre_width(&self, l: usize) -> usize {
        if l == 0 {
            self.input_size
        } else {
            self.hidden_sizes[l - 1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn base() -> NetworkConfig {
        NetworkConfig {
            input_size: 10,
            hidden_sizes: vec![16],
            output_size: 4,
            neuron_model: NeuronModel::Standard,
            hidden_activation: Activation::HardSigmoid,
            beta_default: 0.1,
        }
    }

    #[test]
    fn valid_config_passes() {
        base().validate().unwrap();
    }

    #[test]
    fn empty_hidden_rejected() {
        let mut c = base();
        c.hidden_sizes = vec![];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_beta_rejected() {
        let mut c = base();
        c.beta_default = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn relu_soma_rejected() {
        let mut c = base();
        c.hidden_activation = Activation::ReLU;
        assert!(c.validate().is_err());
    }

    #[test]
    fn branch_spec_bounds() {
        let mut s = BranchSpec::default();
        s.validate().unwrap();
        s.sparsity = 0.0;
        assert!(s.validate().is_err());
        s.sparsity = 1.0;
        s.n_basal = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn fan_in_rounds_up() {
        let s = BranchSpec {
            sparsity: 0.5,
            ..BranchSpec::default()
        };
        assert_eq!(s.fan_in(10), 5);
        assert_eq!(s.fan_in(7), 4);
        assert_eq!(s.fan_in(1), 1);
    }

    #[test]
    fn layer_walk() {
        let c = NetworkConfig {
            hidden_sizes: vec![16, 8],
            ..base()
        };
        assert_eq!(c.layer_sizes(), vec![10, 16, 8, 4]);
        assert_eq!(c.n_layers(), 3);
        assert_eq!(c.layer_width(0), 16);
        assert_eq!(c.layer_width(2), 4);
        assert_eq!(c.pre_width(0), 10);
        assert_eq!(c.pre_width(2), 8);
    }
}
