//! SGD with momentum and per-layer learning rates.

use alloc::format;

use crate::error::{Error, Result};
use crate::params::Parameters;

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub velocity: Parameters,
}

impl OptimizerState {
    pub fn new(params: &Parameters) -> Self {
        OptimizerState {
            velocity: params.zeros_like(),
        }
    }
}

/// `v ← momentum·v + g;  θ ← θ − lr(layer)·v`.
///
/// `lr_per_layer[l]` applies to every parameter tensor of layer `l`
/// (dendritic extras — apical banks and biases — inherit the rate of their
/// layer's basal weights).
pub fn sgd_momentum_step(
    params: &mut Parameters,
    grads: &Parameters,
    opt: &mut OptimizerState,
    lr_per_layer: &[f64],
    momentum: f64,
) -> Result<()> {
    let n = params.layers.len();
    if lr_per_layer.len() != n {
        return Err(Error::Config(format!(
            "need one learning rate per layer ({n}), got {}",
            lr_per_layer.len()
        )));
    }
    opt.velocity.scale(momentum);
    opt.velocity.add_scaled(grads, 1.0);
    for (l, &lr) in lr_per_layer.iter().enumerate() {
        params.add_scaled_layer(l, &opt.velocity, -lr);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::config::{NetworkConfig, NeuronModel};
    use alloc::vec;

    fn params() -> Parameters {
        let config = NetworkConfig {
            input_size: 2,
            hidden_sizes: vec![3],
            output_size: 2,
            neuron_model: NeuronModel::Standard,
            hidden_activation: Activation::HardSigmoid,
            beta_default: 0.1,
        };
        Parameters::init(&config, 0)
    }

    #[test]
    fn plain_sgd_step() {
        let mut p = params();
        let before = p.to_flat();
        let mut g = p.zeros_like();
        g.for_each_param_tensor_mut(|_, t| t.fill(0.5));
        let mut opt = OptimizerState::new(&p);
        sgd_momentum_step(&mut p, &g, &mut opt, &[1.0, 1.0], 0.0).unwrap();
        for (a, b) in p.to_flat().iter().zip(&before) {
            assert!((a - (b - 0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = params();
        let before = p.clone();
        let g = p.zeros_like();
        let mut opt = OptimizerState::new(&p);
        for _ in 0..5 {
            sgd_momentum_step(&mut p, &g, &mut opt, &[0.3, 0.7], 0.9).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn momentum_accumulates() {
        // Two steps with constant gradient g: total update lr·g·(1 + 1.9).
        let mut p = params();
        let before = p.to_flat();
        let mut g = p.zeros_like();
        g.for_each_param_tensor_mut(|_, t| t.fill(1.0));
        let mut opt = OptimizerState::new(&p);
        let lr = 0.1;
        sgd_momentum_step(&mut p, &g, &mut opt, &[lr, lr], 0.9).unwrap();
        sgd_momentum_step(&mut p, &g, &mut opt, &[lr, lr], 0.9).unwrap();
        for (a, b) in p.to_flat().iter().zip(&before) {
            assert!((a - (b - lr * 2.9)).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn per_layer_rates_apply_to_their_layer() {
        let mut p = params();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.for_each_param_tensor_mut(|_, t| t.fill(1.0));
        let mut opt = OptimizerState::new(&p);
        sgd_momentum_step(&mut p, &g, &mut opt, &[0.0, 1.0], 0.0).unwrap();
        // Layer 0 untouched, layer 1 moved.
        let (b0, b1) = (&before.layers[0], &before.layers[1]);
        assert_eq!(&p.layers[0], b0);
        assert_ne!(&p.layers[1], b1);
    }

    #[test]
    fn wrong_lr_count_is_config_error() {
        let mut p = params();
        let g = p.zeros_like();
        let mut opt = OptimizerState::new(&p);
        assert!(matches!(
            sgd_momentum_step(&mut p, &g, &mut opt, &[0.1], 0.9),
            Err(Error::Config(_))
        ));
    }
}
