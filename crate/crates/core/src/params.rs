//! Trainable parameters and the tensor/flat views the rest of the crate
//! works through.
//!
//! A `Parameters` value doubles as a gradient container: gradients have the
//! same layer structure, with branch masks mirrored untouched (masks are
//! structure, not parameters).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{NetworkConfig, NeuronModel};
use crate::dendrite::BranchBank;
use crate::linalg::Matrix;

/// Parameters of one non-input layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    /// Dense weights (post, pre) plus a per-soma bias. Hidden layers of the
    /// standard model feed back through the transpose of the layer above's
    /// weights; no separate feedback parameter exists.
    Dense { weights: Matrix, bias: Vec<f64> },
    /// Dendritic hidden layer: basal bank from the layer below, apical bank
    /// from the layer above, per-soma bias.
    Dendritic {
        basal: BranchBank,
        apical: BranchBank,
        bias: Vec<f64>,
    },
}

impl LayerParams {
    pub fn bias(&self) -> &[f64] {
        match self {
            LayerParams::Dense { bias, .. } => bias,
            LayerParams::Dendritic { bias, .. } => bias,
        }
    }

    /// Parameter tensors of this layer (weights then bias; masks excluded).
    pub fn for_each_param_tensor(&self, mut f: impl FnMut(&[f64])) {
        match self {
            LayerParams::Dense { weights, bias } => {
                f(weights.data());
                f(bias);
            }
            LayerParams::Dendritic {
                basal,
                apical,
                bias,
            } => {
                for w in &basal.weights {
                    f(w.data());
                }
                for w in &apical.weights {
                    f(w.data());
                }
                f(bias);
            }
        }
    }

    pub fn for_each_param_tensor_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        match self {
            LayerParams::Dense { weights, bias } => {
                f(weights.data_mut());
                f(bias);
            }
            LayerParams::Dendritic {
                basal,
                apical,
                bias,
            } => {
                for w in &mut basal.weights {
                    f(w.data_mut());
                }
                for w in &mut apical.weights {
                    f(w.data_mut());
                }
                f(bias);
            }
        }
    }
}

/// All layer parameters, input-side first; the last layer is the output and
/// is always dense.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub layers: Vec<LayerParams>,
}

fn uniform_fan_in(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = 1.0 / libm::sqrt(cols as f64);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

fn axpy_slice(a: &mut [f64], b: &[f64], s: f64) {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter_mut().zip(b) {
        *x += s * *y;
    }
}

fn add_scaled_layer_params(a: &mut LayerParams, b: &LayerParams, s: f64) {
    match (a, b) {
        (
            LayerParams::Dense {
                weights: wa,
                bias: ba,
            },
            LayerParams::Dense {
                weights: wb,
                bias: bb,
            },
        ) => {
            wa.axpy(s, wb);
            axpy_slice(ba, bb, s);
        }
        (
            LayerParams::Dendritic {
                basal: basa,
                apical: apa,
                bias: ba,
            },
            LayerParams::Dendritic {
                basal: basb,
                apical: apb,
                bias: bb,
            },
        ) => {
            for (x, y) in basa.weights.iter_mut().zip(&basb.weights) {
                x.axpy(s, y);
            }
            for (x, y) in apa.weights.iter_mut().zip(&apb.weights) {
                x.axpy(s, y);
            }
            axpy_slice(ba, bb, s);
        }
        _ => panic!("parameter structures do not match"),
    }
}

impl Parameters {
    /// Seeded uniform initialization in `±1/sqrt(fan_in)`; biases start at
    /// zero. At this scale the initial output drives sit inside the nudge's
    /// effective range, which the fixed-point trainers need to bootstrap.
    ///
    /// Draw order is fixed (layers in order; within a dendritic layer the
    /// basal bank before the apical bank; masks before weights), so a seed
    /// pins every parameter.
    pub fn init(config: &NetworkConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(config, &mut rng)
    }

    pub fn init_with(config: &NetworkConfig, rng: &mut ChaCha8Rng) -> Self {
        let n = config.n_layers();
        let mut layers = Vec::with_capacity(n);
        for l in 0..n {
            let post = config.layer_width(l);
            let pre = config.pre_width(l);
            let is_output = l == n - 1;
            match (&config.neuron_model, is_output) {
                (NeuronModel::Dendritic(spec), false) => {
                    let basal = BranchBank::random(rng, pre, post, spec.n_basal, spec.sparsity);
                    let next = config.layer_width(l + 1);
                    let apical = if spec.n_apical > 0 {
                        BranchBank::random(rng, next, post, spec.n_apical, spec.sparsity)
                    } else {
                        BranchBank::empty(next, post)
                    };
                    layers.push(LayerParams::Dendritic {
                        basal,
                        apical,
                        bias: alloc::vec![0.0; post],
                    });
                }
                _ => {
                    layers.push(LayerParams::Dense {
                        weights: uniform_fan_in(rng, post, pre),
                        bias: alloc::vec![0.0; post],
                    });
                }
            }
        }
        Parameters { layers }
    }

    /// Same structure with all weights and biases at zero; masks are cloned.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.for_each_param_tensor_mut(|_, t| t.fill(0.0));
        out
    }

    /// Visits every *parameter* tensor (weights and biases, not masks),
    /// in declaration order, with a stable name.
    pub fn for_each_param_tensor(&self, mut f: impl FnMut(&str, &[f64])) {
        for (l, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Dense { weights, bias } => {
                    f(&format!("layer{l}.weights"), weights.data());
                    f(&format!("layer{l}.bias"), bias);
                }
                LayerParams::Dendritic {
                    basal,
                    apical,
                    bias,
                } => {
                    for (k, w) in basal.weights.iter().enumerate() {
                        f(&format!("layer{l}.basal{k}"), w.data());
                    }
                    for (k, w) in apical.weights.iter().enumerate() {
                        f(&format!("layer{l}.apical{k}"), w.data());
                    }
                    f(&format!("layer{l}.bias"), bias);
                }
            }
        }
    }

    pub fn for_each_param_tensor_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                LayerParams::Dense { weights, bias } => {
                    f(&format!("layer{l}.weights"), weights.data_mut());
                    f(&format!("layer{l}.bias"), bias);
                }
                LayerParams::Dendritic {
                    basal,
                    apical,
                    bias,
                } => {
                    for (k, w) in basal.weights.iter_mut().enumerate() {
                        f(&format!("layer{l}.basal{k}"), w.data_mut());
                    }
                    for (k, w) in apical.weights.iter_mut().enumerate() {
                        f(&format!("layer{l}.apical{k}"), w.data_mut());
                    }
                    f(&format!("layer{l}.bias"), bias);
                }
            }
        }
    }

    /// Visits every tensor including branch masks (checkpoint order).
    pub fn for_each_tensor(&self, mut f: impl FnMut(&str, &[f64])) {
        for (l, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Dense { weights, bias } => {
                    f(&format!("layer{l}.weights"), weights.data());
                    f(&format!("layer{l}.bias"), bias);
                }
                LayerParams::Dendritic {
                    basal,
                    apical,
                    bias,
                } => {
                    for (k, w) in basal.weights.iter().enumerate() {
                        f(&format!("layer{l}.basal{k}.w"), w.data());
                    }
                    for (k, m) in basal.masks.iter().enumerate() {
                        f(&format!("layer{l}.basal{k}.mask"), m.data());
                    }
                    for (k, w) in apical.weights.iter().enumerate() {
                        f(&format!("layer{l}.apical{k}.w"), w.data());
                    }
                    for (k, m) in apical.masks.iter().enumerate() {
                        f(&format!("layer{l}.apical{k}.mask"), m.data());
                    }
                    f(&format!("layer{l}.bias"), bias);
                }
            }
        }
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                LayerParams::Dense { weights, bias } => {
                    f(&format!("layer{l}.weights"), weights.data_mut());
                    f(&format!("layer{l}.bias"), bias);
                }
                LayerParams::Dendritic {
                    basal,
                    apical,
                    bias,
                } => {
                    for (k, w) in basal.weights.iter_mut().enumerate() {
                        f(&format!("layer{l}.basal{k}.w"), w.data_mut());
                    }
                    for (k, m) in basal.masks.iter_mut().enumerate() {
                        f(&format!("layer{l}.basal{k}.mask"), m.data_mut());
                    }
                    for (k, w) in apical.weights.iter_mut().enumerate() {
                        f(&format!("layer{l}.apical{k}.w"), w.data_mut());
                    }
                    for (k, m) in apical.masks.iter_mut().enumerate() {
                        f(&format!("layer{l}.apical{k}.mask"), m.data_mut());
                    }
                    f(&format!("layer{l}.bias"), bias);
                }
            }
        }
    }

    /// `self += s * other` over parameter tensors (gradient-style update).
    pub fn add_scaled(&mut self, other: &Parameters, s: f64) {
        debug_assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            add_scaled_layer_params(a, b, s);
        }
    }

    /// `self += s * other`, restricted to the parameter tensors of one layer.
    pub fn add_scaled_layer(&mut self, layer: usize, other: &Parameters, s: f64) {
        add_scaled_layer_params(&mut self.layers[layer], &other.layers[layer], s);
    }

    pub fn scale(&mut self, s: f64) {
        self.for_each_param_tensor_mut(|_, t| {
            for v in t {
                *v *= s;
            }
        });
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_param_tensor(|_, t| {
            if !t.iter().all(|v| v.is_finite()) {
                ok = false;
            }
        });
        ok
    }

    /// Number of true scalar parameters (masked branch entries excluded).
    pub fn num_params(&self) -> usize {
        self.to_flat().len()
    }

    /// Flat view of the true parameters: dense weights and biases in full,
    /// branch weights only at unmasked positions. Declaration order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::Dense { weights, bias } => {
                    out.extend_from_slice(weights.data());
                    out.extend_from_slice(bias);
                }
                LayerParams::Dendritic {
                    basal,
                    apical,
                    bias,
                } => {
                    for bank in [basal, apical] {
                        for (w, m) in bank.weights.iter().zip(&bank.masks) {
                            for (wv, mv) in w.data().iter().zip(m.data()) {
                                if *mv != 0.0 {
                                    out.push(*wv);
                                }
                            }
                        }
                    }
                    out.extend_from_slice(bias);
                }
            }
        }
        out
    }

    /// Inverse of [`Parameters::to_flat`]. Panics on length mismatch.
    pub fn set_from_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for layer in &mut self.layers {
            match layer {
                LayerParams::Dense { weights, bias } => {
                    for v in weights.data_mut() {
                        *v = *it.next().expect("flat too short");
                    }
                    for v in bias {
                        *v = *it.next().expect("flat too short");
                    }
                }
                LayerParams::Dendritic {
                    basal,
                    apical,
                    bias,
                } => {
                    for bank in [&mut *basal, &mut *apical] {
                        for (w, m) in bank.weights.iter_mut().zip(&bank.masks) {
                            for (wv, mv) in w.data_mut().iter_mut().zip(m.data()) {
                                if *mv != 0.0 {
                                    *wv = *it.next().expect("flat too short");
                                }
                            }
                        }
                    }
                    for v in bias {
                        *v = *it.next().expect("flat too short");
                    }
                }
            }
        }
        assert!(it.next().is_none(), "flat too long");
    }

    /// Names of parameter tensors in declaration order.
    pub fn param_tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.for_each_param_tensor(|n, _| names.push(String::from(n)));
        names
    }
}
