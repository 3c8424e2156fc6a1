//! Backprop through time over the unrolled free phase.
//!
//! The free dynamics are unrolled for `t_free` steps from the zero state,
//! the squared-error loss is taken at the final state only, and adjoints are
//! accumulated back through the last `k_back` recorded steps (truncated
//! BPTT; states older than the window are treated as constants).
//!
//! The reverse pass is hand-derived from the synchronous update
//! `s_{t+1} = σ(u(s_t))`: with `γ^l = σ'(u^l_t) ⊙ λ^l_{t+1}`, every edge of
//! `u` contributes its transpose to the previous step's adjoint and its
//! parameter-side factor to the gradient. Because the input is clamped, the
//! layer-0 outer products against the input are deferred: the per-step
//! factors are summed over the window first and a single outer product
//! against the input finishes them.

use alloc::format;
use alloc::vec::Vec;

use crate::activation::Activation;
use crate::config::NeuronModel;
use crate::dynamics::{squared_error_loss, InputDrive, LayerPreacts, Network};
use crate::error::{Error, Result};
use crate::linalg::{matmul_into, matmul_nt_into, matmul_tn_into, Matrix};
use crate::params::{LayerParams, Parameters};
use crate::state::NetworkState;

/// BPTT training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BpttHyperparams {
    pub t_free: usize,
    /// Backward window; `k_back == t_free` is the full unroll.
    pub k_back: usize,
    pub lr_per_layer: Vec<f64>,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl BpttHyperparams {
    pub fn validate(&self, n_layers: usize) -> Result<()> {
        if self.k_back < 1 || self.k_back > self.t_free {
            return Err(Error::Config(format!(
                "need 1 <= k_back <= t_free, got k_back={} t_free={}",
                self.k_back, self.t_free
            )));
        }
        if self.lr_per_layer.len() != n_layers {
            return Err(Error::Config(format!(
                "need {n_layers} learning rates, got {}",
                self.lr_per_layer.len()
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One recorded step: the state the step was computed from, and the
/// pre-activations (plus raw branch responses) it produced.
#[derive(Debug, Clone)]
pub struct TapeEntry {
    pub state_before: NetworkState,
    pub preacts: LayerPreacts,
}

/// Recorded tail of a free phase.
#[derive(Debug, Clone)]
pub struct UnrollTape {
    pub entries: Vec<TapeEntry>,
    pub final_state: NetworkState,
    pub converged_delta: f64,
}

/// Statistics reported alongside a BPTT gradient.
#[derive(Debug, Clone, Copy)]
pub struct BpttInfo {
    pub loss: f64,
    pub free_delta: f64,
}

/// Runs the free phase and records the last `k_back` steps.
pub fn record_free_phase(
    net: &Network,
    drive: &InputDrive,
    t_free: usize,
    k_back: usize,
) -> UnrollTape {
    let batch = drive.input.cols();
    let mut state = NetworkState::zeros(&net.config, batch);
    let mut entries = Vec::with_capacity(k_back);
    let mut last_delta = 0.0;
    for t in 0..t_free {
        let preacts = net.preacts(&state, drive, None);
        let next = net.activate(&preacts, t + 1);
        last_delta = next.max_abs_diff(&state);
        if t >= t_free - k_back {
            entries.push(TapeEntry {
                state_before: state,
                preacts,
            });
            state = next;
        } else {
            state = next;
        }
    }
    UnrollTape {
        entries,
        final_state: state,
        converged_delta: last_delta,
    }
}

/// Batch-averaged gradient of the fixed-point loss `½‖y − s^out_T‖²` through
/// the unrolled free phase. Parameters are read-only; gradients are returned,
/// never applied.
pub fn bptt_gradient(
    net: &Network,
    input: &Matrix,
    target: &Matrix,
    t_free: usize,
    k_back: usize,
) -> Result<(Parameters, BpttInfo)> {
    if k_back < 1 || k_back > t_free {
        return Err(Error::Config(format!(
            "need 1 <= k_back <= t_free, got k_back={k_back} t_free={t_free}"
        )));
    }
    if target.rows() != net.config.output_size || target.cols() != input.cols() {
        return Err(Error::ShapeMismatch {
            context: "bptt target",
            expected: (net.config.output_size, input.cols()),
            got: target.shape(),
        });
    }
    let drive = net.input_drive(input)?;
    let tape = record_free_phase(net, &drive, t_free, k_back);
    if !tape.final_state.all_finite() {
        return Err(Error::Divergence {
            phase: "free",
            epoch: 0,
            batch: 0,
        });
    }
    let loss = squared_error_loss(tape.final_state.output(), target);
    let grads = backward(net, &drive, &tape, target)?;
    Ok((
        grads,
        BpttInfo {
            loss,
            free_delta: tape.converged_delta,
        },
    ))
}

fn backward(
    net: &Network,
    drive: &InputDrive,
    tape: &UnrollTape,
    target: &Matrix,
) -> Result<Parameters> {
    let n = net.config.n_layers();
    let batch = drive.input.cols();
    let (branch_act, alpha) = match &net.config.neuron_model {
        NeuronModel::Dendritic(spec) => (spec.branch_activation, spec.alpha),
        NeuronModel::Standard => (Activation::Identity, 1.0),
    };
    let mut grads = net.params.zeros_like();

    // Adjoints with respect to the *next* step's state; seeded by the loss.
    let mut lambda: Vec<Matrix> = (0..n)
        .map(|l| Matrix::zeros(net.config.layer_width(l), batch))
        .collect();
    {
        let out = tape.final_state.output();
        let lam_out = &mut lambda[n - 1];
        for ((lv, &o), &t) in lam_out
            .data_mut()
            .iter_mut()
            .zip(out.data())
            .zip(target.data())
        {
            *lv = o - t;
        }
    }

    // Deferred layer-0 factors: the input never changes, so sum the per-step
    // left factors and take one outer product at the end.
    let w0 = net.config.layer_width(0);
    let mut gamma0_sum = Matrix::zeros(w0, batch);
    let mut basal0_sums: Vec<Matrix> = match &net.params.layers[0] {
        LayerParams::Dendritic { basal, .. } => (0..basal.n_branches())
            .map(|_| Matrix::zeros(w0, batch))
            .collect(),
        _ => Vec::new(),
    };

    let mut gamma: Vec<Matrix> = (0..n)
        .map(|l| Matrix::zeros(net.config.layer_width(l), batch))
        .collect();

    for entry in tape.entries.iter().rev() {
        // γ^l = σ'(u^l) ⊙ λ^l for every layer, from this step's pre-activations.
        let sigma = net.config.hidden_activation;
        for l in 0..n {
            let pre = &entry.preacts.pre[l];
            let g = &mut gamma[l];
            for ((gv, &p), &lv) in g
                .data_mut()
                .iter_mut()
                .zip(pre.data())
                .zip(lambda[l].data())
            {
                *gv = sigma.derivative(p) * lv;
            }
        }
        let mut lambda_new: Vec<Matrix> = (0..n)
            .map(|l| Matrix::zeros(net.config.layer_width(l), batch))
            .collect();

        for l in 0..n {
            let g = &gamma[l];
            match (&net.params.layers[l], &mut grads.layers[l]) {
                (LayerParams::Dense { weights, .. }, LayerParams::Dense { weights: gw, bias: gb }) => {
                    if l == 0 {
                        gamma0_sum.add_assign(g);
                    } else {
                        matmul_nt_into(g, &entry.state_before.layers[l - 1], gw, true);
                        for (b, v) in gb.iter_mut().zip(g.row_sums()) {
                            *b += v;
                        }
                        matmul_tn_into(weights, g, &mut lambda_new[l - 1], true);
                        // W^l is also the transpose-feedback edge into the
                        // dense hidden layer below (standard model); that
                        // usage contributes to dW^l via the lower layer's γ
                        // and sends an adjoint back up to s^l.
                        if let LayerParams::Dense { .. } = &net.params.layers[l - 1] {
                            let g_below = &gamma[l - 1];
                            matmul_nt_into(&entry.state_before.layers[l], g_below, gw, true);
                            matmul_into(weights, g_below, &mut lambda_new[l], true);
                        }
                    }
                }
                (
                    LayerParams::Dendritic { basal, apical, .. },
                    LayerParams::Dendritic {
                        basal: gbasal,
                        apical: gapical,
                        bias: gb,
                    },
                ) => {
                    if l == 0 {
                        gamma0_sum.add_assign(g);
                    } else {
                        for (b, v) in gb.iter_mut().zip(g.row_sums()) {
                            *b += v;
                        }
                    }
                    // Basal chain: t_k = γ ⊙ (1/K) f'(raw_k).
                    let k_b = basal.n_branches();
                    let inv_kb = 1.0 / k_b as f64;
                    let raws = match (l, &entry.preacts.basal_raws[l], &drive.basal_raws) {
                        (_, Some(r), _) => r,
                        (0, None, Some(r)) => r,
                        _ => unreachable!("dendritic layer must have basal raws"),
                    };
                    for k in 0..k_b {
                        let raw = &raws[k];
                        let mut t = Matrix::zeros(g.rows(), batch);
                        for ((tv, &gv), &rv) in t
                            .data_mut()
                            .iter_mut()
                            .zip(g.data())
                            .zip(raw.data())
                        {
                            *tv = gv * inv_kb * branch_act.derivative(rv);
                        }
                        if l == 0 {
                            basal0_sums[k].add_assign(&t);
                        } else {
                            matmul_nt_into(&t, &entry.state_before.layers[l - 1], &mut gbasal.weights[k], true);
                            matmul_tn_into(&basal.weights[k], &t, &mut lambda_new[l - 1], true);
                        }
                    }
                    // Apical chain: t_k = γ ⊙ (α/K) f'(raw_k), feedback from l+1.
                    let k_a = apical.n_branches();
                    if k_a > 0 {
                        let inv_ka = alpha / k_a as f64;
                        let araws = entry.preacts.apical_raws[l]
                            .as_ref()
                            .expect("dendritic layer records apical raws");
                        for k in 0..k_a {
                            let raw = &araws[k];
                            let mut t = Matrix::zeros(g.rows(), batch);
                            for ((tv, &gv), &rv) in t
                                .data_mut()
                                .iter_mut()
                                .zip(g.data())
                                .zip(raw.data())
                            {
                                *tv = gv * inv_ka * branch_act.derivative(rv);
                            }
                            matmul_nt_into(&t, &entry.state_before.layers[l + 1], &mut gapical.weights[k], true);
                            matmul_tn_into(&apical.weights[k], &t, &mut lambda_new[l + 1], true);
                        }
                    }
                }
                _ => unreachable!("grads mirror params"),
            }
        }
        lambda = lambda_new;
    }

    // Finish the deferred layer-0 products against the clamped input.
    match (&net.params.layers[0], &mut grads.layers[0]) {
        (LayerParams::Dense { .. }, LayerParams::Dense { weights: gw, bias: gb }) => {
            matmul_nt_into(&gamma0_sum, &drive.input, gw, true);
            for (b, v) in gb.iter_mut().zip(gamma0_sum.row_sums()) {
                *b += v;
            }
        }
        (LayerParams::Dendritic { .. }, LayerParams::Dendritic { basal: gbasal, bias: gb, .. }) => {
            for (k, tsum) in basal0_sums.iter().enumerate() {
                matmul_nt_into(tsum, &drive.input, &mut gbasal.weights[k], true);
            }
            for (b, v) in gb.iter_mut().zip(gamma0_sum.row_sums()) {
                *b += v;
            }
        }
        _ => unreachable!(),
    }

    // Project branch gradients onto the fixed masks and average over the batch.
    for (l, layer) in grads.layers.iter_mut().enumerate() {
        if let (
            LayerParams::Dendritic {
                basal: gb,
                apical: ga,
                ..
            },
            LayerParams::Dendritic { basal, apical, .. },
        ) = (layer, &net.params.layers[l])
        {
            for (w, m) in gb.weights.iter_mut().zip(&basal.masks) {
                w.hadamard_assign(m);
            }
            for (w, m) in ga.weights.iter_mut().zip(&apical.masks) {
                w.hadamard_assign(m);
            }
        }
    }
    grads.scale(1.0 / batch as f64);
    if !grads.all_finite() {
        return Err(Error::Divergence {
            phase: "backward",
            epoch: 0,
            batch: 0,
        });
    }
    Ok(grads)
}
