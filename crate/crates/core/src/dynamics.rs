//! Discrete synchronous relaxation dynamics for free and nudged phases,
//! the primitive function, and its local parameter gradient.
//!
//! One step updates all non-input layers simultaneously from the previous
//! step's values:
//!
//! - standard hidden layer: `s^l ← σ(W^l s^{l-1} + (W^{l+1})ᵀ s^{l+1} + b^l)`
//! - dendritic hidden layer: `s^l ← σ(basal(s^{l-1}) + α apical(s^{l+1}) + b^l)`
//! - output layer (always dense): `s^out ← σ(W^out s^{last} + b^out [+ β(y − s^out)])`
//!
//! The input layer stays clamped, so its contribution to the first layer is
//! computed once per phase ([`InputDrive`]) and reused across steps.
//!
//! The primitive function `Φ(θ, s)` is the scalar whose state gradient is the
//! pre-activation above and whose parameter gradient
//! ([`Network::local_param_gradient`]) both EP estimators difference:
//! `Φ = Σ_l s^lᵀ·(feedforward drive of layer l) + Σ_l bias^l·s^l`, with the
//! dendritic layers contributing `s^lᵀ(b^l + α a^l)`.

use alloc::vec::Vec;

use crate::activation::Activation;
use crate::config::{NetworkConfig, NeuronModel};
use crate::dendrite::{aggregate_into, BranchBank};
use crate::error::{Error, Result};
use crate::linalg::{dot, matmul_into, matmul_nt_into, matmul_tn_into, Matrix};
use crate::params::{LayerParams, Parameters};
use crate::state::{NetworkState, PhaseResult};

/// Precomputed contribution of the clamped input batch to layer 0.
#[derive(Debug, Clone)]
pub struct InputDrive {
    /// The clamped input batch, (input_size, batch).
    pub input: Matrix,
    /// Layer 0 feedforward drive: `W^0·x` for a dense layer, the aggregated
    /// basal input for a dendritic layer.
    pub static_pre: Matrix,
    /// Raw (pre-nonlinearity) basal branch responses to the input, kept for
    /// gradient chains. `None` for dense layer 0.
    pub basal_raws: Option<Vec<Matrix>>,
}

/// Pre-activations of one synchronous step, plus the raw branch responses
/// the gradient chains need. `None` entries for layer 0 mean "look in the
/// drive" (the input is clamped, so those raws never change).
#[derive(Debug, Clone)]
pub struct LayerPreacts {
    pub pre: Vec<Matrix>,
    pub basal_raws: Vec<Option<Vec<Matrix>>>,
    pub apical_raws: Vec<Option<Vec<Matrix>>>,
}

/// A network: topology plus its current parameters.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetworkConfig,
    pub params: Parameters,
}

impl Network {
    /// Validates the config and wraps existing parameters.
    pub fn new(config: NetworkConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        let net = Network { config, params };
        net.check_param_shapes()?;
        Ok(net)
    }

    /// Fresh seeded initialization.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = Parameters::init(&config, seed);
        Ok(Network { config, params })
    }

    fn check_param_shapes(&self) -> Result<()> {
        let n = self.config.n_layers();
        if self.params.layers.len() != n {
            return Err(Error::Config(alloc::format!(
                "expected {n} parameter layers, got {}",
                self.params.layers.len()
            )));
        }
        for l in 0..n {
            let post = self.config.layer_width(l);
            let pre = self.config.pre_width(l);
            match &self.params.layers[l] {
                LayerParams::Dense { weights, bias } => {
                    if weights.shape() != (post, pre) {
                        return Err(Error::ShapeMismatch {
                            context: "dense layer weights",
                            expected: (post, pre),
                            got: weights.shape(),
                        });
                    }
                    if bias.len() != post {
                        return Err(Error::Config("bias length mismatch".into()));
                    }
                }
                LayerParams::Dendritic { basal, apical, bias } => {
                    if l == n - 1 {
                        return Err(Error::Config(
                            "output layer must be dense, not dendritic".into(),
                        ));
                    }
                    for w in &basal.weights {
                        if w.shape() != (post, pre) {
                            return Err(Error::ShapeMismatch {
                                context: "basal branch weights",
                                expected: (post, pre),
                                got: w.shape(),
                            });
                        }
                    }
                    let next = self.config.layer_width(l + 1);
                    for w in &apical.weights {
                        if w.shape() != (post, next) {
                            return Err(Error::ShapeMismatch {
                                context: "apical branch weights",
                                expected: (post, next),
                                got: w.shape(),
                            });
                        }
                    }
                    if bias.len() != post {
                        return Err(Error::Config("bias length mismatch".into()));
                    }
                }
            }
        }
        Ok(())
    }

    fn branch_activation(&self) -> Activation {
        match &self.config.neuron_model {
            NeuronModel::Dendritic(spec) => spec.branch_activation,
            NeuronModel::Standard => Activation::Identity,
        }
    }

    fn alpha(&self) -> f64 {
        match &self.config.neuron_model {
            NeuronModel::Dendritic(spec) => spec.alpha,
            NeuronModel::Standard => 1.0,
        }
    }

    /// Precomputes the layer-0 drive for a clamped input batch.
    pub fn input_drive(&self, input: &Matrix) -> Result<InputDrive> {
        if input.rows() != self.config.input_size {
            return Err(Error::ShapeMismatch {
                context: "input batch",
                expected: (self.config.input_size, input.cols()),
                got: input.shape(),
            });
        }
        let batch = input.cols();
        let post = self.config.layer_width(0);
        match &self.params.layers[0] {
            LayerParams::Dense { weights, .. } => {
                let mut pre = Matrix::zeros(post, batch);
                matmul_into(weights, input, &mut pre, false);
                Ok(InputDrive {
                    input: input.clone(),
                    static_pre: pre,
                    basal_raws: None,
                })
            }
            LayerParams::Dendritic { basal, .. } => {
                let raws = basal.raws(input);
                let f = self.branch_activation();
                let mut z: Vec<Matrix> = raws.clone();
                for zk in &mut z {
                    for v in zk.data_mut() {
                        *v = f.apply(*v);
                    }
                }
                let mut agg = Matrix::zeros(post, batch);
                aggregate_into(&z, &mut agg);
                Ok(InputDrive {
                    input: input.clone(),
                    static_pre: agg,
                    basal_raws: Some(raws),
                })
            }
        }
    }

    /// Pre-activations for one synchronous step from `state`, with the
    /// output optionally nudged by `beta·(target − s^out)`.
    pub fn preacts(
        &self,
        state: &NetworkState,
        drive: &InputDrive,
        nudge: Option<(&Matrix, f64)>,
    ) -> LayerPreacts {
        let n = self.config.n_layers();
        let batch = state.batch_size();
        let f = self.branch_activation();
        let alpha = self.alpha();
        let mut pre_all = Vec::with_capacity(n);
        let mut basal_raws: Vec<Option<Vec<Matrix>>> = Vec::with_capacity(n);
        let mut apical_raws: Vec<Option<Vec<Matrix>>> = Vec::with_capacity(n);

        for l in 0..n {
            let post = self.config.layer_width(l);
            match &self.params.layers[l] {
                LayerParams::Dense { weights, bias } => {
                    let mut pre = if l == 0 {
                        drive.static_pre.clone()
                    } else {
                        let mut p = Matrix::zeros(post, batch);
                        matmul_into(weights, &state.layers[l - 1], &mut p, false);
                        p
                    };
                    // Transpose-symmetric feedback from the dense layer above.
                    if l + 1 < n {
                        if let LayerParams::Dense { weights: wn, .. } = &self.params.layers[l + 1] {
                            let mut fb = Matrix::zeros(post, batch);
                            matmul_tn_into(wn, &state.layers[l + 1], &mut fb, false);
                            pre.add_assign(&fb);
                        }
                    }
                    pre.add_row_broadcast(bias);
                    if l == n - 1 {
                        if let Some((target, beta)) = nudge {
                            // β(y − s^out), using the previous step's output.
                            let sout = &state.layers[n - 1];
                            debug_assert_eq!(target.shape(), sout.shape());
                            for ((p, &t), &s) in pre
                                .data_mut()
                                .iter_mut()
                                .zip(target.data())
                                .zip(sout.data())
                            {
                                *p += beta * (t - s);
                            }
                        }
                    }
                    pre_all.push(pre);
                    basal_raws.push(None);
                    apical_raws.push(None);
                }
                LayerParams::Dendritic { basal, apical, bias } => {
                    // Basal compartment.
                    let (mut pre, braws) = if l == 0 {
                        (drive.static_pre.clone(), None)
                    } else {
                        let raws = basal.raws(&state.layers[l - 1]);
                        let mut z = raws.clone();
                        for zk in &mut z {
                            for v in zk.data_mut() {
                                *v = f.apply(*v);
                            }
                        }
                        let mut agg = Matrix::zeros(post, batch);
                        aggregate_into(&z, &mut agg);
                        (agg, Some(raws))
                    };
                    // Apical compartment (feedback from the layer above).
                    let araws = apical.raws(&state.layers[l + 1]);
                    if !araws.is_empty() {
                        let mut z = araws.clone();
                        for zk in &mut z {
                            for v in zk.data_mut() {
                                *v = f.apply(*v);
                            }
                        }
                        let mut agg = Matrix::zeros(post, batch);
                        aggregate_into(&z, &mut agg);
                        pre.axpy(alpha, &agg);
                    }
                    pre.add_row_broadcast(bias);
                    pre_all.push(pre);
                    basal_raws.push(braws);
                    apical_raws.push(Some(araws));
                }
            }
        }
        LayerPreacts {
            pre: pre_all,
            basal_raws,
            apical_raws,
        }
    }

    /// Applies the somatic activation to a set of pre-activations.
    pub fn activate(&self, preacts: &LayerPreacts, step_index: usize) -> NetworkState {
        let sigma = self.config.hidden_activation;
        let layers = preacts
            .pre
            .iter()
            .map(|p| {
                let mut s = Matrix::zeros(p.rows(), p.cols());
                sigma.apply_matrix(p, &mut s);
                s
            })
            .collect();
        NetworkState {
            layers,
            step_index,
        }
    }

    pub(crate) fn step_with_drive(
        &self,
        state: &NetworkState,
        drive: &InputDrive,
        nudge: Option<(&Matrix, f64)>,
    ) -> NetworkState {
        let pre = self.preacts(state, drive, nudge);
        self.activate(&pre, state.step_index + 1)
    }

    /// One free step: no teaching signal.
    pub fn step_free(&self, state: &NetworkState, input: &Matrix) -> Result<NetworkState> {
        let drive = self.input_drive(input)?;
        self.check_state_shapes(state, input.cols())?;
        Ok(self.step_with_drive(state, &drive, None))
    }

    /// One nudged step: the output pre-activation gains `beta·(target − s^out)`.
    pub fn step_nudged(
        &self,
        state: &NetworkState,
        input: &Matrix,
        target: &Matrix,
        beta: f64,
    ) -> Result<NetworkState> {
        if beta == 0.0 {
            return Err(Error::ZeroBeta);
        }
        if target.rows() != self.config.output_size || target.cols() != input.cols() {
            return Err(Error::ShapeMismatch {
                context: "nudge target",
                expected: (self.config.output_size, input.cols()),
                got: target.shape(),
            });
        }
        let drive = self.input_drive(input)?;
        self.check_state_shapes(state, input.cols())?;
        Ok(self.step_with_drive(state, &drive, Some((target, beta))))
    }

    fn check_state_shapes(&self, state: &NetworkState, batch: usize) -> Result<()> {
        if state.layers.len() != self.config.n_layers() {
            return Err(Error::Config("state layer count mismatch".into()));
        }
        for (l, m) in state.layers.iter().enumerate() {
            let want = (self.config.layer_width(l), batch);
            if m.shape() != want {
                return Err(Error::ShapeMismatch {
                    context: "state layer",
                    expected: want,
                    got: m.shape(),
                });
            }
        }
        Ok(())
    }

    /// Runs `steps` synchronous updates (free when `beta == 0`, nudged
    /// otherwise), optionally recording every intermediate state.
    pub fn relax(
        &self,
        state0: &NetworkState,
        input: &Matrix,
        target: Option<&Matrix>,
        beta: f64,
        steps: usize,
        record: bool,
    ) -> Result<PhaseResult> {
        let drive = self.input_drive(input)?;
        self.check_state_shapes(state0, input.cols())?;
        self.relax_with_drive(state0, &drive, target, beta, steps, record)
    }

    /// Relaxation with an already-computed input drive (the trainers reuse
    /// one drive across all phases of a batch).
    pub(crate) fn relax_with_drive(
        &self,
        state0: &NetworkState,
        drive: &InputDrive,
        target: Option<&Matrix>,
        beta: f64,
        steps: usize,
        record: bool,
    ) -> Result<PhaseResult> {
        if steps < 1 {
            return Err(Error::Config("relax needs steps >= 1".into()));
        }
        if beta != 0.0 && target.is_none() {
            return Err(Error::Config("nudged relaxation needs a target".into()));
        }
        let nudge = if beta != 0.0 {
            Some((target.unwrap(), beta))
        } else {
            None
        };
        let mut prev = state0.clone();
        let mut trajectory = if record { Some(Vec::with_capacity(steps)) } else { None };
        let mut current = prev.clone();
        for _ in 0..steps {
            current = self.step_with_drive(&prev, drive, nudge);
            if let Some(t) = trajectory.as_mut() {
                t.push(current.clone());
            }
            core::mem::swap(&mut prev, &mut current);
        }
        // After the loop `prev` holds the newest state and `current` the one
        // before it.
        let converged_delta = prev.max_abs_diff(&current);
        Ok(PhaseResult {
            final_state: prev,
            trajectory,
            converged_delta,
        })
    }

    /// Free-phase relaxation from the all-zero state.
    pub fn free_phase(&self, input: &Matrix, steps: usize, record: bool) -> Result<PhaseResult> {
        let state0 = NetworkState::zeros(&self.config, input.cols());
        self.relax(&state0, input, None, 0.0, steps, record)
    }

    /// The primitive function `Φ(θ, s)` at a frozen state, summed over the
    /// batch.
    pub fn primitive(&self, state: &NetworkState, input: &Matrix) -> Result<f64> {
        let drive = self.input_drive(input)?;
        self.check_state_shapes(state, input.cols())?;
        Ok(self.primitive_with_drive(state, &drive))
    }

    pub(crate) fn primitive_with_drive(&self, state: &NetworkState, drive: &InputDrive) -> f64 {
        let n = self.config.n_layers();
        let f = self.branch_activation();
        let alpha = self.alpha();
        let batch = state.batch_size();
        let mut phi = 0.0;
        for l in 0..n {
            let s = &state.layers[l];
            let post = s.rows();
            match &self.params.layers[l] {
                LayerParams::Dense { weights, bias } => {
                    let ff = if l == 0 {
                        drive.static_pre.clone()
                    } else {
                        let mut p = Matrix::zeros(post, batch);
                        matmul_into(weights, &state.layers[l - 1], &mut p, false);
                        p
                    };
                    phi += dot(s.data(), ff.data());
                    for (i, b) in bias.iter().enumerate() {
                        phi += b * s.row(i).iter().sum::<f64>();
                    }
                }
                LayerParams::Dendritic { basal, apical, bias } => {
                    let mut ff = if l == 0 {
                        drive.static_pre.clone()
                    } else {
                        let raws = basal.raws(&state.layers[l - 1]);
                        let mut z = raws;
                        for zk in &mut z {
                            for v in zk.data_mut() {
                                *v = f.apply(*v);
                            }
                        }
                        let mut agg = Matrix::zeros(post, batch);
                        aggregate_into(&z, &mut agg);
                        agg
                    };
                    let araws = apical.raws(&state.layers[l + 1]);
                    if !araws.is_empty() {
                        let mut z = araws;
                        for zk in &mut z {
                            for v in zk.data_mut() {
                                *v = f.apply(*v);
                            }
                        }
                        let mut agg = Matrix::zeros(post, batch);
                        aggregate_into(&z, &mut agg);
                        ff.axpy(alpha, &agg);
                    }
                    phi += dot(s.data(), ff.data());
                    for (i, b) in bias.iter().enumerate() {
                        phi += b * s.row(i).iter().sum::<f64>();
                    }
                }
            }
        }
        phi
    }

    /// `∂Φ/∂θ` at a frozen state, summed over the batch (callers divide by
    /// the batch size when averaging).
    ///
    /// Standard layers: plain Hebbian outer products `s^l·(s^{l-1})ᵀ` and
    /// batch-summed activities for biases. Dendritic layers chain through
    /// the branch nonlinearity's derivative, the fixed mask, the `1/K`
    /// aggregation, and the apical scaling `α`.
    pub fn local_param_gradient(&self, state: &NetworkState, input: &Matrix) -> Result<Parameters> {
        let drive = self.input_drive(input)?;
        self.check_state_shapes(state, input.cols())?;
        Ok(self.local_param_gradient_with_drive(state, &drive))
    }

    pub(crate) fn local_param_gradient_with_drive(
        &self,
        state: &NetworkState,
        drive: &InputDrive,
    ) -> Parameters {
        let n = self.config.n_layers();
        let f = self.branch_activation();
        let alpha = self.alpha();
        let mut grads = self.params.zeros_like();
        for l in 0..n {
            let s_post = &state.layers[l];
            let s_pre = if l == 0 { &drive.input } else { &state.layers[l - 1] };
            match (&self.params.layers[l], &mut grads.layers[l]) {
                (LayerParams::Dense { .. }, LayerParams::Dense { weights: gw, bias: gb }) => {
                    matmul_nt_into(s_post, s_pre, gw, false);
                    for (b, v) in gb.iter_mut().zip(s_post.row_sums()) {
                        *b = v;
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
                    let braws = match (l, &drive.basal_raws) {
                        (0, Some(raws)) => raws.clone(),
                        _ => basal.raws(s_pre),
                    };
                    bank_local_grad(s_post, s_pre, basal, &braws, f, 1.0, gbasal);
                    let s_next = &state.layers[l + 1];
                    if apical.n_branches() > 0 {
                        let araws = apical.raws(s_next);
                        bank_local_grad(s_post, s_next, apical, &araws, f, alpha, gapical);
                    }
                    for (b, v) in gb.iter_mut().zip(s_post.row_sums()) {
                        *b = v;
                    }
                }
                _ => unreachable!("grads mirror params"),
            }
        }
        grads
    }

    /// Class predictions: argmax over output units, one per batch column.
    pub fn predictions(output: &Matrix) -> Vec<usize> {
        let mut out = Vec::with_capacity(output.cols());
        for c in 0..output.cols() {
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for r in 0..output.rows() {
                let v = output.get(r, c);
                if v > best_v {
                    best_v = v;
                    best = r;
                }
            }
            out.push(best);
        }
        out
    }
}

/// `∂Φ/∂(bank weights)`: for branch `k`,
/// `dW_k = (s_post ⊙ (scale/K)·f'(raw_k)) · s_preᵀ ⊙ mask_k`.
fn bank_local_grad(
    s_post: &Matrix,
    s_pre: &Matrix,
    bank: &BranchBank,
    raws: &[Matrix],
    f: Activation,
    scale: f64,
    out: &mut BranchBank,
) {
    let k_count = bank.n_branches();
    if k_count == 0 {
        return;
    }
    let inv_k = scale / k_count as f64;
    for (k, raw) in raws.iter().enumerate() {
        let mut tmp = Matrix::zeros(raw.rows(), raw.cols());
        for ((t, &r), &s) in tmp
            .data_mut()
            .iter_mut()
            .zip(raw.data())
            .zip(s_post.data())
        {
            *t = s * inv_k * f.derivative(r);
        }
        matmul_nt_into(&tmp, s_pre, &mut out.weights[k], false);
        out.weights[k].hadamard_assign(&bank.masks[k]);
    }
}

/// Squared-error loss `½‖y − s^out‖²`, averaged over the batch.
pub fn squared_error_loss(output: &Matrix, target: &Matrix) -> f64 {
    debug_assert_eq!(output.shape(), target.shape());
    let mut acc = 0.0;
    for (&o, &t) in output.data().iter().zip(target.data()) {
        let d = t - o;
        acc += d * d;
    }
    0.5 * acc / output.cols() as f64
}
