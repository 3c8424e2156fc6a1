//! Training loops shared by the EP and BPTT trainers: seeded shuffling,
//! mini-batch assembly, evaluation, and per-epoch metrics.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bptt::{bptt_gradient, BpttHyperparams};
use crate::dynamics::Network;
use crate::ep::{ep_gradient, EPHyperparams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::{sgd_momentum_step, OptimizerState};

/// Wall-clock source injected by the caller; the core never reads time
/// itself. [`NullClock`] pins the seconds column to zero for byte-identical
/// reruns.
pub trait Clock {
    fn now_seconds(&self) -> f64;
}

/// Clock that always reports zero.
pub struct NullClock;

impl Clock for NullClock {
    fn now_seconds(&self) -> f64 {
        0.0
    }
}

/// Per-epoch training metrics. Accuracies are percentages in `[0, 100]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Mean final-step free-phase delta over the epoch's training batches
    /// (for the epoch-0 record: over the evaluation batches).
    pub free_delta: f64,
    /// Mean final-step nudged-phase delta (0 for BPTT, which has no nudge).
    pub nudge_delta: f64,
    pub seconds: f64,
}

/// Borrowed dataset: `images` is (feature_dim, n), one column per sample.
#[derive(Clone, Copy)]
pub struct DatasetView<'a> {
    pub images: &'a Matrix,
    pub labels: &'a [u8],
}

impl<'a> DatasetView<'a> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Gathers the given sample indices into an input batch and a one-hot
    /// target batch.
    pub fn gather(&self, indices: &[usize], classes: usize) -> (Matrix, Matrix) {
        let dim = self.images.rows();
        let k = indices.len();
        let mut input = Matrix::zeros(dim, k);
        for r in 0..dim {
            let src = self.images.row(r);
            let dst = input.row_mut(r);
            for (c, &s) in indices.iter().enumerate() {
                dst[c] = src[s];
            }
        }
        let mut target = Matrix::zeros(classes, k);
        for (c, &s) in indices.iter().enumerate() {
            target.set(self.labels[s] as usize, c, 1.0);
        }
        (input, target)
    }
}

/// One-hot encoding, (classes, batch).
pub fn one_hot(labels: &[u8], classes: usize) -> Matrix {
    let mut m = Matrix::zeros(classes, labels.len());
    for (c, &l) in labels.iter().enumerate() {
        m.set(l as usize, c, 1.0);
    }
    m
}

/// Deterministic sample order for one epoch, keyed by `(seed, epoch)`.
///
/// The shuffle RNG runs on its own ChaCha stream per epoch, so it never
/// collides with the stream that drew the initial parameters.
pub fn epoch_permutation(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Batch size used by accuracy evaluation (independent of the training batch
/// size; per-sample results do not depend on how the batch is chunked).
pub const EVAL_BATCH: usize = 256;

/// Free-phase accuracy of `net` on a dataset, in percent, plus the mean
/// final-step relaxation delta over the evaluation batches.
pub fn evaluate(net: &Network, data: DatasetView<'_>, t_free: usize) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    let n = data.len();
    let classes = net.config.output_size;
    let mut correct = 0usize;
    let mut delta_weighted = 0.0f64;
    let mut start = 0usize;
    while start < n {
        let end = (start + EVAL_BATCH).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (input, _) = data.gather(&indices, classes);
        let phase = net.free_phase(&input, t_free, false)?;
        let preds = Network::predictions(phase.final_state.output());
        for (p, &i) in preds.iter().zip(&indices) {
            if *p == data.labels[i] as usize {
                correct += 1;
            }
        }
        delta_weighted += phase.converged_delta * (end - start) as f64;
        start = end;
    }
    Ok((
        100.0 * correct as f64 / n as f64,
        delta_weighted / n as f64,
    ))
}

struct BatchOutcome {
    free_delta: f64,
    nudge_delta: f64,
}

/// Generic epoch loop: `step` consumes one (input, target) batch, updates
/// the network, and reports its convergence deltas.
fn run_training(
    net: &mut Network,
    train: DatasetView<'_>,
    test: DatasetView<'_>,
    seed: u64,
    epochs: usize,
    batch_size: usize,
    t_free_eval: usize,
    clock: &dyn Clock,
    observer: &mut dyn FnMut(&MetricsRecord),
    mut step: impl FnMut(&mut Network, &Matrix, &Matrix) -> Result<BatchOutcome>,
) -> Result<Vec<MetricsRecord>> {
    if train.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    if train.images.rows() != net.config.input_size {
        return Err(Error::ShapeMismatch {
            context: "training images",
            expected: (net.config.input_size, train.len()),
            got: train.images.shape(),
        });
    }
    let classes = net.config.output_size;
    let mut records = Vec::with_capacity(epochs + 1);

    // Epoch 0: accuracies of the freshly initialized network.
    let t0 = clock.now_seconds();
    let (train_acc, _) = evaluate(net, train, t_free_eval)?;
    let (test_acc, eval_delta) = evaluate(net, test, t_free_eval)?;
    let first = MetricsRecord {
        epoch: 0,
        train_accuracy: train_acc,
        test_accuracy: test_acc,
        free_delta: eval_delta,
        nudge_delta: 0.0,
        seconds: clock.now_seconds() - t0,
    };
    observer(&first);
    records.push(first);

    let n = train.len();
    for epoch in 0..epochs {
        let t_epoch = clock.now_seconds();
        let order = epoch_permutation(seed, epoch, n);
        let mut free_sum = 0.0;
        let mut nudge_sum = 0.0;
        let mut batches = 0usize;
        let mut start = 0usize;
        while start < n {
            let end = (start + batch_size).min(n);
            let (input, target) = train.gather(&order[start..end], classes);
            let outcome = step(net, &input, &target).map_err(|e| match e {
                Error::Divergence { phase, .. } => Error::Divergence {
                    phase,
                    epoch: epoch + 1,
                    batch: batches,
                },
                other => other,
            })?;
            free_sum += outcome.free_delta;
            nudge_sum += outcome.nudge_delta;
            batches += 1;
            start = end;
        }
        let (train_acc, _) = evaluate(net, train, t_free_eval)?;
        let (test_acc, _) = evaluate(net, test, t_free_eval)?;
        let record = MetricsRecord {
            epoch: epoch + 1,
            train_accuracy: train_acc,
            test_accuracy: test_acc,
            free_delta: free_sum / batches as f64,
            nudge_delta: nudge_sum / batches as f64,
            seconds: clock.now_seconds() - t_epoch,
        };
        observer(&record);
        records.push(record);
    }
    Ok(records)
}

/// EP training: shuffled mini-batches, the configured estimator, SGD with
/// momentum and per-layer rates; train/test accuracy after every epoch.
pub fn train_ep(
    net: &mut Network,
    train: DatasetView<'_>,
    test: DatasetView<'_>,
    hp: &EPHyperparams,
    seed: u64,
    clock: &dyn Clock,
    observer: &mut dyn FnMut(&MetricsRecord),
) -> Result<Vec<MetricsRecord>> {
    hp.validate(net.config.n_layers())?;
    let mut opt = OptimizerState::new(&net.params);
    let (beta, t_free, t_nudge, estimator) = (hp.beta, hp.t_free, hp.t_nudge, hp.estimator);
    let (lr, momentum) = (hp.lr_per_layer.clone(), hp.momentum);
    run_training(
        net,
        train,
        test,
        seed,
        hp.epochs,
        hp.batch_size,
        t_free,
        clock,
        observer,
        move |net, input, target| {
            let (grads, diag) = ep_gradient(net, input, target, beta, t_free, t_nudge, estimator)?;
            sgd_momentum_step(&mut net.params, &grads, &mut opt, &lr, momentum)?;
            let nudge_delta = match estimator {
                crate::ep::Estimator::Symmetric => {
                    0.5 * (diag.nudge_pos_delta + diag.nudge_neg_delta)
                }
                crate::ep::Estimator::TwoPhase => diag.nudge_pos_delta,
            };
            Ok(BatchOutcome {
                free_delta: diag.free_delta,
                nudge_delta,
            })
        },
    )
}

/// BPTT training on the identical free-phase dynamics.
pub fn train_bptt(
    net: &mut Network,
    train: DatasetView<'_>,
    test: DatasetView<'_>,
    hp: &BpttHyperparams,
    seed: u64,
    clock: &dyn Clock,
    observer: &mut dyn FnMut(&MetricsRecord),
) -> Result<Vec<MetricsRecord>> {
    hp.validate(net.config.n_layers())?;
    let mut opt = OptimizerState::new(&net.params);
    let (t_free, k_back) = (hp.t_free, hp.k_back);
    let (lr, momentum) = (hp.lr_per_layer.clone(), hp.momentum);
    run_training(
        net,
        train,
        test,
        seed,
        hp.epochs,
        hp.batch_size,
        t_free,
        clock,
        observer,
        move |net, input, target| {
            let (grads, info) = bptt_gradient(net, input, target, t_free, k_back)?;
            sgd_momentum_step(&mut net.params, &grads, &mut opt, &lr, momentum)?;
            Ok(BatchOutcome {
                free_delta: info.free_delta,
                nudge_delta: 0.0,
            })
        },
    )
}
