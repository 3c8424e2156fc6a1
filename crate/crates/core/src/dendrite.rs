//! Dendritic neuron machinery: sparse nonlinear branches and somatic
//! integration.
//!
//! Each neuron owns `K` branches per compartment (basal for feedforward
//! input, apical for feedback). A branch sees a fixed random subset of the
//! presynaptic layer through a binary mask, applies a linear map and a
//! nonlinearity, and the soma averages the branch responses:
//!
//! ```text
//! z_k  = f((W_k ⊙ M_k) · s_pre)          per-branch response
//! b    = (1/K) Σ_k z_k                   compartment input
//! s    = σ(b + α a)                      somatic combination
//! ```
//!
//! Masks are sampled once at construction and never change; masked weight
//! entries are held at exactly zero for the lifetime of the bank.

use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activation::Activation;
use crate::linalg::{matmul_into, Matrix};

/// A set of per-branch weight matrices plus their fixed binary masks.
///
/// `weights[k]` and `masks[k]` are (post, pre); the effective weight is
/// `weights[k] ⊙ masks[k]`, maintained by keeping masked entries at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchBank {
    pub weights: Vec<Matrix>,
    pub masks: Vec<Matrix>,
}

impl BranchBank {
    pub fn n_branches(&self) -> usize {
        self.weights.len()
    }

    pub fn post_size(&self) -> usize {
        self.weights.first().map_or(0, |w| w.rows())
    }

    pub fn pre_size(&self) -> usize {
        self.weights.first().map_or(0, |w| w.cols())
    }

    /// Samples masks and uniform weights in `±1/sqrt(fan_in)`, where the
    /// branch fan-in is the number of unmasked inputs per row.
    pub fn random(
        rng: &mut ChaCha8Rng,
        pre_size: usize,
        post_size: usize,
        n_branches: usize,
        sparsity: f64,
    ) -> Self {
        let masks = make_masks_with(rng, pre_size, post_size, n_branches, sparsity);
        let fan_in = fan_in_for(pre_size, sparsity);
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        let mut weights = Vec::with_capacity(n_branches);
        for mask in &masks {
            let mut w = Matrix::from_fn(post_size, pre_size, |_, _| {
                rng.random_range(-bound..=bound)
            });
            w.hadamard_assign(mask);
            weights.push(w);
        }
        BranchBank { weights, masks }
    }

    /// Empty bank (used for the absent apical compartment).
    pub fn empty(pre_size: usize, post_size: usize) -> Self {
        let _ = (pre_size, post_size);
        BranchBank {
            weights: Vec::new(),
            masks: Vec::new(),
        }
    }

    /// Linear branch responses before the nonlinearity: `raw_k = W_k · presyn`.
    pub fn raws(&self, presyn: &Matrix) -> Vec<Matrix> {
        let mut out = Vec::with_capacity(self.n_branches());
        for w in &self.weights {
            let mut raw = Matrix::zeros(w.rows(), presyn.cols());
            matmul_into(w, presyn, &mut raw, false);
            out.push(raw);
        }
        out
    }

    /// True when every masked entry is exactly zero.
    pub fn mask_invariant_holds(&self) -> bool {
        self.weights.iter().zip(&self.masks).all(|(w, m)| {
            w.data()
                .iter()
                .zip(m.data())
                .all(|(&wv, &mv)| mv != 0.0 || wv == 0.0)
        })
    }
}

/// Exact per-row connection count for a sparsity level.
pub fn fan_in_for(pre_size: usize, sparsity: f64) -> usize {
    let k = libm::ceil(sparsity * pre_size as f64) as usize;
    k.clamp(1, pre_size)
}

/// Samples one binary mask per branch; every row gets exactly
/// `ceil(sparsity * pre_size)` ones, chosen uniformly without replacement.
pub fn make_masks(
    rng_seed: u64,
    pre_size: usize,
    post_size: usize,
    n_branches: usize,
    sparsity: f64,
) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    make_masks_with(&mut rng, pre_size, post_size, n_branches, sparsity)
}

pub(crate) fn make_masks_with(
    rng: &mut ChaCha8Rng,
    pre_size: usize,
    post_size: usize,
    n_branches: usize,
    sparsity: f64,
) -> Vec<Matrix> {
    assert!(pre_size >= 1 && post_size >= 1);
    assert!(sparsity > 0.0 && sparsity <= 1.0, "sparsity in (0, 1]");
    let fan_in = fan_in_for(pre_size, sparsity);
    let mut masks = Vec::with_capacity(n_branches);
    for _ in 0..n_branches {
        let mut m = Matrix::zeros(post_size, pre_size);
        for i in 0..post_size {
            let picked = rand::seq::index::sample(rng, pre_size, fan_in);
            for j in picked.iter() {
                m.set(i, j, 1.0);
            }
        }
        masks.push(m);
    }
    masks
}

/// Per-branch outputs `z_k = f(W_k^eff · presyn)` for a whole batch.
pub fn branch_outputs(bank: &BranchBank, presyn: &Matrix, activation: Activation) -> Vec<Matrix> {
    let mut raws = bank.raws(presyn);
    for raw in &mut raws {
        for v in raw.data_mut() {
            *v = activation.apply(*v);
        }
    }
    raws
}

/// Mean across branches, per neuron. An empty branch list yields zeros
/// (the absent-apical case), not an error.
pub fn aggregate_into(z: &[Matrix], out: &mut Matrix) {
    out.fill(0.0);
    if z.is_empty() {
        return;
    }
    for zk in z {
        out.add_assign(zk);
    }
    out.scale(1.0 / z.len() as f64);
}

/// Mean across branches, allocating the output.
pub fn aggregate(z: &[Matrix], rows: usize, cols: usize) -> Matrix {
    let mut out = Matrix::zeros(rows, cols);
    aggregate_into(z, &mut out);
    out
}

/// Somatic combination `σ(b + α a)` (no bias term; the network adds its
/// per-soma bias to the pre-activation before calling σ).
pub fn somatic_combine(b: &Matrix, a: &Matrix, alpha: f64, sigma: Activation) -> Matrix {
    let mut pre = b.clone();
    pre.axpy(alpha, a);
    let mut out = Matrix::zeros(pre.rows(), pre.cols());
    sigma.apply_matrix(&pre, &mut out);
    out
}
