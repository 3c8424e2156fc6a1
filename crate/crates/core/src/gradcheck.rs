//! Independent gradient oracles and comparison reports.
//!
//! Nothing here shares code with the gradient paths it checks: finite
//! differences probe whatever scalar function they are handed, and the
//! linear-network oracle solves its fixed points with Gaussian elimination
//! and gets the exact loss gradient from the implicit function theorem.
//! All oracles run in double precision.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::activation::Activation;
use crate::config::NeuronModel;
use crate::dynamics::Network;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::params::{LayerParams, Parameters};
use crate::state::NetworkState;

/// Central finite differences of `loss` with respect to every true
/// parameter (masked branch entries are structure, not parameters, and are
/// skipped).
pub fn finite_diff(
    params: &Parameters,
    step: f64,
    mut loss: impl FnMut(&Parameters) -> Result<f64>,
) -> Result<Parameters> {
    assert!(step > 0.0, "finite-diff step must be positive");
    let base = params.to_flat();
    let mut x = base.clone();
    let mut probe = params.clone();
    let mut grad_flat = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        x[i] = base[i] + step;
        probe.set_from_flat(&x);
        let lp = loss(&probe)?;
        x[i] = base[i] - step;
        probe.set_from_flat(&x);
        let lm = loss(&probe)?;
        x[i] = base[i];
        if !lp.is_finite() || !lm.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        grad_flat.push((lp - lm) / (2.0 * step));
    }
    let mut g = params.zeros_like();
    g.set_from_flat(&grad_flat);
    Ok(g)
}

/// Exact fixed points and loss gradient for a linear (identity-activation)
/// standard network.
#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    pub s0: NetworkState,
    pub s_plus: NetworkState,
    pub s_minus: NetworkState,
    /// Analytic `dL/dθ` of the squared-error fixed-point loss, batch mean.
    pub loss_gradient: Parameters,
    /// `‖s⁰ − (A s⁰ + c)‖∞` over the batch: how exactly the free fixed
    /// point satisfies its own equation.
    pub residual: f64,
    pub spectral_radius: f64,
}

struct LinearSystem {
    offsets: Vec<usize>,
    total: usize,
    coupling: Matrix,
}

fn assemble(net: &Network) -> Result<LinearSystem> {
    match (&net.config.neuron_model, net.config.hidden_activation) {
        (NeuronModel::Standard, Activation::Identity) => {}
        _ => {
            return Err(Error::Config(
                "quadratic oracle needs a standard network with identity activation".into(),
            ))
        }
    }
    let n = net.config.n_layers();
    let mut offsets = Vec::with_capacity(n);
    let mut total = 0usize;
    for l in 0..n {
        offsets.push(total);
        total += net.config.layer_width(l);
    }
    let mut coupling = Matrix::zeros(total, total);
    for l in 0..n {
        if let LayerParams::Dense { weights, .. } = &net.params.layers[l] {
            if l >= 1 {
                // Feedforward block into layer l, feedback block into l-1.
                for i in 0..weights.rows() {
                    for j in 0..weights.cols() {
                        let w = weights.get(i, j);
                        coupling.set(offsets[l] + i, offsets[l - 1] + j, w);
                        coupling.set(offsets[l - 1] + j, offsets[l] + i, w);
                    }
                }
            }
        }
    }
    Ok(LinearSystem {
        offsets,
        total,
        coupling,
    })
}

/// Solves the linear fixed points `s = A s + c (± β nudge)` exactly and
/// returns the analytic loss gradient via the implicit function theorem.
///
/// `beta == 0` degenerates both nudged solutions to the free one.
pub fn quadratic_oracle(
    net: &Network,
    input: &Matrix,
    target: &Matrix,
    beta: f64,
) -> Result<QuadraticOracle> {
    let sys = assemble(net)?;
    let radius = linalg::spectral_radius_estimate(&sys.coupling, 500);
    if radius >= 1.0 - 1e-9 {
        return Err(Error::NonContractive {
            spectral_radius_estimate: radius,
        });
    }
    let n = net.config.n_layers();
    let batch = input.cols();
    let out_w = net.config.output_size;
    let out_off = sys.offsets[n - 1];

    let mut s0 = NetworkState::zeros(&net.config, batch);
    let mut s_plus = NetworkState::zeros(&net.config, batch);
    let mut s_minus = NetworkState::zeros(&net.config, batch);
    let mut grads = net.params.zeros_like();
    let mut residual = 0.0f64;

    // (I - A) and its beta-shifted variants.
    let mut m_free = Matrix::zeros(sys.total, sys.total);
    for i in 0..sys.total {
        for j in 0..sys.total {
            let v = if i == j { 1.0 } else { 0.0 } - sys.coupling.get(i, j);
            m_free.set(i, j, v);
        }
    }
    let mut m_plus = m_free.clone();
    let mut m_minus = m_free.clone();
    for i in 0..out_w {
        let d = out_off + i;
        m_plus.set(d, d, m_plus.get(d, d) + beta);
        m_minus.set(d, d, m_minus.get(d, d) - beta);
    }
    let m_free_t = m_free.transpose();

    for col in 0..batch {
        // Constant drive: bias everywhere plus W^0·x into layer 0.
        let mut c = vec![0.0; sys.total];
        for l in 0..n {
            if let LayerParams::Dense { weights, bias } = &net.params.layers[l] {
                for i in 0..bias.len() {
                    c[sys.offsets[l] + i] = bias[i];
                }
                if l == 0 {
                    for i in 0..weights.rows() {
                        let mut acc = 0.0;
                        for j in 0..weights.cols() {
                            acc += weights.get(i, j) * input.get(j, col);
                        }
                        c[sys.offsets[0] + i] += acc;
                    }
                }
            }
        }
        let s_free =
            linalg::solve(&m_free, &c).ok_or(Error::Config("singular free system".into()))?;

        // Residual of the fixed-point equation.
        for i in 0..sys.total {
            let mut acc = c[i];
            for j in 0..sys.total {
                acc += sys.coupling.get(i, j) * s_free[j];
            }
            let r = libm::fabs(s_free[i] - acc);
            if r > residual {
                residual = r;
            }
        }

        let mut rhs_plus = c.clone();
        let mut rhs_minus = c.clone();
        for i in 0..out_w {
            rhs_plus[out_off + i] += beta * target.get(i, col);
            rhs_minus[out_off + i] -= beta * target.get(i, col);
        }
        let sp = linalg::solve(&m_plus, &rhs_plus)
            .ok_or(Error::Config("singular +beta system".into()))?;
        let sm = linalg::solve(&m_minus, &rhs_minus)
            .ok_or(Error::Config("singular -beta system".into()))?;

        for l in 0..n {
            let w = net.config.layer_width(l);
            for i in 0..w {
                s0.layers[l].set(i, col, s_free[sys.offsets[l] + i]);
                s_plus.layers[l].set(i, col, sp[sys.offsets[l] + i]);
                s_minus.layers[l].set(i, col, sm[sys.offsets[l] + i]);
            }
        }

        // Adjoint solve (I - A)ᵀ q = ∂ℓ/∂s, loss gradient by the implicit
        // function theorem: dL/dθ = qᵀ ∂u/∂θ.
        let mut dl = vec![0.0; sys.total];
        for i in 0..out_w {
            dl[out_off + i] = s_free[out_off + i] - target.get(i, col);
        }
        let q = linalg::solve(&m_free_t, &dl)
            .ok_or(Error::Config("singular adjoint system".into()))?;

        for l in 0..n {
            if let LayerParams::Dense {
                weights: gw,
                bias: gb,
            } = &mut grads.layers[l]
            {
                let post = gw.rows();
                let pre = gw.cols();
                for i in 0..post {
                    gb[i] += q[sys.offsets[l] + i];
                    for j in 0..pre {
                        let s_pre_j = if l == 0 {
                            input.get(j, col)
                        } else {
                            s_free[sys.offsets[l - 1] + j]
                        };
                        let mut dv = q[sys.offsets[l] + i] * s_pre_j;
                        if l >= 1 {
                            // W^l also couples layer l-1's update to s^l.
                            dv += q[sys.offsets[l - 1] + j] * s_free[sys.offsets[l] + i];
                        }
                        gw.set(i, j, gw.get(i, j) + dv);
                    }
                }
            }
        }
    }
    grads.scale(1.0 / batch as f64);
    Ok(QuadraticOracle {
        s0,
        s_plus,
        s_minus,
        loss_gradient: grads,
        residual,
        spectral_radius: radius,
    })
}

/// Per-tensor comparison of two gradients.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TensorComparison {
    pub name: String,
    pub cosine: f64,
    /// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞)`; 0 when both tensors are zero.
    pub rel_err: f64,
    pub norm_a: f64,
    pub norm_b: f64,
}

/// Comparison report between two gradient structures.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradReport {
    pub description: String,
    pub beta: Option<f64>,
    pub overall_cosine: f64,
    pub overall_rel_err: f64,
    pub tensors: Vec<TensorComparison>,
}

fn cosine_of(a: &[f64], b: &[f64]) -> f64 {
    let na = linalg::norm(a);
    let nb = linalg::norm(b);
    if na == 0.0 && nb == 0.0 {
        return 1.0;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (linalg::dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

fn rel_err_of(a: &[f64], b: &[f64]) -> f64 {
    let mut max_diff = 0.0f64;
    let mut max_mag = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        max_diff = max_diff.max(libm::fabs(x - y));
        max_mag = max_mag.max(libm::fabs(x)).max(libm::fabs(y));
    }
    if max_mag == 0.0 {
        0.0
    } else {
        max_diff / max_mag
    }
}

/// Compares two gradients of identical structure.
pub fn compare(a: &Parameters, b: &Parameters, description: &str, beta: Option<f64>) -> Result<GradReport> {
    let names = a.param_tensor_names();
    let mut ta: Vec<Vec<f64>> = Vec::new();
    let mut tb: Vec<Vec<f64>> = Vec::new();
    a.for_each_param_tensor(|_, t| ta.push(t.to_vec()));
    b.for_each_param_tensor(|_, t| tb.push(t.to_vec()));
    if ta.len() != tb.len() || ta.iter().zip(&tb).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::Config("gradient structures do not match".into()));
    }
    let tensors: Vec<TensorComparison> = names
        .into_iter()
        .zip(ta.iter().zip(&tb))
        .map(|(name, (x, y))| TensorComparison {
            name,
            cosine: cosine_of(x, y),
            rel_err: rel_err_of(x, y),
            norm_a: linalg::norm(x),
            norm_b: linalg::norm(y),
        })
        .collect();
    let fa = a.to_flat();
    let fb = b.to_flat();
    Ok(GradReport {
        description: String::from(description),
        beta,
        overall_cosine: cosine_of(&fa, &fb),
        overall_rel_err: rel_err_of(&fa, &fb),
        tensors,
    })
}

/// Least-squares slope of `ln y` against `ln x`; used to read off estimator
/// bias orders from a beta sweep.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        let lx = libm::log(x);
        let ly = libm::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NetworkConfig;
    use crate::ep::{ep_estimate_at, Estimator};
    use alloc::vec;

    fn linear_net(scale: f64) -> (Network, Matrix, Matrix) {
        let config = NetworkConfig {
            input_size: 2,
            hidden_sizes: vec![3],
            output_size: 2,
            neuron_model: NeuronModel::Standard,
            hidden_activation: Activation::Identity,
            beta_default: 0.1,
        };
        let mut net = Network::init(config, 12).unwrap();
        net.params.scale(scale);
        let input = Matrix::from_vec(2, 1, vec![0.8, -0.3]);
        let target = Matrix::from_vec(2, 1, vec![1.0, 0.0]);
        (net, input, target)
    }

    #[test]
    fn finite_diff_of_square() {
        let (net, ..) = linear_net(0.4);
        let mut p = net.params.clone();
        let mut flat = p.to_flat();
        flat.fill(0.0);
        flat[0] = 3.0;
        p.set_from_flat(&flat);
        let g = finite_diff(&p, 1e-5, |q| Ok(q.to_flat()[0] * q.to_flat()[0])).unwrap();
        let gf = g.to_flat();
        assert!((gf[0] - 6.0).abs() < 1e-8, "got {}", gf[0]);
        assert!(gf[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn finite_diff_of_constant_is_zero() {
        let (net, ..) = linear_net(0.4);
        let g = finite_diff(&net.params, 1e-5, |_| Ok(41.5)).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn finite_diff_of_norm_squared() {
        let (net, ..) = linear_net(0.3);
        let g = finite_diff(&net.params, 1e-6, |q| {
            Ok(q.to_flat().iter().map(|v| v * v).sum())
        })
        .unwrap();
        for (gv, pv) in g.to_flat().iter().zip(net.params.to_flat()) {
            assert!(
                (gv - 2.0 * pv).abs() < 1e-7,
                "finite diff {gv} vs analytic {}",
                2.0 * pv
            );
        }
    }

    #[test]
    fn oracle_hand_solved_1_1_1() {
        let config = NetworkConfig {
            input_size: 1,
            hidden_sizes: vec![1],
            output_size: 1,
            neuron_model: NeuronModel::Standard,
            hidden_activation: Activation::Identity,
            beta_default: 0.1,
        };
        let mut params = Parameters::init(&config, 0).zeros_like();
        if let LayerParams::Dense { weights, bias } = &mut params.layers[0] {
            weights.set(0, 0, 0.3);
            bias[0] = 0.05;
        }
        if let LayerParams::Dense { weights, bias } = &mut params.layers[1] {
            weights.set(0, 0, 0.5);
            bias[0] = -0.02;
        }
        let net = Network::new(config, params).unwrap();
        let input = Matrix::from_vec(1, 1, vec![0.7]);
        let target = Matrix::from_vec(1, 1, vec![1.0]);
        let oracle = quadratic_oracle(&net, &input, &target, 0.05).unwrap();
        // s_hid (1 - w2^2) = w1 x + b1 + w2 b2  =>  s_hid = 0.25 / 0.75.
        let s_hid = 0.25 / 0.75;
        let s_out = 0.5 * s_hid - 0.02;
        assert!((oracle.s0.layers[0].get(0, 0) - s_hid).abs() < 1e-12);
        assert!((oracle.s0.layers[1].get(0, 0) - s_out).abs() < 1e-12);
        assert!(oracle.residual < 1e-12, "residual {}", oracle.residual);
    }

    #[test]
    fn oracle_beta_zero_degenerates() {
        let (net, input, target) = linear_net(0.4);
        let oracle = quadratic_oracle(&net, &input, &target, 0.0).unwrap();
        assert_eq!(oracle.s0.layers, oracle.s_plus.layers);
        assert_eq!(oracle.s0.layers, oracle.s_minus.layers);
    }

    #[test]
    fn oracle_rejects_non_contraction() {
        let (mut net, input, target) = linear_net(0.4);
        net.params.scale(20.0);
        assert!(matches!(
            quadratic_oracle(&net, &input, &target, 0.1),
            Err(Error::NonContractive { .. })
        ));
    }

    #[test]
    fn oracle_gradient_matches_finite_differences() {
        // Independent cross-check of the two oracle routes: IFT adjoint vs
        // central differences of the solved fixed-point loss.
        let (net, input, target) = linear_net(0.35);
        let oracle = quadratic_oracle(&net, &input, &target, 0.01).unwrap();
        let config = net.config.clone();
        let fd = finite_diff(&net.params, 1e-6, |p| {
            let probe = Network::new(config.clone(), p.clone())?;
            let o = quadratic_oracle(&probe, &input, &target, 0.01)?;
            let out = o.s0.output();
            Ok(crate::dynamics::squared_error_loss(out, &target))
        })
        .unwrap();
        let report = compare(&oracle.loss_gradient, &fd, "ift vs fd", None).unwrap();
        assert!(report.overall_rel_err < 1e-6, "rel {}", report.overall_rel_err);
    }

    #[test]
    fn symmetric_estimate_tracks_oracle_gradient() {
        let (net, input, target) = linear_net(0.35);
        let beta = 1e-3;
        let oracle = quadratic_oracle(&net, &input, &target, beta).unwrap();
        let est = ep_estimate_at(
            &net,
            &input,
            &oracle.s0,
            &oracle.s_plus,
            Some(&oracle.s_minus),
            beta,
            Estimator::Symmetric,
        )
        .unwrap();
        let report = compare(&est, &oracle.loss_gradient, "sym vs oracle", Some(beta)).unwrap();
        assert!(
            report.overall_rel_err < 1e-5,
            "rel err {}",
            report.overall_rel_err
        );
        assert!(report.overall_cosine > 0.999999);
    }

    #[test]
    fn two_phase_bias_exceeds_symmetric_bias() {
        let (net, input, target) = linear_net(0.35);
        for beta in [0.05, 0.1, 0.2] {
            let oracle = quadratic_oracle(&net, &input, &target, beta).unwrap();
            let sym = ep_estimate_at(
                &net, &input, &oracle.s0, &oracle.s_plus, Some(&oracle.s_minus),
                beta, Estimator::Symmetric,
            )
            .unwrap();
            let two = ep_estimate_at(
                &net, &input, &oracle.s0, &oracle.s_plus, None,
                beta, Estimator::TwoPhase,
            )
            .unwrap();
            let err = |est: &Parameters| {
                let mut d = est.clone();
                d.add_scaled(&oracle.loss_gradient, -1.0);
                linalg::norm(&d.to_flat()) / linalg::norm(&oracle.loss_gradient.to_flat())
            };
            let (es, et) = (err(&sym), err(&two));
            assert!(
                es < et,
                "beta {beta}: symmetric err {es} should beat two-phase {et}"
            );
        }
    }

    #[test]
    fn compare_trivia() {
        let (net, ..) = linear_net(0.4);
        let g = net.params.clone();
        let same = compare(&g, &g, "same", None).unwrap();
        assert!((same.overall_cosine - 1.0).abs() < 1e-15);
        assert_eq!(same.overall_rel_err, 0.0);
        let mut neg = g.clone();
        neg.scale(-1.0);
        let opposite = compare(&g, &neg, "neg", None).unwrap();
        assert!((opposite.overall_cosine + 1.0).abs() < 1e-15);
        // Orthogonal toy vectors.
        let mut a = g.zeros_like();
        let mut b = g.zeros_like();
        let mut fa = a.to_flat();
        let mut fb = b.to_flat();
        fa[0] = 1.0;
        fb[1] = 1.0;
        a.set_from_flat(&fa);
        b.set_from_flat(&fb);
        let orth = compare(&a, &b, "orth", None).unwrap();
        assert_eq!(orth.overall_cosine, 0.0);
    }

    #[test]
    fn loglog_slope_recovers_power() {
        let pts: Vec<(f64, f64)> = [0.02, 0.05, 0.1, 0.2]
            .iter()
            .map(|&b| (b, 3.0 * b * b))
            .collect();
        let s = loglog_slope(&pts);
        assert!((s - 2.0).abs() < 1e-12, "slope {s}");
    }

    #[test]
    fn local_gradient_matches_primitive_finite_diff_standard() {
        let config = NetworkConfig {
            input_size: 6,
            hidden_sizes: vec![7],
            output_size: 4,
            neuron_model: NeuronModel::Standard,
            hidden_activation: Activation::HardSigmoid,
            beta_default: 0.1,
        };
        let net = Network::init(config.clone(), 23).unwrap();
        let input = Matrix::from_fn(6, 3, |i, j| 0.17 * ((i + 2 * j) % 5) as f64);
        let state = net.free_phase(&input, 25, false).unwrap().final_state;
        let analytic = net.local_param_gradient(&state, &input).unwrap();
        let fd = finite_diff(&net.params, 1e-5, |p| {
            let probe = Network::new(config.clone(), p.clone())?;
            probe.primitive(&state, &input)
        })
        .unwrap();
        let report = compare(&analytic, &fd, "local grad vs primitive fd", None).unwrap();
        assert!(report.overall_rel_err < 1e-5, "rel {}", report.overall_rel_err);
    }

    #[test]
    fn local_gradient_matches_primitive_finite_diff_dendritic() {
        use crate::config::BranchSpec;
        let config = NetworkConfig {
            input_size: 5,
            hidden_sizes: vec![6],
            output_size: 3,
            neuron_model: NeuronModel::Dendritic(BranchSpec {
                n_basal: 2,
                n_apical: 1,
                sparsity: 0.5,
                alpha: 0.2,
                branch_activation: Activation::ReLU,
            }),
            hidden_activation: Activation::HardSigmoid,
            beta_default: 0.1,
        };
        let net = Network::init(config.clone(), 31).unwrap();
        let input = Matrix::from_fn(5, 2, |i, j| 0.23 * ((i + j) % 4) as f64 - 0.1);
        let state = net.free_phase(&input, 25, false).unwrap().final_state;
        let analytic = net.local_param_gradient(&state, &input).unwrap();
        let fd = finite_diff(&net.params, 1e-5, |p| {
            let probe = Network::new(config.clone(), p.clone())?;
            probe.primitive(&state, &input)
        })
        .unwrap();
        let report = compare(&analytic, &fd, "dendritic local grad vs fd", None).unwrap();
        assert!(report.overall_rel_err < 1e-5, "rel {}", report.overall_rel_err);
    }
}
