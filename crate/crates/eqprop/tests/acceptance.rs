//! Acceptance suite. Each test prints one `ACCEPTANCE <id>: PASS/FAIL` line
//! with the measured numbers (visible under `--nocapture`, and in the panic
//! message on failure).
//!
//! Criteria 1-5 and 9 run in CI. Criteria 6-8 are full-dataset runs
//! (CPU-hours); they are `#[ignore]` and documented in the README.

use std::path::{Path, PathBuf};

use eqprop::config::ExperimentConfig;
use eqprop::oracle;
use eqprop::runner;
use eqprop_core::activation::Activation;
use eqprop_core::config::{BranchSpec, NetworkConfig, NeuronModel};
use eqprop_core::dendrite::BranchBank;
use eqprop_core::linalg::Matrix;
use eqprop_core::params::{LayerParams, Parameters};
use eqprop_core::state::NetworkState;
use eqprop_core::Network;

fn repo_data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn repo_presets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

fn gate(id: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {id}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "ACCEPTANCE {id} FAIL - {detail}");
}

#[test]
fn criterion_1_bptt_matches_finite_differences() {
    let report = oracle::finite_diff_check().expect("finite-diff oracle runs");
    gate(
        "1",
        report.pass,
        &format!(
            "full-unroll BPTT vs central differences, 6-8-3 nets: max rel err {:.3e} (standard {:.3e}, dendritic {:.3e}; tolerance {:.0e})",
            report.max_rel_err,
            report.standard.overall_rel_err,
            report.dendritic.overall_rel_err,
            report.tolerance
        ),
    );
}

#[test]
fn criterion_2_ep_bptt_equivalence_standard() {
    let report = oracle::ep_vs_bptt_check().expect("ep-vs-bptt oracle runs");
    gate(
        "2 (standard)",
        report.free_delta_standard < 1e-8 && report.standard.overall_cosine >= report.min_cosine,
        &format!(
            "symmetric EP (beta={}) vs full-unroll BPTT on 10-16-4 standard net: cosine {:.8} (need >= {}), free delta {:.2e}",
            report.beta, report.standard.overall_cosine, report.min_cosine, report.free_delta_standard
        ),
    );
}

#[test]
fn criterion_2_ep_bptt_equivalence_dendritic() {
    // Known-red criterion: the dendritic model's apical feedback weights are
    // independent of the forward weights, so its relaxation is not a
    // gradient flow and the EP estimate provably differs from the unrolled
    // gradient (EP routes credit through B, BPTT through W-transpose).
    // The criterion is asserted exactly as specified and fails honestly;
    // the analysis lives in the project notes and README.
    let report = oracle::ep_vs_bptt_check().expect("ep-vs-bptt oracle runs");
    gate(
        "2 (dendritic)",
        report.free_delta_dendritic < 1e-8 && report.dendritic.overall_cosine >= report.min_cosine,
        &format!(
            "symmetric EP (beta={}) vs full-unroll BPTT on 10-16-4 dendritic net: cosine {:.6} (need >= {}); \
             unattainable for independent apical weights - EP sends credit to hidden layers through the \
             apical bank while the true gradient uses the transpose of the output weights (hidden-tensor \
             cosines: {})",
            report.beta,
            report.dendritic.overall_cosine,
            report.min_cosine,
            report
                .dendritic
                .tensors
                .iter()
                .map(|t| format!("{} {:.3}", t.name, t.cosine))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );
}

#[test]
fn criterion_3_estimator_bias_order() {
    let report = oracle::beta_sweep_check().expect("beta sweep runs");
    gate(
        "3",
        report.pass,
        &format!(
            "log-log bias slopes on the quadratic oracle: symmetric {:.3} (need 2 +/- 0.3), two-phase {:.3} (need 1 +/- 0.3), symmetric never worse: {} (errors: {})",
            report.slope_symmetric,
            report.slope_two_phase,
            report.symmetric_never_worse,
            report
                .rows
                .iter()
                .map(|r| format!("beta {}: {:.2e}/{:.2e}", r.beta, r.err_symmetric, r.err_two_phase))
                .collect::<Vec<_>>()
                .join("; ")
        ),
    );
}

#[test]
fn criterion_4_dendritic_reduction_is_bit_identical() {
    // K=1 dense identity branches, alpha=1, apical tied to the transpose of
    // the output weights: the dendritic update must equal the standard
    // update bit for bit, over 100 random states.
    let sizes = (10usize, 16usize, 4usize);
    let std_config = NetworkConfig {
        input_size: sizes.0,
        hidden_sizes: vec![sizes.1],
        output_size: sizes.2,
        neuron_model: NeuronModel::Standard,
        hidden_activation: Activation::HardSigmoid,
        beta_default: 0.1,
    };
    let std_net = Network::init(std_config.clone(), 77).unwrap();

    let (w1, b1) = match &std_net.params.layers[0] {
        LayerParams::Dense { weights, bias } => (weights.clone(), bias.clone()),
        _ => unreachable!(),
    };
    let (w2, b2) = match &std_net.params.layers[1] {
        LayerParams::Dense { weights, bias } => (weights.clone(), bias.clone()),
        _ => unreachable!(),
    };

    let dend_config = NetworkConfig {
        neuron_model: NeuronModel::Dendritic(BranchSpec {
            n_basal: 1,
            n_apical: 1,
            sparsity: 1.0,
            alpha: 1.0,
            branch_activation: Activation::Identity,
        }),
        ..std_config.clone()
    };
    let ones = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| 1.0);
    let dend_params = Parameters {
        layers: vec![
            LayerParams::Dendritic {
                basal: BranchBank {
                    weights: vec![w1.clone()],
                    masks: vec![ones(sizes.1, sizes.0)],
                },
                apical: BranchBank {
                    weights: vec![w2.transpose()],
                    masks: vec![ones(sizes.1, sizes.2)],
                },
                bias: b1,
            },
            LayerParams::Dense {
                weights: w2,
                bias: b2,
            },
        ],
    };
    let dend_net = Network::new(dend_config, dend_params).unwrap();

    // Simple deterministic generator for states and inputs.
    let mut lcg: u64 = 0x2545F4914F6CDD1D;
    let mut next_f64 = || {
        lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((lcg >> 11) as f64) / ((1u64 << 53) as f64)
    };
    let mut checked = 0usize;
    for _ in 0..100 {
        let input = Matrix::from_fn(sizes.0, 2, |_, _| next_f64());
        let mut state = NetworkState::zeros(&std_config, 2);
        for layer in &mut state.layers {
            for v in layer.data_mut() {
                *v = next_f64();
            }
        }
        let a = std_net.step_free(&state, &input).unwrap();
        let b = dend_net.step_free(&state, &input).unwrap();
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(
                la.data(),
                lb.data(),
                "dendritic reduction must be bit-identical to the standard update"
            );
        }
        checked += 1;
    }
    gate(
        "4",
        checked == 100,
        &format!("dendritic K=1 dense identity reduction bit-identical on {checked}/100 random states"),
    );
}

fn mnist_smoke_config(out_dir: PathBuf) -> ExperimentConfig {
    serde_json::from_value(serde_json::json!({
        "dataset": "mnist",
        "model": "ep",
        "hidden_sizes": [256],
        "beta": 0.1,
        "t_free": 60,
        "t_nudge": 12,
        "estimator": "symmetric",
        "lr_per_layer": [0.04, 0.02],
        "momentum": 0.9,
        "epochs": 10,
        "batch_size": 64,
        "seeds": [0],
        "train_subset": 5000,
        "data_dir": repo_data_dir(),
        "out_dir": out_dir,
    }))
    .expect("smoke config is valid")
}

#[test]
fn criterion_5_mnist_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let config = mnist_smoke_config(tmp.path().join("smoke"));
    let out = runner::run(&config, true).expect("smoke run completes");
    let final_test = out.per_seed[0].last().unwrap().test_accuracy;
    let initial_test = out.per_seed[0][0].test_accuracy;

    // Convergence side-check on the trained network: after training, a
    // 60-step free phase reaches a per-sample delta < 1e-3 for >= 95% of a
    // random batch.
    let (_, net) = eqprop::checkpoint::load(&out.checkpoint_paths[0]).unwrap();
    let test_set = runner::load_split(&config.effective_data_dir(), config.dataset, eqprop::Split::Test).unwrap();
    let batch_idx: Vec<usize> = eqprop_core::train::epoch_permutation(123, 0, test_set.len())
        .into_iter()
        .take(64)
        .collect();
    let (input, _) = test_set.view().gather(&batch_idx, 10);
    let phase = net.free_phase(&input, 60, true).unwrap();
    let traj = phase.trajectory.unwrap();
    let last = &traj[traj.len() - 1];
    let prev = &traj[traj.len() - 2];
    let mut converged = 0usize;
    for c in 0..64 {
        let mut delta = 0.0f64;
        for (ll, pl) in last.layers.iter().zip(&prev.layers) {
            for r in 0..ll.rows() {
                delta = delta.max((ll.get(r, c) - pl.get(r, c)).abs());
            }
        }
        if delta < 1e-3 {
            converged += 1;
        }
    }
    let frac = converged as f64 / 64.0;

    gate(
        "5",
        final_test >= 92.0 && frac >= 0.95,
        &format!(
            "MNIST smoke (5000-sample subset, 10 epochs): test accuracy {final_test:.2}% (need >= 92%, chance-level start was {initial_test:.2}%); free-phase converged for {:.0}% of a random batch (need >= 95%)",
            100.0 * frac
        ),
    );
}

#[test]
fn criterion_9_determinism_byte_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config: ExperimentConfig = serde_json::from_value(serde_json::json!({
        "dataset": "mnist",
        "model": "dep",
        "hidden_sizes": [32],
        "beta": 0.2,
        "t_free": 15,
        "t_nudge": 5,
        "estimator": "symmetric",
        "lr_per_layer": [0.1, 0.05],
        "momentum": 0.9,
        "epochs": 2,
        "batch_size": 32,
        "seeds": [0, 1],
        "train_subset": 192,
        "branch": {"n_basal": 2, "n_apical": 1, "sparsity": 0.5, "alpha": 0.2,
                    "branch_activation": "relu"},
        "data_dir": repo_data_dir(),
        "out_dir": tmp.path().join("run_a"),
        "deterministic_timing": true,
    }))
    .unwrap();

    let a = runner::run(&config, true).expect("first run");
    config.out_dir = tmp.path().join("run_b");
    let b = runner::run(&config, true).expect("second run");

    let mut all_equal = true;
    let mut detail = String::new();
    let pairs = [
        (&a.metrics_paths[0], &b.metrics_paths[0]),
        (&a.metrics_paths[1], &b.metrics_paths[1]),
        (&a.checkpoint_paths[0], &b.checkpoint_paths[0]),
        (&a.checkpoint_paths[1], &b.checkpoint_paths[1]),
        (&a.summary_path, &b.summary_path),
    ];
    for (pa, pb) in pairs {
        let ba = std::fs::read(pa).unwrap();
        let bb = std::fs::read(pb).unwrap();
        if ba != bb {
            all_equal = false;
            detail.push_str(&format!("{} differs; ", pa.display()));
        }
    }

    // Oracle JSON reruns must also be byte-identical.
    let (o1_pass, o1) = oracle::run_oracle("beta-sweep", &tmp.path().join("oracle_a")).unwrap();
    let (_, o2) = oracle::run_oracle("beta-sweep", &tmp.path().join("oracle_b")).unwrap();
    let oracle_equal = std::fs::read(&o1).unwrap() == std::fs::read(&o2).unwrap();
    gate(
        "9",
        all_equal && oracle_equal && o1_pass,
        &format!(
            "re-running with identical seeds: metrics/checkpoint/summary byte-identical: {all_equal}; oracle JSON byte-identical: {oracle_equal} {detail}"
        ),
    );
}

// ---------------------------------------------------------------------------
// Long-running full-dataset criteria. Run explicitly with
//   cargo test -p eqprop --release --test acceptance -- --ignored --nocapture
// Criterion 7 additionally needs KMNIST/FMNIST IDX files under the data dir
// (see README), and criterion 8 needs the checkpoints criterion 6 writes.
// ---------------------------------------------------------------------------

fn run_preset(name: &str, seeds: &[u64]) -> (f64, PathBuf) {
    let mut config = ExperimentConfig::from_path(&repo_presets_dir().join(format!("{name}.json")))
        .expect("preset parses");
    config.data_dir = repo_data_dir();
    config.seeds = seeds.to_vec();
    config.out_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../runs/{name}"));
    let out = runner::run(&config, false).expect("preset run completes");
    let (mean, _) = runner::final_test_accuracy(&out.per_seed);
    (mean, config.out_dir)
}

#[test]
#[ignore = "full MNIST training, CPU-hours; writes runs/mnist_* checkpoints"]
fn criterion_6_mnist_full() {
    let (ep, _) = run_preset("mnist_ep", &[0]);
    gate("6 (EP)", ep >= 97.0, &format!("MNIST EP test accuracy {ep:.2}% (need >= 97.0%)"));
    let (dep, _) = run_preset("mnist_dep", &[0]);
    gate("6 (DEP)", dep >= 97.0, &format!("MNIST DEP test accuracy {dep:.2}% (need >= 97.0%)"));
    let (dbptt, _) = run_preset("mnist_dbptt", &[0]);
    gate(
        "6 (DBPTT)",
        dbptt >= 97.5,
        &format!("MNIST DBPTT test accuracy {dbptt:.2}% (need >= 97.5%)"),
    );
}

#[test]
#[ignore = "full KMNIST/FMNIST training, CPU-hours; needs the KMNIST and FMNIST IDX files"]
fn criterion_7_kmnist_fmnist_ordering() {
    for (dataset, dep_gate) in [("kmnist", 89.0), ("fmnist", 87.5)] {
        let (ep, _) = run_preset(&format!("{dataset}_ep"), &[0]);
        let (dep, _) = run_preset(&format!("{dataset}_dep"), &[0]);
        let (dbptt, _) = run_preset(&format!("{dataset}_dbptt"), &[0]);
        gate(
            &format!("7 ({dataset})"),
            ep < dep && dep <= dbptt + 0.3 && dep >= dep_gate,
            &format!(
                "{dataset}: EP {ep:.2}% < DEP {dep:.2}% <= DBPTT {dbptt:.2}% + 0.3, DEP gate {dep_gate}%"
            ),
        );
    }
}

#[test]
#[ignore = "needs the checkpoints written by criterion_6_mnist_full"]
fn criterion_8_dendritic_states_more_active() {
    let runs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../runs");
    let samples: Vec<usize> = vec![3, 5, 42, 7, 18, 101, 256, 999, 1534, 4000];
    let mut dep_wins = 0usize;
    let mut detail = String::new();
    for preset in ["mnist_ep", "mnist_dep"] {
        assert!(
            runs.join(preset).join("checkpoint_seed0.bin").exists(),
            "run criterion_6_mnist_full first to produce {preset} checkpoints"
        );
    }
    let export = |preset: &str| {
        let mut config =
            ExperimentConfig::from_path(&repo_presets_dir().join(format!("{preset}.json"))).unwrap();
        config.data_dir = repo_data_dir();
        config.out_dir = runs.join(preset).join("states");
        runner::export_states(
            &config,
            &runs.join(preset).join("checkpoint_seed0.bin"),
            &samples,
        )
        .expect("state export")
    };
    let ep = export("mnist_ep");
    let dep = export("mnist_dep");
    let last_row = |path: &Path| -> (f64, f64) {
        let text = std::fs::read_to_string(path).unwrap();
        let last = text.lines().last().unwrap();
        let cols: Vec<&str> = last.split(',').collect();
        (cols[1].parse().unwrap(), cols[2].parse().unwrap())
    };
    for (i, sample) in samples.iter().enumerate() {
        let (ep_mean, ep_frac) = last_row(&ep.summary_paths[i]);
        let (dep_mean, dep_frac) = last_row(&dep.summary_paths[i]);
        let win = dep_mean > ep_mean && dep_frac > ep_frac;
        if win {
            dep_wins += 1;
        }
        detail.push_str(&format!(
            "sample {sample}: DEP |s|={dep_mean:.3} frac={dep_frac:.3} vs EP |s|={ep_mean:.3} frac={ep_frac:.3}{}; ",
            if win { "" } else { " (no win)" }
        ));
    }
    gate(
        "8",
        dep_wins >= 8,
        &format!("trained DEP more active than trained EP on {dep_wins}/10 samples (need >= 8): {detail}"),
    );
}
