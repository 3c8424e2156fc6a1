//! Experiment runner: multi-seed training with metrics files, checkpoints,
//! a resolved-config echo, and hidden-state trajectory export.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eqprop_core::linalg::Matrix;
use eqprop_core::train::{train_bptt, train_ep, Clock, MetricsRecord, NullClock};
use eqprop_core::Network;

use crate::checkpoint;
use crate::config::{DatasetName, ExperimentConfig};
use crate::data::{load_idx, Dataset, Split};
use crate::error::{CliError, CliResult};
use crate::metrics::{self, fmt_f64};

struct WallClock(Instant);

impl Clock for WallClock {
    fn now_seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

fn resolve_idx_path(dir: &Path, name: &str) -> CliResult<PathBuf> {
    let raw = dir.join(name);
    if raw.exists() {
        return Ok(raw);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(CliError::Runtime(format!(
        "dataset file not found: {} (also tried .gz)",
        raw.display()
    )))
}

/// Loads one split of a named dataset from `<data_dir>/<dataset>/`.
pub fn load_split(data_dir: &Path, dataset: DatasetName, split: Split) -> CliResult<Dataset> {
    let dir = data_dir.join(dataset.dir_name());
    let (images_name, labels_name) = match split {
        Split::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        Split::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    };
    let images_path = resolve_idx_path(&dir, images_name)?;
    let labels_path = resolve_idx_path(&dir, labels_name)?;
    let mut ds = load_idx(&images_path, &labels_path)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    ds.name = dataset.dir_name().to_string();
    ds.split = split;
    Ok(ds)
}

/// Everything one `run` produces on disk.
#[derive(Debug)]
pub struct RunOutput {
    pub per_seed: Vec<Vec<MetricsRecord>>,
    pub metrics_paths: Vec<PathBuf>,
    pub checkpoint_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
    pub config_echo_path: PathBuf,
}

/// Trains `config` once per seed; writes `metrics_seed<k>.csv`, a final
/// checkpoint per seed, `summary.csv` (mean/std across seeds), and the
/// resolved config echo.
pub fn run(config: &ExperimentConfig, quiet: bool) -> CliResult<RunOutput> {
    config.validate()?;
    let data_dir = config.effective_data_dir();
    let mut train_set = load_split(&data_dir, config.dataset, Split::Train)?;
    let test_set = load_split(&data_dir, config.dataset, Split::Test)?;
    if let Some(n) = config.train_subset {
        if n == 0 {
            return Err(CliError::Usage("train_subset must be >= 1".into()));
        }
        train_set = train_set.take(n);
    }

    let net_config = config.network_config()?;
    fs::create_dir_all(&config.out_dir)?;
    let config_echo_path = config.out_dir.join("resolved_config.json");
    fs::write(
        &config_echo_path,
        serde_json::to_string_pretty(&config.resolved())? + "\n",
    )?;

    let mut per_seed = Vec::new();
    let mut metrics_paths = Vec::new();
    let mut checkpoint_paths = Vec::new();
    for &seed in &config.seeds {
        let mut net = Network::init(net_config.clone(), seed)?;
        let metrics_path = config.out_dir.join(format!("metrics_seed{seed}.csv"));
        let mut partial: Vec<MetricsRecord> = Vec::new();
        let records = {
            let metrics_path = metrics_path.clone();
            let mut observer = |r: &MetricsRecord| {
                if !quiet {
                    println!(
                        "[seed {seed}] epoch {:>3}  train {:6.2}%  test {:6.2}%  free_delta {:.3e}  ({:.1}s)",
                        r.epoch, r.train_accuracy, r.test_accuracy, r.free_delta, r.seconds
                    );
                }
                partial.push(r.clone());
                // Keep the file current during long runs.
                let _ = metrics::write_metrics(&metrics_path, &partial);
            };
            let train_view = train_set.view();
            let test_view = test_set.view();
            let hp_result = if config.model.uses_ep() {
                let hp = config.ep_hyperparams();
                if config.deterministic_timing {
                    train_ep(&mut net, train_view, test_view, &hp, seed, &NullClock, &mut observer)
                } else {
                    let clock = WallClock(Instant::now());
                    train_ep(&mut net, train_view, test_view, &hp, seed, &clock, &mut observer)
                }
            } else {
                let hp = config.bptt_hyperparams();
                if config.deterministic_timing {
                    train_bptt(&mut net, train_view, test_view, &hp, seed, &NullClock, &mut observer)
                } else {
                    let clock = WallClock(Instant::now());
                    train_bptt(&mut net, train_view, test_view, &hp, seed, &clock, &mut observer)
                }
            };
            hp_result?
        };
        metrics::write_metrics(&metrics_path, &records)?;
        let ckpt_path = config.out_dir.join(format!("checkpoint_seed{seed}.bin"));
        checkpoint::save(&ckpt_path, config, &net.params)?;
        per_seed.push(records);
        metrics_paths.push(metrics_path);
        checkpoint_paths.push(ckpt_path);
    }
    let summary_path = config.out_dir.join("summary.csv");
    metrics::write_summary(&summary_path, &per_seed)?;
    Ok(RunOutput {
        per_seed,
        metrics_paths,
        checkpoint_paths,
        summary_path,
        config_echo_path,
    })
}

/// Per-sample trajectory files written by [`export_states`].
#[derive(Debug)]
pub struct StateExport {
    pub trajectory_paths: Vec<PathBuf>,
    pub summary_paths: Vec<PathBuf>,
}

/// Runs the free phase with trajectory recording for the requested test
/// samples and writes per-step state CSVs plus per-step activity summaries
/// (mean absolute hidden activation, fraction of hidden units above 0.05).
pub fn export_states(
    config: &ExperimentConfig,
    checkpoint_path: &Path,
    samples: &[usize],
) -> CliResult<StateExport> {
    let (ckpt_config, net) = checkpoint::load(checkpoint_path)?;
    let expected = config.network_config()?;
    let got = ckpt_config.network_config()?;
    if expected != got {
        return Err(CliError::Usage(
            "checkpoint network does not match the provided config".into(),
        ));
    }
    let data_dir = config.effective_data_dir();
    let test_set = load_split(&data_dir, config.dataset, Split::Test)?;
    fs::create_dir_all(&config.out_dir)?;

    let n_hidden_layers = config.hidden_sizes.len();
    let mut trajectory_paths = Vec::new();
    let mut summary_paths = Vec::new();
    for &idx in samples {
        if idx >= test_set.len() {
            return Err(CliError::Usage(format!(
                "sample index {idx} out of range (test set has {} samples)",
                test_set.len()
            )));
        }
        let mut input = Matrix::zeros(test_set.images.rows(), 1);
        for r in 0..test_set.images.rows() {
            input.set(r, 0, test_set.images.get(r, idx));
        }
        let phase = net.free_phase(&input, config.t_free, true)?;
        let trajectory = phase.trajectory.expect("recording was requested");

        let mut csv = String::from("step,layer,neuron,activation\n");
        let mut summary = String::from("step,mean_abs_activation,active_fraction\n");
        for (t, state) in trajectory.iter().enumerate() {
            let step = t + 1;
            for (l, layer) in state.layers.iter().enumerate() {
                for neuron in 0..layer.rows() {
                    csv.push_str(&format!(
                        "{step},{},{neuron},{}\n",
                        l + 1,
                        fmt_f64(layer.get(neuron, 0))
                    ));
                }
            }
            let mut abs_sum = 0.0;
            let mut active = 0usize;
            let mut count = 0usize;
            for layer in state.layers.iter().take(n_hidden_layers) {
                for &v in layer.data() {
                    abs_sum += v.abs();
                    if v > 0.05 {
                        active += 1;
                    }
                    count += 1;
                }
            }
            summary.push_str(&format!(
                "{step},{},{}\n",
                fmt_f64(abs_sum / count as f64),
                fmt_f64(active as f64 / count as f64)
            ));
        }
        let traj_path = config.out_dir.join(format!("states_sample{idx}.csv"));
        fs::write(&traj_path, csv)?;
        let summary_path = config
            .out_dir
            .join(format!("states_summary_sample{idx}.csv"));
        fs::write(&summary_path, summary)?;
        trajectory_paths.push(traj_path);
        summary_paths.push(summary_path);
    }
    Ok(StateExport {
        trajectory_paths,
        summary_paths,
    })
}

/// Final-epoch mean/std of test accuracy across seeds.
pub fn final_test_accuracy(per_seed: &[Vec<MetricsRecord>]) -> (f64, f64) {
    let finals: Vec<f64> = per_seed
        .iter()
        .map(|r| r.last().map_or(0.0, |m| m.test_accuracy))
        .collect();
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    let std = if finals.len() < 2 {
        0.0
    } else {
        let ss: f64 = finals.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (finals.len() - 1) as f64).sqrt()
    };
    (mean, std)
}
