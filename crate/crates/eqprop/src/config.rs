//! Experiment configuration: JSON in, fully resolved settings out.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use eqprop_core::activation::Activation;
use eqprop_core::bptt::BpttHyperparams;
use eqprop_core::config::{BranchSpec, NetworkConfig, NeuronModel};
use eqprop_core::ep::{EPHyperparams, Estimator};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Mnist,
    Kmnist,
    Fmnist,
}

impl DatasetName {
    pub const ALL: [&'static str; 3] = ["mnist", "kmnist", "fmnist"];

    pub fn dir_name(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Kmnist => "kmnist",
            DatasetName::Fmnist => "fmnist",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetName::Mnist),
            "kmnist" => Ok(DatasetName::Kmnist),
            "fmnist" => Ok(DatasetName::Fmnist),
            other => Err(CliError::Usage(format!(
                "unknown dataset '{other}'; valid names: {}",
                Self::ALL.join(", ")
            ))),
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// Which of the three trained models to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Standard neurons trained with equilibrium propagation.
    Ep,
    /// Dendritic neurons trained with equilibrium propagation.
    Dep,
    /// Dendritic neurons trained with truncated BPTT.
    Dbptt,
}

impl ModelKind {
    pub fn is_dendritic(self) -> bool {
        matches!(self, ModelKind::Dep | ModelKind::Dbptt)
    }

    pub fn uses_ep(self) -> bool {
        matches!(self, ModelKind::Ep | ModelKind::Dep)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ep => "ep",
            ModelKind::Dep => "dep",
            ModelKind::Dbptt => "dbptt",
        })
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_momentum() -> f64 {
    0.9
}

fn default_batch() -> usize {
    64
}

fn default_estimator() -> Estimator {
    Estimator::Symmetric
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/out")
}

/// One experiment, as read from a JSON config file. Optional fields resolve
/// to the trained defaults; the resolved form is echoed next to the outputs
/// so a run can be reproduced from its own echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetName,
    pub model: ModelKind,
    pub hidden_sizes: Vec<usize>,
    /// Somatic activation; defaults to tanh for EP on FMNIST and to the
    /// hard sigmoid everywhere else.
    #[serde(default)]
    pub activation: Option<Activation>,
    /// Dendritic branch settings (DEP/DBPTT only).
    #[serde(default)]
    pub branch: Option<BranchSpec>,
    pub beta: f64,
    pub t_free: usize,
    pub t_nudge: usize,
    /// BPTT truncation window; defaults to `t_nudge`.
    #[serde(default)]
    pub k_back: Option<usize>,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    pub lr_per_layer: Vec<f64>,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Train on only the first n samples (smoke runs).
    #[serde(default)]
    pub train_subset: Option<usize>,
    /// Report zero wall-clock seconds so reruns are byte-identical.
    #[serde(default)]
    pub deterministic_timing: bool,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.hidden_sizes.is_empty() {
            return Err(CliError::Usage("hidden_sizes must be non-empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Usage("need at least one seed".into()));
        }
        if let Some(a) = self.activation {
            if !matches!(a, Activation::HardSigmoid | Activation::Tanh) {
                return Err(CliError::Usage(
                    "activation must be hard_sigmoid or tanh".into(),
                ));
            }
        }
        if self.model.is_dendritic() {
            if let Some(spec) = &self.branch {
                spec.validate()?;
            }
        } else if self.branch.is_some() {
            return Err(CliError::Usage(
                "branch settings are only valid for dendritic models (dep, dbptt)".into(),
            ));
        }
        let n_layers = self.hidden_sizes.len() + 1;
        if self.lr_per_layer.len() != n_layers {
            return Err(CliError::Usage(format!(
                "lr_per_layer needs {n_layers} entries for {} hidden layer(s), got {}",
                self.hidden_sizes.len(),
                self.lr_per_layer.len()
            )));
        }
        Ok(())
    }

    /// The trained default: tanh only for standard EP on FMNIST.
    pub fn resolved_activation(&self) -> Activation {
        self.activation.unwrap_or({
            if self.dataset == DatasetName::Fmnist && self.model == ModelKind::Ep {
                Activation::Tanh
            } else {
                Activation::HardSigmoid
            }
        })
    }

    pub fn resolved_branch(&self) -> BranchSpec {
        self.branch.unwrap_or_default()
    }

    pub fn resolved_k_back(&self) -> usize {
        self.k_back.unwrap_or(self.t_nudge)
    }

    /// Fills every optional field with its resolved value (the config echo).
    pub fn resolved(&self) -> ExperimentConfig {
        ExperimentConfig {
            activation: Some(self.resolved_activation()),
            branch: if self.model.is_dendritic() {
                Some(self.resolved_branch())
            } else {
                None
            },
            k_back: Some(self.resolved_k_back()),
            ..self.clone()
        }
    }

    pub fn network_config(&self) -> CliResult<NetworkConfig> {
        let neuron_model = if self.model.is_dendritic() {
            NeuronModel::Dendritic(self.resolved_branch())
        } else {
            NeuronModel::Standard
        };
        let cfg = NetworkConfig {
            input_size: 28 * 28,
            hidden_sizes: self.hidden_sizes.clone(),
            output_size: 10,
            neuron_model,
            hidden_activation: self.resolved_activation(),
            beta_default: self.beta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ep_hyperparams(&self) -> EPHyperparams {
        EPHyperparams {
            beta: self.beta,
            t_free: self.t_free,
            t_nudge: self.t_nudge,
            lr_per_layer: self.lr_per_layer.clone(),
            momentum: self.momentum,
            estimator: self.estimator,
            epochs: self.epochs,
            batch_size: self.batch_size,
        }
    }

    pub fn bptt_hyperparams(&self) -> BpttHyperparams {
        BpttHyperparams {
            t_free: self.t_free,
            k_back: self.resolved_k_back(),
            lr_per_layer: self.lr_per_layer.clone(),
            momentum: self.momentum,
            epochs: self.epochs,
            batch_size: self.batch_size,
        }
    }

    /// Effective data directory: the `EQPROP_DATA_DIR` environment variable
    /// overrides the config.
    pub fn effective_data_dir(&self) -> PathBuf {
        match std::env::var_os("EQPROP_DATA_DIR") {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.data_dir.clone(),
        }
    }
}
