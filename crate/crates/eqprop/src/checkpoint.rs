//! Versioned binary checkpoints.
//!
//! Layout: 8-byte magic `EQPROPC1`, little-endian u32 format version,
//! little-endian u64 length of the resolved-config JSON echo followed by its
//! bytes, then every tensor (branch masks included) as raw little-endian
//! f64 in declaration order. Tensor sizes are implied by the config, so a
//! byte-count check catches truncation.

use std::fs;
use std::io::Write;
use std::path::Path;

use eqprop_core::params::Parameters;
use eqprop_core::Network;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"EQPROPC1";
pub const VERSION: u32 = 1;

pub fn save(path: &Path, config: &ExperimentConfig, params: &Parameters) -> CliResult<()> {
    // A checkpoint describes the model and how it was trained, not where it
    // happened to live on disk: filesystem fields are normalized so the
    // bytes do not depend on output locations.
    let mut echo_config = config.resolved();
    echo_config.data_dir = "data".into();
    echo_config.out_dir = "runs/out".into();
    let echo = serde_json::to_string(&echo_config)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(echo.len() as u64).to_le_bytes());
    out.extend_from_slice(echo.as_bytes());
    params.for_each_tensor(|_, t| {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    });
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Loads a checkpoint back into a network (bit-identical parameters).
pub fn load(path: &Path) -> CliResult<(ExperimentConfig, Network)> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Runtime(format!("cannot read checkpoint {}: {e}", path.display())))?;
    if bytes.len() < 20 || &bytes[0..8] != MAGIC {
        return Err(CliError::Runtime(format!(
            "{} is not an eqprop checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(CliError::Runtime(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let json_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if bytes.len() < 20 + json_len {
        return Err(CliError::Runtime("checkpoint truncated in config echo".into()));
    }
    let echo = std::str::from_utf8(&bytes[20..20 + json_len])
        .map_err(|_| CliError::Runtime("checkpoint config echo is not utf-8".into()))?;
    let config: ExperimentConfig = serde_json::from_str(echo)?;
    config.validate()?;

    // Rebuild the parameter structure, then overwrite every tensor from the
    // file (masks come from the file, not from re-running the RNG).
    let net_config = config.network_config()?;
    let mut net = Network::init(net_config, 0)?;
    let mut expected = 0usize;
    net.params.for_each_tensor(|_, t| expected += t.len());
    let payload = &bytes[20 + json_len..];
    if payload.len() != expected * 8 {
        return Err(CliError::Runtime(format!(
            "checkpoint tensor payload is {} bytes, expected {}",
            payload.len(),
            expected * 8
        )));
    }
    let mut off = 0usize;
    net.params.for_each_tensor_mut(|_, t| {
        for v in t {
            *v = f64::from_le_bytes(payload[off..off + 8].try_into().unwrap());
            off += 8;
        }
    });
    Ok((config, net))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_config() -> ExperimentConfig {
        serde_json::from_value(serde_json::json!({
            "dataset": "mnist",
            "model": "dep",
            "hidden_sizes": [12],
            "beta": 0.1,
            "t_free": 10,
            "t_nudge": 4,
            "lr_per_layer": [0.04, 0.02],
            "epochs": 1,
            "branch": {"n_basal": 2, "n_apical": 1, "sparsity": 0.5, "alpha": 0.2,
                        "branch_activation": "relu"}
        }))
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = smoke_config();
        let net = Network::init(cfg.network_config().unwrap(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save(&path, &cfg, &net.params).unwrap();
        let (cfg2, net2) = load(&path).unwrap();
        assert_eq!(net.params, net2.params, "parameters must round-trip bit-exactly");
        assert_eq!(cfg2.hidden_sizes, cfg.hidden_sizes);
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let cfg = smoke_config();
        let net = Network::init(cfg.network_config().unwrap(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save(&path, &cfg, &net.params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(load(&path).is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not_a_ckpt.bin");
        std::fs::write(&path, b"NOTMAGIC----------------").unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }
}
