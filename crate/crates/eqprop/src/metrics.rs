//! Metrics CSV files: one per seed, plus a cross-seed summary.
//!
//! Numbers are written with 17 significant digits so every f64 survives a
//! parse round trip and determinism stays auditable byte-for-byte.

use std::fs;
use std::path::Path;

use eqprop_core::train::MetricsRecord;

use crate::error::CliResult;

/// Full round-trip precision for f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub const METRICS_HEADER: &str = "epoch,train_acc,test_acc,free_delta,nudge_delta,seconds";

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch,
            fmt_f64(r.train_accuracy),
            fmt_f64(r.test_accuracy),
            fmt_f64(r.free_delta),
            fmt_f64(r.nudge_delta),
            fmt_f64(r.seconds),
        ));
    }
    out
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, metrics_csv(records))?;
    Ok(())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n − 1); zero for a single value.
fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub const SUMMARY_HEADER: &str = "epoch,train_acc_mean,train_acc_std,test_acc_mean,test_acc_std,free_delta_mean,nudge_delta_mean,seconds_mean";

/// Per-epoch mean/std across seeds. All runs must have the same length.
pub fn summary_csv(per_seed: &[Vec<MetricsRecord>]) -> String {
    let epochs = per_seed.first().map_or(0, |r| r.len());
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for e in 0..epochs {
        let col = |f: &dyn Fn(&MetricsRecord) -> f64| -> Vec<f64> {
            per_seed.iter().map(|run| f(&run[e])).collect()
        };
        let train = col(&|r| r.train_accuracy);
        let test = col(&|r| r.test_accuracy);
        let free = col(&|r| r.free_delta);
        let nudge = col(&|r| r.nudge_delta);
        let secs = col(&|r| r.seconds);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            per_seed[0][e].epoch,
            fmt_f64(mean(&train)),
            fmt_f64(std_dev(&train)),
            fmt_f64(mean(&test)),
            fmt_f64(std_dev(&test)),
            fmt_f64(mean(&free)),
            fmt_f64(mean(&nudge)),
            fmt_f64(mean(&secs)),
        ));
    }
    out
}

pub fn write_summary(path: &Path, per_seed: &[Vec<MetricsRecord>]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, summary_csv(per_seed))?;
    Ok(())
}
