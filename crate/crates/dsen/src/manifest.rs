//! Run manifests: everything needed to reproduce a training run, plus a
//! summary of what it produced.

use std::path::Path;

use dsen_core::data::ZslDataset;
use dsen_core::train::{TrainConfig, TrainReport};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Written next to the checkpoint after every training run. The config
/// snapshot, dataset fingerprint, and seed fully determine the run.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    /// SHA-256 over the dataset's canonical in-memory serialization.
    pub dataset_fingerprint: String,
    pub seed: u64,
    pub code_version: String,
    pub checkpoint_path: String,
    pub metrics: MetricsSummary,
}

/// Final-epoch loss terms; the full per-epoch history lives in the JSONL log.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct MetricsSummary {
    pub epochs_completed: usize,
    pub final_svs: f64,
    pub final_sr: f64,
    pub final_ddc: f64,
    pub final_total: f64,
}

impl MetricsSummary {
    pub fn from_report(report: &TrainReport) -> Self {
        let last = report.epochs.last();
        MetricsSummary {
            epochs_completed: report.epochs.len(),
            final_svs: last.map_or(0.0, |e| e.svs),
            final_sr: last.map_or(0.0, |e| e.sr),
            final_ddc: last.map_or(0.0, |e| e.ddc),
            final_total: last.map_or(0.0, |e| e.total),
        }
    }
}

/// SHA-256 fingerprint of a dataset's contents: features on the 32-bit disk
/// grid, labels, splits, attributes, and class sets. Loading a saved dataset
/// and fingerprinting it reproduces the original hash.
pub fn dataset_fingerprint(ds: &ZslDataset) -> String {
    let mut hasher = Sha256::new();
    for &v in ds.features.data() {
        hasher.update((v as f32).to_le_bytes());
    }
    for &l in &ds.labels {
        hasher.update((l as u64).to_le_bytes());
    }
    for &s in &ds.split {
        hasher.update([s as u8]);
    }
    for &v in ds.attributes.data() {
        hasher.update(v.to_le_bytes());
    }
    for &c in ds.seen_classes.iter().chain(&ds.unseen_classes) {
        hasher.update((c as u64).to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// SHA-256 of the JSON form of a training configuration; stamped into
/// checkpoints and manifests.
pub fn config_hash(config: &TrainConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

pub fn save_manifest(manifest: &RunManifest, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("manifest {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&raw)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dsen_core::data::{gen_synthetic, GenSpec};

    #[test]
    fn fingerprint_is_stable_and_content_sensitive() {
        let ds = gen_synthetic(&GenSpec::default());
        let a = dataset_fingerprint(&ds);
        assert_eq!(a, dataset_fingerprint(&ds));
        let other = gen_synthetic(&GenSpec {
            seed: 8,
            ..GenSpec::default()
        });
        assert_ne!(a, dataset_fingerprint(&other));
    }

    #[test]
    fn config_hash_tracks_every_field() {
        let base = TrainConfig::default();
        let mut changed = base.clone();
        changed.seed = 99;
        assert_ne!(config_hash(&base), config_hash(&changed));
        assert_eq!(config_hash(&base), config_hash(&base.clone()));
    }

    #[test]
    fn manifest_round_trips() {
        let manifest = RunManifest {
            config: TrainConfig::default(),
            dataset_fingerprint: "f".repeat(64),
            seed: 7,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            checkpoint_path: "checkpoint.ckpt".to_string(),
            metrics: MetricsSummary {
                epochs_completed: 3,
                final_svs: -0.5,
                final_sr: 0.1,
                final_ddc: 1.2,
                final_total: 0.3,
            },
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        save_manifest(&manifest, &path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.config, manifest.config);
        assert_eq!(loaded.dataset_fingerprint, manifest.dataset_fingerprint);
        assert_eq!(loaded.metrics.epochs_completed, 3);
    }
}
