//! Binary model checkpoints: an 8-byte magic, a length-prefixed JSON header
//! (dims, config hash, format version, block layout), then every parameter
//! block as raw little-endian 64-bit floats in the model's fixed block order.

use std::fs;
use std::path::Path;

use dsen_core::model::{Classifier, DsenModel, ProjectionNet};
use dsen_core::nn::LinearLayer;

use crate::error::CliError;

const MAGIC: &[u8; 8] = b"DSENCKP1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub attr_dim: usize,
    pub feat_dim: usize,
    pub hidden_dim: usize,
    pub n_seen_classes: usize,
    pub adapter: bool,
    /// Hash of the training configuration that produced the model; empty for
    /// checkpoints written outside a training run.
    pub config_hash: String,
    /// Block layout, in file order. Names and lengths are verified on load.
    pub blocks: Vec<BlockDesc>,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct BlockDesc {
    pub name: String,
    pub len: usize,
}

pub fn save_checkpoint(model: &DsenModel, config_hash: &str, path: &Path) -> Result<(), CliError> {
    fs::write(path, checkpoint_bytes(model, config_hash)?)?;
    Ok(())
}

/// Serializes a checkpoint without touching the filesystem.
pub fn checkpoint_bytes(model: &DsenModel, config_hash: &str) -> Result<Vec<u8>, CliError> {
    let blocks = model.param_blocks();
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        attr_dim: model.attr_dim,
        feat_dim: model.feat_dim,
        hidden_dim: model.hidden_dim,
        n_seen_classes: model.n_seen_classes,
        adapter: model.adapter.is_some(),
        config_hash: config_hash.to_string(),
        blocks: blocks
            .iter()
            .map(|(name, data)| BlockDesc {
                name: name.to_string(),
                len: data.len(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for (_, data) in &blocks {
        for &v in *data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_checkpoint(path: &Path) -> Result<(DsenModel, CheckpointHeader), CliError> {
    let raw = fs::read(path)
        .map_err(|e| CliError::Validation(format!("checkpoint {}: {e}", path.display())))?;
    let fail = |detail: &str| CliError::Validation(format!("checkpoint {}: {detail}", path.display()));
    if raw.len() < 12 || &raw[..8] != MAGIC {
        return Err(fail("missing or unrecognized magic bytes"));
    }
    let header_len = u32::from_le_bytes(raw[8..12].try_into().unwrap()) as usize;
    let body_start = 12 + header_len;
    if raw.len() < body_start {
        return Err(fail("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&raw[12..body_start])
        .map_err(|e| fail(&format!("malformed header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(fail(&format!(
            "unsupported format_version {}",
            header.format_version
        )));
    }

    let mut model = zeroed_model(&header);
    {
        let mut blocks = model.param_blocks_mut();
        if blocks.len() != header.blocks.len() {
            return Err(fail(&format!(
                "expected {} parameter blocks, header lists {}",
                blocks.len(),
                header.blocks.len()
            )));
        }
        let total: usize = header.blocks.iter().map(|b| b.len).sum();
        if raw.len() - body_start != total * 8 {
            return Err(fail(&format!(
                "expected {} parameter bytes, found {}",
                total * 8,
                raw.len() - body_start
            )));
        }
        let mut offset = body_start;
        for ((name, data), desc) in blocks.iter_mut().zip(&header.blocks) {
            if *name != desc.name || data.len() != desc.len {
                return Err(fail(&format!(
                    "block mismatch: expected {} with {} values, header has {} with {}",
                    name,
                    data.len(),
                    desc.name,
                    desc.len
                )));
            }
            for slot in data.iter_mut() {
                *slot = f64::from_le_bytes(raw[offset..offset + 8].try_into().unwrap());
                offset += 8;
            }
        }
    }
    Ok((model, header))
}

fn zeroed_model(h: &CheckpointHeader) -> DsenModel {
    DsenModel {
        phi_c: ProjectionNet::zeros(h.attr_dim, h.hidden_dim, h.feat_dim),
        phi_s: ProjectionNet::zeros(h.attr_dim, h.hidden_dim, h.feat_dim),
        phi_t: ProjectionNet::zeros(h.attr_dim, h.hidden_dim, h.feat_dim),
        phi_sr: ProjectionNet::zeros(h.feat_dim, h.hidden_dim, h.attr_dim),
        p: Classifier {
            linear: LinearLayer::zeros(h.feat_dim, h.n_seen_classes),
        },
        adapter: h.adapter.then(|| LinearLayer::identity(h.feat_dim)),
        attr_dim: h.attr_dim,
        feat_dim: h.feat_dim,
        hidden_dim: h.hidden_dim,
        n_seen_classes: h.n_seen_classes,
    }
}
