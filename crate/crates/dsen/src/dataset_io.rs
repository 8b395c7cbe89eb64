//! Dataset directory format.
//!
//! A dataset is a directory of four files:
//! - `meta.json`: shape and class-set metadata
//! - `features.f32`: raw little-endian 32-bit floats, row-major,
//!   `n_samples x feat_dim`, no header
//! - `labels.csv`: lines `sample_index,class_id,split`
//! - `attributes.csv`: lines `class_id,v1,...,v_attr_dim` in decimal text
//!
//! Features are 32-bit on disk and widened to 64-bit in memory; saving a
//! dataset whose features lie on the f32 grid and loading it back is
//! bit-exact. Attributes are written in shortest round-trip decimal form,
//! which is also exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dsen_core::data::{validate_dataset, Split, ZslDataset};
use dsen_core::matrix::Matrix2D;

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub n_samples: usize,
    pub feat_dim: usize,
    pub attr_dim: usize,
    pub n_classes: usize,
    pub seen_class_ids: Vec<usize>,
    pub unseen_class_ids: Vec<usize>,
}

fn fail(file: &str, detail: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{file}: {detail}"))
}

/// Writes the four dataset files into `dir`, creating it if needed.
pub fn save_dataset(ds: &ZslDataset, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let meta = DatasetMeta {
        format_version: FORMAT_VERSION,
        n_samples: ds.n_samples(),
        feat_dim: ds.feat_dim(),
        attr_dim: ds.attr_dim(),
        n_classes: ds.n_classes(),
        seen_class_ids: ds.seen_classes.clone(),
        unseen_class_ids: ds.unseen_classes.clone(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;

    let mut raw = Vec::with_capacity(ds.n_samples() * ds.feat_dim() * 4);
    for &v in ds.features.data() {
        raw.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(dir.join("features.f32"), raw)?;

    let mut labels = String::new();
    for i in 0..ds.n_samples() {
        writeln!(labels, "{},{},{}", i, ds.labels[i], ds.split[i].as_str()).unwrap();
    }
    fs::write(dir.join("labels.csv"), labels)?;

    let mut attrs = String::new();
    for c in 0..ds.n_classes() {
        write!(attrs, "{c}").unwrap();
        for v in ds.attributes.row(c) {
            write!(attrs, ",{v}").unwrap();
        }
        attrs.push('\n');
    }
    fs::write(dir.join("attributes.csv"), attrs)?;
    Ok(())
}

/// Loads and validates a dataset directory. Any malformed file or violated
/// invariant is an error naming the file, the line where applicable, and the
/// broken rule.
pub fn load_dataset(dir: &Path) -> Result<ZslDataset, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Validation(format!(
            "dataset directory not found: {}",
            dir.display()
        )));
    }
    let meta_raw = fs::read_to_string(dir.join("meta.json"))
        .map_err(|e| fail("meta.json", e))?;
    let meta: DatasetMeta =
        serde_json::from_str(&meta_raw).map_err(|e| fail("meta.json", e))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(fail(
            "meta.json",
            format!("unsupported format_version {}", meta.format_version),
        ));
    }

    let raw = fs::read(dir.join("features.f32")).map_err(|e| fail("features.f32", e))?;
    let expected = meta.n_samples * meta.feat_dim * 4;
    if raw.len() != expected {
        return Err(fail(
            "features.f32",
            format!(
                "expected {expected} bytes for {} x {} f32 values, found {}",
                meta.n_samples,
                meta.feat_dim,
                raw.len()
            ),
        ));
    }
    let mut features = Matrix2D::zeros(meta.n_samples, meta.feat_dim);
    for (slot, chunk) in features.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
        *slot = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
    }

    let labels_raw =
        fs::read_to_string(dir.join("labels.csv")).map_err(|e| fail("labels.csv", e))?;
    let mut labels = vec![None; meta.n_samples];
    let mut split = vec![Split::Train; meta.n_samples];
    for (lineno, line) in labels_raw.lines().enumerate() {
        let err = |rule: &str| fail("labels.csv", format!("line {}: {rule}", lineno + 1));
        let mut parts = line.split(',');
        let idx: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("sample_index is not an integer"))?;
        let class: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("class_id is not an integer"))?;
        let sp = parts
            .next()
            .and_then(Split::parse)
            .ok_or_else(|| err("split is not one of train/val/test"))?;
        if parts.next().is_some() {
            return Err(err("expected exactly three fields"));
        }
        if idx >= meta.n_samples {
            return Err(err("sample_index out of range"));
        }
        if labels[idx].is_some() {
            return Err(err("duplicate sample_index"));
        }
        labels[idx] = Some(class);
        split[idx] = sp;
    }
    let labels: Vec<usize> = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| fail("labels.csv", format!("sample {i} has no row"))))
        .collect::<Result<_, _>>()?;

    let attrs_raw =
        fs::read_to_string(dir.join("attributes.csv")).map_err(|e| fail("attributes.csv", e))?;
    let mut attributes = Matrix2D::zeros(meta.n_classes, meta.attr_dim);
    let mut seen_rows = vec![false; meta.n_classes];
    for (lineno, line) in attrs_raw.lines().enumerate() {
        let err = |rule: String| fail("attributes.csv", format!("line {}: {rule}", lineno + 1));
        let mut parts = line.split(',');
        let class: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("class_id is not an integer".into()))?;
        if class >= meta.n_classes {
            return Err(err(format!("unknown class id {class}")));
        }
        if seen_rows[class] {
            return Err(err(format!("duplicate row for class {class}")));
        }
        seen_rows[class] = true;
        let row = attributes.row_mut(class);
        let mut count = 0;
        for part in parts {
            if count >= meta.attr_dim {
                return Err(err(format!("more than {} attribute values", meta.attr_dim)));
            }
            row[count] = part
                .parse()
                .map_err(|_| err(format!("value {} is not a number", count + 1)))?;
            count += 1;
        }
        if count != meta.attr_dim {
            return Err(err(format!(
                "expected {} attribute values, found {count}",
                meta.attr_dim
            )));
        }
    }
    if let Some(c) = seen_rows.iter().position(|&s| !s) {
        return Err(fail("attributes.csv", format!("class {c} has no row")));
    }

    let ds = ZslDataset {
        features,
        labels,
        attributes,
        seen_classes: meta.seen_class_ids,
        unseen_classes: meta.unseen_class_ids,
        split,
    };
    let violations = validate_dataset(&ds);
    if !violations.is_empty() {
        return Err(CliError::Validation(format!(
            "dataset in {} failed validation: {}",
            dir.display(),
            violations.join("; ")
        )));
    }
    Ok(ds)
}
