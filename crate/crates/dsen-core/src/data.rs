//! Dataset schema, validation, and a synthetic generator small enough to
//! make every end-to-end test runnable at desk scale.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::matrix::Matrix2D;

/// Per-sample split assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Features, labels, per-class attributes, and the domain/split assignment.
///
/// Class ids are dense indices `0..n_classes` into the attribute matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ZslDataset {
    pub features: Matrix2D,
    pub labels: Vec<usize>,
    pub attributes: Matrix2D,
    pub seen_classes: Vec<usize>,
    pub unseen_classes: Vec<usize>,
    pub split: Vec<Split>,
}

impl ZslDataset {
    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn feat_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn attr_dim(&self) -> usize {
        self.attributes.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.attributes.rows()
    }

    pub fn is_seen(&self, class_id: usize) -> bool {
        self.seen_classes.binary_search(&class_id).is_ok()
    }

    /// Attribute rows of the seen classes, in `seen_classes` order.
    pub fn seen_attrs(&self) -> Matrix2D {
        self.attributes.select_rows(&self.seen_classes)
    }

    /// Attribute rows of the unseen classes, in `unseen_classes` order.
    pub fn unseen_attrs(&self) -> Matrix2D {
        self.attributes.select_rows(&self.unseen_classes)
    }

    /// Maps a seen class id to its classifier column.
    pub fn seen_column(&self, class_id: usize) -> Option<usize> {
        self.seen_classes.binary_search(&class_id).ok()
    }

    pub fn sample_indices(&self, split: Split) -> Vec<usize> {
        (0..self.n_samples()).filter(|&i| self.split[i] == split).collect()
    }

    /// L2-normalizes every attribute row in place. Attributes are otherwise
    /// used exactly as stored; this is an experimental knob, off by default.
    /// Zero rows are left untouched (the validator flags them).
    pub fn normalize_attributes(&mut self) {
        for c in 0..self.attributes.rows() {
            let row = self.attributes.row_mut(c);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v /= norm;
                }
            }
        }
    }
}

/// Checks every dataset invariant; violations are returned, not thrown.
pub fn validate_dataset(ds: &ZslDataset) -> Vec<String> {
    let mut violations = Vec::new();
    if ds.labels.len() != ds.n_samples() {
        violations.push(format!(
            "label count {} does not match sample count {}",
            ds.labels.len(),
            ds.n_samples()
        ));
    }
    if ds.split.len() != ds.n_samples() {
        violations.push(format!(
            "split count {} does not match sample count {}",
            ds.split.len(),
            ds.n_samples()
        ));
    }
    for &c in &ds.seen_classes {
        if ds.unseen_classes.contains(&c) {
            violations.push(format!("class {c} appears in both seen and unseen sets"));
        }
        if c >= ds.n_classes() {
            violations.push(format!("seen class {c} has no attribute row"));
        }
    }
    for &c in &ds.unseen_classes {
        if c >= ds.n_classes() {
            violations.push(format!("unseen class {c} has no attribute row"));
        }
    }
    for (i, (&label, &split)) in ds.labels.iter().zip(&ds.split).enumerate() {
        if label >= ds.n_classes() {
            violations.push(format!("sample {i}: label {label} has no attribute row"));
        } else if !ds.seen_classes.contains(&label) && !ds.unseen_classes.contains(&label) {
            violations.push(format!(
                "sample {i}: label {label} is in neither the seen nor the unseen set"
            ));
        }
        if split == Split::Train && !ds.seen_classes.contains(&label) {
            violations.push(format!(
                "sample {i}: train split sample labeled with non-seen class {label}"
            ));
        }
    }
    for c in 0..ds.n_classes() {
        let norm_sq: f64 = ds.attributes.row(c).iter().map(|v| v * v).sum();
        if norm_sq == 0.0 {
            violations.push(format!("class {c}: attribute row has zero norm"));
        }
    }
    if !ds.features.is_finite() {
        violations.push(String::from("features contain NaN or infinite values"));
    }
    violations
}

/// Shape of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenSpec {
    pub n_seen: usize,
    pub n_unseen: usize,
    pub attr_dim: usize,
    pub feat_dim: usize,
    pub samples_per_class: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            n_seen: 10,
            n_unseen: 5,
            attr_dim: 16,
            feat_dim: 32,
            samples_per_class: 30,
            noise_std: 0.1,
            seed: 7,
        }
    }
}

/// Generates a synthetic zero-shot dataset.
///
/// Class attributes are unit-normalized Gaussians; a fixed random two-layer
/// map sends each class attribute to a class-mean feature vector, and samples
/// are that mean plus isotropic Gaussian noise. Seen-class samples are split
/// 80/20 into train/val; unseen-class samples all go to the test split.
/// The output is a pure function of the spec.
pub fn gen_synthetic(spec: &GenSpec) -> ZslDataset {
    assert!(spec.n_seen >= 1 && spec.n_unseen >= 1 && spec.samples_per_class >= 1);
    assert!(spec.noise_std >= 0.0);
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let n_classes = spec.n_seen + spec.n_unseen;

    // class attributes live on a shared low-rank subspace, mirroring the
    // strong correlations of real attribute vectors; the seen classes then
    // span the subspace, which is what makes unseen classes predictable at
    // all from seen ones
    let latent = (spec.n_seen / 2).clamp(2, spec.attr_dim);
    let mut basis = Matrix2D::zeros(spec.attr_dim, latent);
    for v in basis.data_mut() {
        *v = rng.sample::<f64, _>(StandardNormal);
    }
    let mut attributes = Matrix2D::zeros(n_classes, spec.attr_dim);
    for c in 0..n_classes {
        let z: Vec<f64> = (0..latent).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let row = attributes.row_mut(c);
        let mut norm_sq = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            *v = basis.row(j).iter().zip(&z).map(|(b, x)| b * x).sum();
            norm_sq += *v * *v;
        }
        let norm = norm_sq.sqrt();
        for v in row.iter_mut() {
            *v /= norm;
        }
    }

    // hidden random map from attributes to class-mean features
    let hidden = 64;
    let w1_std = (2.0 / spec.attr_dim as f64).sqrt();
    // the output scale is deliberately large so features resemble unnormalized
    // deep activations, whose norms dwarf the classifier's init scale
    let w2_std = 8.0 * (2.0 / hidden as f64).sqrt();
    let mut w1 = Matrix2D::zeros(hidden, spec.attr_dim);
    for v in w1.data_mut() {
        *v = rng.sample::<f64, _>(StandardNormal) * w1_std;
    }
    let mut w2 = Matrix2D::zeros(spec.feat_dim, hidden);
    for v in w2.data_mut() {
        *v = rng.sample::<f64, _>(StandardNormal) * w2_std;
    }
    let mut means = Matrix2D::zeros(n_classes, spec.feat_dim);
    for c in 0..n_classes {
        let a = attributes.row(c);
        let mut h = Vec::with_capacity(hidden);
        for j in 0..hidden {
            let pre: f64 = w1.row(j).iter().zip(a).map(|(w, x)| w * x).sum();
            h.push(pre.max(0.0));
        }
        for (k, slot) in means.row_mut(c).iter_mut().enumerate() {
            *slot = w2.row(k).iter().zip(&h).map(|(w, x)| w * x).sum();
        }
    }

    let n_samples = n_classes * spec.samples_per_class;
    let mut features = Matrix2D::zeros(n_samples, spec.feat_dim);
    let mut labels = Vec::with_capacity(n_samples);
    let mut split = Vec::with_capacity(n_samples);
    let mut idx = 0;
    for c in 0..n_classes {
        let seen = c < spec.n_seen;
        let n_train = (spec.samples_per_class * 4) / 5;
        let mut order: Vec<usize> = (0..spec.samples_per_class).collect();
        order.shuffle(&mut rng);
        for s in 0..spec.samples_per_class {
            let row = features.row_mut(idx);
            for (slot, m) in row.iter_mut().zip(means.row(c)) {
                let noise: f64 = rng.sample(StandardNormal);
                // quantized to f32 so the 32-bit on-disk format is lossless
                *slot = (m + spec.noise_std * noise) as f32 as f64;
            }
            labels.push(c);
            split.push(if !seen {
                Split::Test
            } else if order[s] < n_train {
                Split::Train
            } else {
                Split::Val
            });
            idx += 1;
        }
    }

    ZslDataset {
        features,
        labels,
        attributes,
        seen_classes: (0..spec.n_seen).collect(),
        unseen_classes: (spec.n_seen..n_classes).collect(),
        split,
    }
}
