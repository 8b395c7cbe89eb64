//! Deterministic two-phase training driver with baseline toggles, warm
//! start of the unseen head, batching, and per-epoch reporting.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::data::{validate_dataset, Split, ZslDataset};
use crate::error::DsenError;
use crate::losses::{total_loss_with_grads, Batch, LossToggles, LossWeights};
use crate::model::DsenModel;
use crate::nn::AdamState;

/// Full training configuration. Defaults follow the reference protocol:
/// Adam with betas (0.5, 0.999), weight decay 5e-5, a large first-phase
/// learning rate of 1e-3 and a small second-phase rate of 1e-5.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub toggles: LossToggles,
    pub weights: LossWeights,
    pub phase1_lr: f64,
    pub phase2_lr: f64,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    /// Epoch at which `phi_t` is warm-started from `phi_s`; defaults to half
    /// of `phase1_epochs` when unset.
    pub warm_start_epoch: Option<usize>,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub adam_eps: f64,
    pub decay_biases: bool,
    pub hidden_dim: usize,
    pub seed: u64,
    pub adapter_enabled: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            toggles: LossToggles::dsen(),
            weights: LossWeights::default(),
            phase1_lr: 1e-3,
            phase2_lr: 1e-5,
            phase1_epochs: 60,
            phase2_epochs: 0,
            warm_start_epoch: None,
            batch_size: 64,
            beta1: 0.5,
            beta2: 0.999,
            weight_decay: 5e-5,
            adam_eps: 1e-8,
            decay_biases: false,
            hidden_dim: 1024,
            seed: 0,
            adapter_enabled: false,
        }
    }
}

impl TrainConfig {
    pub fn warm_start_epoch(&self) -> usize {
        self.warm_start_epoch.unwrap_or(self.phase1_epochs / 2)
    }

    pub fn validate(&self) -> Result<(), DsenError> {
        if !(self.phase1_lr > 0.0 && self.phase2_lr > 0.0) {
            return Err(DsenError::InvalidConfig {
                reason: String::from("learning rates must be positive"),
            });
        }
        if self.batch_size < 1 {
            return Err(DsenError::InvalidConfig {
                reason: String::from("batch size must be at least 1"),
            });
        }
        if !self.toggles.any() {
            return Err(DsenError::InvalidConfig {
                reason: String::from("at least one loss toggle must be enabled"),
            });
        }
        Ok(())
    }
}

/// One completed epoch: mean loss terms over its batches.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub lr: f64,
    pub svs: f64,
    pub sr: f64,
    pub ddc: f64,
    pub total: f64,
    /// Wall time is informational only and is excluded from reproducible
    /// log output.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub wall_time_s: f64,
}

/// Training phase a completed epoch belonged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Phase {
    A,
    B,
    C,
}

/// One record per completed epoch.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

/// A seeded permutation of `0..n` cut into batches; the last batch may be
/// short. Depends only on `(seed, epoch)`.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(n >= 1 && batch_size >= 1);
    let mix = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha12Rng::seed_from_u64(mix);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Which parameter blocks a training step may update.
///
/// Each loss only reaches a subset of the heads; blocks outside the union of
/// the enabled losses stay at initialization, including their optimizer
/// moments. The adapter trains only in the final phase.
fn block_active(name: &str, toggles: LossToggles, phase_a: bool, adapter_phase: bool) -> bool {
    if name.starts_with("adapter") {
        return adapter_phase;
    }
    if phase_a && name.starts_with("phi_t") {
        return false;
    }
    let mut active = false;
    if toggles.svs {
        active |= name.starts_with("phi_c") || name.starts_with("phi_s.");
    }
    if toggles.sr {
        active |= name.starts_with("phi_c")
            || name.starts_with("phi_s.")
            || name.starts_with("phi_t")
            || name.starts_with("phi_sr");
    }
    if toggles.ddc {
        active |= name.starts_with("phi_c") || name.starts_with("phi_t") || name.starts_with("p.");
    }
    active
}

/// Trains a freshly initialized model on the dataset's train split.
///
/// Phase A runs with `phase1_lr` and `phi_t` frozen; at the warm-start epoch
/// `phi_t` is copied from `phi_s` (skipped when no enabled loss reaches
/// `phi_t`), and phase B trains all enabled heads for the rest of
/// `phase1_epochs`. Phase C, when the adapter is enabled, continues with
/// `phase2_lr` over the adapter and all enabled heads. Identical inputs
/// produce bit-identical models and reports.
pub fn train(dataset: &ZslDataset, config: &TrainConfig) -> Result<(DsenModel, TrainReport), DsenError> {
    train_with_observer(dataset, config, &mut |_, _| {})
}

/// Like [`train`], invoking `observer` with the model after every completed
/// epoch. Checkpointing at phase boundaries hangs off this hook.
pub fn train_with_observer(
    dataset: &ZslDataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&DsenModel, &EpochRecord),
) -> Result<(DsenModel, TrainReport), DsenError> {
    config.validate()?;
    let violations = validate_dataset(dataset);
    if !violations.is_empty() {
        return Err(DsenError::InvalidConfig {
            reason: format!("dataset invalid: {}", violations[0]),
        });
    }
    let train_idx = dataset.sample_indices(Split::Train);
    if train_idx.is_empty() {
        return Err(DsenError::InvalidConfig {
            reason: String::from("empty seen training split"),
        });
    }

    let seen_attrs = dataset.seen_attrs();
    let unseen_attrs = dataset.unseen_attrs();
    let label_cols: Vec<usize> = train_idx
        .iter()
        .map(|&i| dataset.seen_column(dataset.labels[i]).expect("validated"))
        .collect();

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut model = DsenModel::new(
        dataset.attr_dim(),
        dataset.feat_dim(),
        config.hidden_dim,
        dataset.seen_classes.len(),
        config.adapter_enabled,
        &mut rng,
    );

    let mut adam = AdamState::new(
        config.phase1_lr,
        config.beta1,
        config.beta2,
        config.adam_eps,
        config.weight_decay,
    );
    adam.decay_biases = config.decay_biases;

    let warm_start = config.warm_start_epoch();
    let mut report = TrainReport::default();
    let total_epochs = config.phase1_epochs + if config.adapter_enabled { config.phase2_epochs } else { 0 };

    for epoch in 0..total_epochs {
        let phase_c = epoch >= config.phase1_epochs;
        let phase_a = !phase_c && epoch < warm_start;
        if !phase_c && epoch == warm_start && config.toggles.uses_phi_t() {
            model.warm_start_unseen();
        }
        if phase_c && epoch == config.phase1_epochs {
            adam.lr = config.phase2_lr;
        }
        let phase = if phase_c {
            Phase::C
        } else if phase_a {
            Phase::A
        } else {
            Phase::B
        };

        #[cfg(feature = "std")]
        let start = std::time::Instant::now();

        let mut sums = [0.0f64; 4];
        let batches = make_batches(train_idx.len(), config.batch_size, config.seed, epoch);
        let n_batches = batches.len();
        for batch_ids in &batches {
            let rows: Vec<usize> = batch_ids.iter().map(|&k| train_idx[k]).collect();
            let feats = dataset.features.select_rows(&rows);
            let labels: Vec<usize> = batch_ids.iter().map(|&k| label_cols[k]).collect();
            let batch = Batch {
                features: &feats,
                labels: &labels,
                seen_attrs: &seen_attrs,
                unseen_attrs: &unseen_attrs,
            };
            let (breakdown, grads) = total_loss_with_grads(&model, batch, &config.weights, config.toggles)?;
            if !breakdown.is_finite() {
                let term = if !breakdown.svs.is_finite() {
                    "svs"
                } else if !breakdown.sr.is_finite() {
                    "sr"
                } else {
                    "ddc"
                };
                return Err(DsenError::NonFiniteLoss { term, epoch });
            }
            sums[0] += breakdown.svs;
            sums[1] += breakdown.sr;
            sums[2] += breakdown.ddc;
            sums[3] += breakdown.total;

            let grad_blocks = grads.blocks();
            let active: Vec<bool> = grad_blocks
                .iter()
                .map(|(name, _)| block_active(name, config.toggles, phase_a, phase_c))
                .collect();
            let mut param_blocks = model.param_blocks_mut();
            adam.step(&mut param_blocks, &grad_blocks, &active)?;
        }

        #[cfg(feature = "std")]
        let wall = start.elapsed().as_secs_f64();
        #[cfg(not(feature = "std"))]
        let wall = 0.0;

        let record = EpochRecord {
            epoch,
            phase,
            lr: adam.lr,
            svs: sums[0] / n_batches as f64,
            sr: sums[1] / n_batches as f64,
            ddc: sums[2] / n_batches as f64,
            total: sums[3] / n_batches as f64,
            wall_time_s: wall,
        };
        observer(&model, &record);
        report.epochs.push(record);
    }

    Ok((model, report))
}
