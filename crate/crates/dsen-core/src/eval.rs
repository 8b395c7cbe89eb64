//! Thresholded two-branch prediction and the full evaluation protocol:
//! per-class accuracy, harmonic mean, threshold sweeps, and max-score
//! histograms.

use alloc::vec::Vec;

use crate::data::{Split, ZslDataset};
use crate::error::DsenError;
use crate::matrix::Matrix2D;
use crate::model::DsenModel;
use crate::nn::cosine_distance_clamped;

/// Which classifier produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Branch {
    SeenSoftmax,
    UnseenRanking,
}

/// A routed prediction for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prediction {
    pub class_id: usize,
    pub branch: Branch,
    /// Maximum softmax score over the seen classes.
    pub max_seen_score: f64,
}

/// Caches the unseen-class embeddings so per-sample prediction stays cheap.
pub struct Predictor<'a> {
    model: &'a DsenModel,
    seen_classes: &'a [usize],
    unseen_classes: &'a [usize],
    unseen_embeddings: Matrix2D,
}

impl<'a> Predictor<'a> {
    pub fn new(
        model: &'a DsenModel,
        seen_classes: &'a [usize],
        unseen_classes: &'a [usize],
        unseen_attrs: &Matrix2D,
    ) -> Result<Self, DsenError> {
        assert_eq!(unseen_classes.len(), unseen_attrs.rows());
        let unseen_embeddings = if unseen_attrs.rows() > 0 {
            model.embed_unseen(unseen_attrs)?
        } else {
            Matrix2D::zeros(0, model.feat_dim)
        };
        Ok(Predictor {
            model,
            seen_classes,
            unseen_classes,
            unseen_embeddings,
        })
    }

    pub fn for_dataset(model: &'a DsenModel, dataset: &'a ZslDataset) -> Result<Self, DsenError> {
        Predictor::new(
            model,
            &dataset.seen_classes,
            &dataset.unseen_classes,
            &dataset.unseen_attrs(),
        )
    }

    /// Routed parts of a prediction, before thresholding: the max seen score,
    /// the seen-branch class, and the ranking-branch class (when available).
    fn branch_candidates(&self, feature: &[f64]) -> Result<(f64, usize, Option<usize>), DsenError> {
        let input = Matrix2D::from_rows(&[feature]);
        let feats = self.model.extract(&input)?;
        let scores = self.model.classify_scores(&feats)?;
        let row = scores.row(0);
        let mut argmax = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[argmax] {
                argmax = j;
            }
        }
        let seen_class = self.seen_classes[argmax];
        let unseen_class = if self.unseen_embeddings.rows() > 0 {
            let f = feats.row(0);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for r in 0..self.unseen_embeddings.rows() {
                let d = cosine_distance_clamped(f, self.unseen_embeddings.row(r));
                if d < best_d {
                    best_d = d;
                    best = r;
                }
            }
            Some(self.unseen_classes[best])
        } else {
            None
        };
        Ok((row[argmax], seen_class, unseen_class))
    }

    /// The seen softmax branch when the max score strictly exceeds `tau`,
    /// the unseen cosine-ranking branch otherwise. Ties broken by the lowest
    /// class index on both branches.
    pub fn predict(&self, feature: &[f64], tau: f64) -> Result<Prediction, DsenError> {
        let (p_hat, seen_class, unseen_class) = self.branch_candidates(feature)?;
        if p_hat > tau {
            Ok(Prediction {
                class_id: seen_class,
                branch: Branch::SeenSoftmax,
                max_seen_score: p_hat,
            })
        } else {
            let class_id = unseen_class.ok_or(DsenError::EmptyUnseenSet)?;
            Ok(Prediction {
                class_id,
                branch: Branch::UnseenRanking,
                max_seen_score: p_hat,
            })
        }
    }
}

/// Unweighted mean over `class_set` of per-class top-1 accuracy.
pub fn mca(predicted: &[usize], labels: &[usize], class_set: &[usize]) -> Result<f64, DsenError> {
    assert_eq!(predicted.len(), labels.len());
    let mut acc = 0.0;
    for &c in class_set {
        let mut n = 0usize;
        let mut correct = 0usize;
        for (&p, &y) in predicted.iter().zip(labels) {
            if y == c {
                n += 1;
                if p == c {
                    correct += 1;
                }
            }
        }
        if n == 0 {
            return Err(DsenError::EmptyClass { class_id: c });
        }
        acc += correct as f64 / n as f64;
    }
    Ok(acc / class_set.len() as f64)
}

/// `H = 2 * mca_t * mca_s / (mca_t + mca_s)`, with `H(0, 0) = 0`.
pub fn harmonic_mean(mca_t: f64, mca_s: f64) -> f64 {
    if mca_t + mca_s == 0.0 {
        0.0
    } else {
        2.0 * mca_t * mca_s / (mca_t + mca_s)
    }
}

/// Per-class accuracy entry of an evaluation report.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassAccuracy {
    pub class_id: usize,
    pub seen: bool,
    pub samples: usize,
    pub correct: usize,
}

/// How samples of each domain were routed between the two branches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BranchConfusion {
    pub seen_to_softmax: usize,
    pub seen_to_ranking: usize,
    pub unseen_to_softmax: usize,
    pub unseen_to_ranking: usize,
}

/// Metrics over the seen-eval (val) and unseen-eval (test) splits.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalResult {
    pub tau: f64,
    /// Absent in conventional mode, where only the unseen split is scored.
    pub mca_s: Option<f64>,
    pub mca_t: f64,
    pub h: Option<f64>,
    pub per_class: Vec<ClassAccuracy>,
    pub branch_confusion: BranchConfusion,
}

struct RoutedSample {
    label: usize,
    p_hat: f64,
    seen_pred: usize,
    unseen_pred: Option<usize>,
    seen_domain: bool,
}

fn route_samples(
    model: &DsenModel,
    dataset: &ZslDataset,
    conventional: bool,
) -> Result<Vec<RoutedSample>, DsenError> {
    let predictor = Predictor::for_dataset(model, dataset)?;
    let mut routed = Vec::new();
    if !conventional {
        for i in dataset.sample_indices(Split::Val) {
            if !dataset.is_seen(dataset.labels[i]) {
                continue;
            }
            let (p_hat, seen_pred, unseen_pred) = predictor.branch_candidates(dataset.features.row(i))?;
            routed.push(RoutedSample {
                label: dataset.labels[i],
                p_hat,
                seen_pred,
                unseen_pred,
                seen_domain: true,
            });
        }
    }
    for i in dataset.sample_indices(Split::Test) {
        if dataset.is_seen(dataset.labels[i]) {
            continue;
        }
        let (p_hat, seen_pred, unseen_pred) = predictor.branch_candidates(dataset.features.row(i))?;
        routed.push(RoutedSample {
            label: dataset.labels[i],
            p_hat,
            seen_pred,
            unseen_pred,
            seen_domain: false,
        });
    }
    Ok(routed)
}

fn metrics_at_tau(
    routed: &[RoutedSample],
    dataset: &ZslDataset,
    tau: f64,
    conventional: bool,
) -> Result<EvalResult, DsenError> {
    let mut per_class: Vec<ClassAccuracy> = Vec::new();
    let mut confusion = BranchConfusion::default();
    let mut seen_preds = Vec::new();
    let mut seen_labels = Vec::new();
    let mut unseen_preds = Vec::new();
    let mut unseen_labels = Vec::new();
    for s in routed {
        let use_seen_branch = !conventional && s.p_hat > tau;
        let pred = if use_seen_branch {
            s.seen_pred
        } else {
            s.unseen_pred.ok_or(DsenError::EmptyUnseenSet)?
        };
        match (s.seen_domain, use_seen_branch) {
            (true, true) => confusion.seen_to_softmax += 1,
            (true, false) => confusion.seen_to_ranking += 1,
            (false, true) => confusion.unseen_to_softmax += 1,
            (false, false) => confusion.unseen_to_ranking += 1,
        }
        if s.seen_domain {
            seen_preds.push(pred);
            seen_labels.push(s.label);
        } else {
            unseen_preds.push(pred);
            unseen_labels.push(s.label);
        }
        match per_class.iter_mut().find(|c| c.class_id == s.label) {
            Some(entry) => {
                entry.samples += 1;
                entry.correct += (pred == s.label) as usize;
            }
            None => per_class.push(ClassAccuracy {
                class_id: s.label,
                seen: s.seen_domain,
                samples: 1,
                correct: (pred == s.label) as usize,
            }),
        }
    }
    per_class.sort_by_key(|c| c.class_id);

    let seen_set: Vec<usize> = dataset
        .seen_classes
        .iter()
        .copied()
        .filter(|c| seen_labels.contains(c))
        .collect();
    let unseen_set: Vec<usize> = dataset
        .unseen_classes
        .iter()
        .copied()
        .filter(|c| unseen_labels.contains(c))
        .collect();
    if unseen_set.is_empty() {
        return Err(DsenError::InvalidConfig {
            reason: alloc::string::String::from("no unseen-class samples in the test split"),
        });
    }
    let mca_t = mca(&unseen_preds, &unseen_labels, &unseen_set)?;
    let (mca_s, h) = if conventional {
        (None, None)
    } else {
        if seen_set.is_empty() {
            return Err(DsenError::InvalidConfig {
                reason: alloc::string::String::from("no seen-class samples in the val split"),
            });
        }
        let mca_s = mca(&seen_preds, &seen_labels, &seen_set)?;
        (Some(mca_s), Some(harmonic_mean(mca_t, mca_s)))
    };
    Ok(EvalResult {
        tau,
        mca_s,
        mca_t,
        h,
        per_class,
        branch_confusion: confusion,
    })
}

/// Scores the seen-eval (val) and unseen-eval (test) splits at threshold
/// `tau`. In conventional mode only the unseen split is scored and every
/// sample uses the ranking branch.
pub fn evaluate(
    model: &DsenModel,
    dataset: &ZslDataset,
    tau: f64,
    conventional: bool,
) -> Result<EvalResult, DsenError> {
    let routed = route_samples(model, dataset, conventional)?;
    metrics_at_tau(&routed, dataset, tau, conventional)
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub tau: f64,
    pub mca_s: f64,
    pub mca_t: f64,
    pub h: f64,
}

/// Evaluates every threshold in the (ascending) grid. Branch candidates are
/// computed once per sample, so rows differ only in routing.
pub fn sweep_tau(
    model: &DsenModel,
    dataset: &ZslDataset,
    tau_grid: &[f64],
) -> Result<Vec<SweepRow>, DsenError> {
    let routed = route_samples(model, dataset, false)?;
    let mut rows = Vec::with_capacity(tau_grid.len());
    for &tau in tau_grid {
        let r = metrics_at_tau(&routed, dataset, tau, false)?;
        rows.push(SweepRow {
            tau,
            mca_s: r.mca_s.unwrap_or(0.0),
            mca_t: r.mca_t,
            h: r.h.unwrap_or(0.0),
        });
    }
    Ok(rows)
}

/// `0.0, 0.05, ..., 1.0`.
pub fn default_tau_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

/// One histogram bin of max-classification-score values.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub percent: f64,
}

/// Histogram of max seen-class scores over the given features.
///
/// Bins are `[lo, hi)` except the last, which includes its upper edge.
pub fn score_histogram(
    model: &DsenModel,
    features: &Matrix2D,
    bin_edges: &[f64],
) -> Result<Vec<HistBin>, DsenError> {
    assert!(bin_edges.len() >= 2, "need at least two bin edges");
    assert!(bin_edges.windows(2).all(|w| w[0] < w[1]), "bin edges must ascend");
    let feats = model.extract(features)?;
    let scores = model.classify_scores(&feats)?;
    let n_bins = bin_edges.len() - 1;
    let mut counts = alloc::vec![0usize; n_bins];
    for r in 0..scores.rows() {
        let p_hat = scores.row(r).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut bin = n_bins - 1;
        for b in 0..n_bins {
            let last = b == n_bins - 1;
            if p_hat >= bin_edges[b] && (p_hat < bin_edges[b + 1] || (last && p_hat <= bin_edges[b + 1])) {
                bin = b;
                break;
            }
        }
        counts[bin] += 1;
    }
    let total = scores.rows() as f64;
    Ok((0..n_bins)
        .map(|b| HistBin {
            lo: bin_edges[b],
            hi: bin_edges[b + 1],
            count: counts[b],
            percent: 100.0 * counts[b] as f64 / total,
        })
        .collect())
}

/// Domain tag for exported class embeddings.
pub const DOMAIN_SEEN: &str = "seen";
/// Domain tag for exported class embeddings.
pub const DOMAIN_UNSEEN: &str = "unseen";

/// One exported class embedding row.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddingRow {
    pub class_id: usize,
    pub domain: &'static str,
    pub values: Vec<f64>,
}

/// Embeds every class attribute through its domain branch, for external
/// visualization tooling.
pub fn class_embeddings(model: &DsenModel, dataset: &ZslDataset) -> Result<Vec<EmbeddingRow>, DsenError> {
    let mut rows = Vec::new();
    let seen = model.embed_seen(&dataset.seen_attrs())?;
    for (i, &c) in dataset.seen_classes.iter().enumerate() {
        rows.push(EmbeddingRow {
            class_id: c,
            domain: DOMAIN_SEEN,
            values: seen.row(i).to_vec(),
        });
    }
    let unseen = model.embed_unseen(&dataset.unseen_attrs())?;
    for (i, &c) in dataset.unseen_classes.iter().enumerate() {
        rows.push(EmbeddingRow {
            class_id: c,
            domain: DOMAIN_UNSEEN,
            values: unseen.row(i).to_vec(),
        });
    }
    Ok(rows)
}
