//! The three training criteria and their weighted sum: semantic-visual
//! matching, semantic reconstruction, and domain division.
//!
//! Gradients are hand-derived for this fixed graph rather than produced by a
//! general autodiff tape; every forward pass that feeds a loss keeps the
//! activations its backward needs.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::DsenError;
use crate::matrix::Matrix2D;
use crate::model::{DsenGrads, DsenModel};
use crate::nn::{cosine_distance_clamped, cosine_distance_grad, softmax_rows};

/// Probabilities are floored at this value before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Balance weights of the overall objective.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 5.0,
            lambda2: 1.0,
            alpha: 0.1,
        }
    }
}

/// Which loss terms participate in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossToggles {
    pub svs: bool,
    pub sr: bool,
    pub ddc: bool,
}

impl LossToggles {
    /// Matching loss only; both domains share one effective projection.
    pub fn s2v() -> Self {
        LossToggles { svs: true, sr: false, ddc: false }
    }

    /// Matching plus semantic reconstruction.
    pub fn dsp() -> Self {
        LossToggles { svs: true, sr: true, ddc: false }
    }

    /// Matching plus the domain division constraint.
    pub fn ddc() -> Self {
        LossToggles { svs: true, sr: false, ddc: true }
    }

    /// All three criteria.
    pub fn dsen() -> Self {
        LossToggles { svs: true, sr: true, ddc: true }
    }

    pub fn any(&self) -> bool {
        self.svs || self.sr || self.ddc
    }

    /// True when a loss that reaches `phi_t` is enabled.
    pub fn uses_phi_t(&self) -> bool {
        self.sr || self.ddc
    }
}

/// Per-term (unweighted) loss values plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub svs: f64,
    pub sr: f64,
    pub ddc: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.svs.is_finite() && self.sr.is_finite() && self.ddc.is_finite() && self.total.is_finite()
    }
}

/// One training batch, referencing dataset storage.
///
/// `labels[i]` is a column index into the seen-class order, i.e. row `i` of
/// `seen_attrs` holds the attributes of seen column `i`. `features` are the
/// raw precomputed vectors, before the optional adapter.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub features: &'a Matrix2D,
    pub labels: &'a [usize],
    pub seen_attrs: &'a Matrix2D,
    pub unseen_attrs: &'a Matrix2D,
}

/// Mean negative cosine distance between per-sample features and the
/// embedding of each sample's ground-truth class.
///
/// Row `i` of `class_attrs_embedded` must already be the embedded attribute
/// vector of sample `i`'s class.
pub fn loss_svs(features: &Matrix2D, class_attrs_embedded: &Matrix2D) -> f64 {
    assert_eq!(features.shape(), class_attrs_embedded.shape());
    let n = features.rows();
    let mut acc = 0.0;
    for i in 0..n {
        acc += cosine_distance_clamped(features.row(i), class_attrs_embedded.row(i));
    }
    acc / n as f64
}

/// Mean squared reconstruction error of attributes over both class sets.
pub fn loss_sr(model: &DsenModel, seen_attrs: &Matrix2D, unseen_attrs: &Matrix2D) -> Result<f64, DsenError> {
    let total_classes = seen_attrs.rows() + unseen_attrs.rows();
    let mut acc = 0.0;
    if seen_attrs.rows() > 0 {
        let rec = model.decode(&model.embed_seen(seen_attrs)?)?;
        acc += squared_error_sum(&rec, seen_attrs);
    }
    if unseen_attrs.rows() > 0 {
        let rec = model.decode(&model.embed_unseen(unseen_attrs)?)?;
        acc += squared_error_sum(&rec, unseen_attrs);
    }
    Ok(acc / total_classes as f64)
}

fn squared_error_sum(a: &Matrix2D, b: &Matrix2D) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Cross-entropy on real seen features plus the uniformity penalty on pseudo
/// unseen features: `-mean ln p_y(f(x)) + alpha * mean ln max_y p_y(phi(a_t))`.
pub fn loss_ddc(
    model: &DsenModel,
    seen_features: &Matrix2D,
    labels: &[usize],
    unseen_attrs: &Matrix2D,
    alpha: f64,
) -> Result<f64, DsenError> {
    assert_eq!(seen_features.rows(), labels.len());
    let scores = model.classify_scores(&model.extract(seen_features)?)?;
    let n = labels.len() as f64;
    let mut seen_term = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        seen_term -= scores.get(i, y).max(PROB_FLOOR).ln();
    }
    seen_term /= n;
    let mut pseudo_term = 0.0;
    if unseen_attrs.rows() > 0 {
        let pseudo = model.embed_unseen(unseen_attrs)?;
        let pscores = model.classify_scores(&pseudo)?;
        for r in 0..pscores.rows() {
            let max = pscores.row(r).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            pseudo_term += max.max(PROB_FLOOR).ln();
        }
        pseudo_term *= alpha / unseen_attrs.rows() as f64;
    }
    Ok(seen_term + pseudo_term)
}

/// Weighted sum of the enabled terms; disabled terms contribute exactly zero.
pub fn total_loss(
    model: &DsenModel,
    batch: Batch<'_>,
    weights: &LossWeights,
    toggles: LossToggles,
) -> Result<LossBreakdown, DsenError> {
    total_loss_with_grads(model, batch, weights, toggles).map(|(b, _)| b)
}

/// Computes the weighted loss and the analytic gradient of the total wrt
/// every trainable parameter. Disabled terms produce no gradient at all.
pub fn total_loss_with_grads(
    model: &DsenModel,
    batch: Batch<'_>,
    weights: &LossWeights,
    toggles: LossToggles,
) -> Result<(LossBreakdown, DsenGrads), DsenError> {
    let mut grads = DsenGrads::zeros_like(model);
    let mut breakdown = LossBreakdown::default();

    // f(x): identity over precomputed features, or the linear adapter.
    let (feats, adapter_input) = match &model.adapter {
        Some(a) => (a.forward(batch.features)?, Some(batch.features)),
        None => (batch.features.clone(), None),
    };
    // gradient of the total wrt the extracted features, fed to the adapter
    let mut dfeats = Matrix2D::zeros(feats.rows(), feats.cols());

    if toggles.svs {
        breakdown.svs = accumulate_svs(model, &feats, batch, &mut grads, &mut dfeats)?;
    }
    if toggles.sr {
        breakdown.sr = accumulate_sr(model, batch, weights.lambda1, &mut grads)?;
    }
    if toggles.ddc {
        breakdown.ddc = accumulate_ddc(model, &feats, batch, weights, &mut grads, &mut dfeats)?;
    }

    if let (Some(adapter), Some(input), Some(agrads)) =
        (&model.adapter, adapter_input, grads.adapter.as_mut())
    {
        adapter.backward(input, &dfeats, agrads);
    }

    breakdown.total =
        breakdown.svs + weights.lambda1 * breakdown.sr + weights.lambda2 * breakdown.ddc;
    Ok((breakdown, grads))
}

/// Matching term: embeds every seen class once, then sums per-sample cosine
/// distances against the embedding of the sample's class.
fn accumulate_svs(
    model: &DsenModel,
    feats: &Matrix2D,
    batch: Batch<'_>,
    grads: &mut DsenGrads,
    dfeats: &mut Matrix2D,
) -> Result<f64, DsenError> {
    let n = batch.labels.len();
    let (es, cache_s) = model.phi_s.forward_cached(batch.seen_attrs)?;
    let (ec, cache_c) = model.phi_c.forward_cached(batch.seen_attrs)?;
    let emb = es.add(&ec)?;
    let mut demb = Matrix2D::zeros(emb.rows(), emb.cols());
    let mut acc = 0.0;
    let scale = 1.0 / n as f64;
    for (i, &y) in batch.labels.iter().enumerate() {
        let (d, gf, ge) = cosine_distance_grad(feats.row(i), emb.row(y));
        acc += d;
        for (slot, g) in dfeats.row_mut(i).iter_mut().zip(&gf) {
            *slot += scale * g;
        }
        for (slot, g) in demb.row_mut(y).iter_mut().zip(&ge) {
            *slot += scale * g;
        }
    }
    model.phi_s.backward(&cache_s, &demb, &mut grads.phi_s);
    model.phi_c.backward(&cache_c, &demb, &mut grads.phi_c);
    Ok(acc * scale)
}

/// Reconstruction term over both class sets, weighted by `lambda1` in the
/// gradient. The seen side touches only `phi_s`/`phi_c`/`phi_sr`, the unseen
/// side only `phi_t`/`phi_c`/`phi_sr`.
fn accumulate_sr(
    model: &DsenModel,
    batch: Batch<'_>,
    lambda1: f64,
    grads: &mut DsenGrads,
) -> Result<f64, DsenError> {
    let total_classes = batch.seen_attrs.rows() + batch.unseen_attrs.rows();
    let scale = lambda1 / total_classes as f64;
    let mut value = 0.0;

    if batch.seen_attrs.rows() > 0 {
        let (es, cache_s) = model.phi_s.forward_cached(batch.seen_attrs)?;
        let (ec, cache_c) = model.phi_c.forward_cached(batch.seen_attrs)?;
        let emb = es.add(&ec)?;
        let (rec, cache_sr) = model.phi_sr.forward_cached(&emb)?;
        value += squared_error_sum(&rec, batch.seen_attrs);
        let mut drec = Matrix2D::zeros(rec.rows(), rec.cols());
        for ((slot, r), a) in drec.data_mut().iter_mut().zip(rec.data()).zip(batch.seen_attrs.data()) {
            *slot = 2.0 * (r - a) * scale;
        }
        let demb = model.phi_sr.backward(&cache_sr, &drec, &mut grads.phi_sr);
        model.phi_s.backward(&cache_s, &demb, &mut grads.phi_s);
        model.phi_c.backward(&cache_c, &demb, &mut grads.phi_c);
    }
    if batch.unseen_attrs.rows() > 0 {
        let (et, cache_t) = model.phi_t.forward_cached(batch.unseen_attrs)?;
        let (ec, cache_c) = model.phi_c.forward_cached(batch.unseen_attrs)?;
        let emb = et.add(&ec)?;
        let (rec, cache_sr) = model.phi_sr.forward_cached(&emb)?;
        value += squared_error_sum(&rec, batch.unseen_attrs);
        let mut drec = Matrix2D::zeros(rec.rows(), rec.cols());
        for ((slot, r), a) in drec.data_mut().iter_mut().zip(rec.data()).zip(batch.unseen_attrs.data()) {
            *slot = 2.0 * (r - a) * scale;
        }
        let demb = model.phi_sr.backward(&cache_sr, &drec, &mut grads.phi_sr);
        model.phi_t.backward(&cache_t, &demb, &mut grads.phi_t);
        model.phi_c.backward(&cache_c, &demb, &mut grads.phi_c);
    }
    Ok(value / total_classes as f64)
}

/// Domain division term, weighted by `lambda2` in the gradient.
///
/// The pseudo features receive gradients into `phi_t` and `phi_c`; the max
/// classification score routes its subgradient through the argmax class,
/// ties broken by the lowest class index.
fn accumulate_ddc(
    model: &DsenModel,
    feats: &Matrix2D,
    batch: Batch<'_>,
    weights: &LossWeights,
    grads: &mut DsenGrads,
    dfeats: &mut Matrix2D,
) -> Result<f64, DsenError> {
    let n = batch.labels.len();
    let lambda2 = weights.lambda2;
    // seen cross-entropy
    let logits = model.p.linear.forward(feats)?;
    let probs = softmax_rows(&logits);
    let mut seen_term = 0.0;
    let mut dlogits = Matrix2D::zeros(logits.rows(), logits.cols());
    let scale = 1.0 / n as f64;
    for (i, &y) in batch.labels.iter().enumerate() {
        seen_term -= probs.get(i, y).max(PROB_FLOOR).ln();
        for (j, slot) in dlogits.row_mut(i).iter_mut().enumerate() {
            let indicator = if j == y { 1.0 } else { 0.0 };
            *slot = lambda2 * scale * (probs.get(i, j) - indicator);
        }
    }
    seen_term *= scale;
    let dfeats_from_p = model.p.linear.backward(feats, &dlogits, &mut grads.p);
    for (slot, g) in dfeats.data_mut().iter_mut().zip(dfeats_from_p.data()) {
        *slot += g;
    }

    // pseudo uniformity penalty
    let mut pseudo_term = 0.0;
    if batch.unseen_attrs.rows() > 0 {
        let (et, cache_t) = model.phi_t.forward_cached(batch.unseen_attrs)?;
        let (ec, cache_c) = model.phi_c.forward_cached(batch.unseen_attrs)?;
        let pseudo = et.add(&ec)?;
        let plogits = model.p.linear.forward(&pseudo)?;
        let pprobs = softmax_rows(&plogits);
        let pscale = weights.alpha / batch.unseen_attrs.rows() as f64;
        let mut dplogits = Matrix2D::zeros(plogits.rows(), plogits.cols());
        for r in 0..pprobs.rows() {
            let row = pprobs.row(r);
            let mut argmax = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[argmax] {
                    argmax = j;
                }
            }
            pseudo_term += row[argmax].max(PROB_FLOOR).ln();
            for (j, slot) in dplogits.row_mut(r).iter_mut().enumerate() {
                let indicator = if j == argmax { 1.0 } else { 0.0 };
                *slot = lambda2 * pscale * (indicator - row[j]);
            }
        }
        pseudo_term *= pscale;
        let dpseudo = model.p.linear.backward(&pseudo, &dplogits, &mut grads.p);
        model.phi_t.backward(&cache_t, &dpseudo, &mut grads.phi_t);
        model.phi_c.backward(&cache_c, &dpseudo, &mut grads.phi_c);
    }
    Ok(seen_term + pseudo_term)
}
