//! The full parameter bundle: three semantic-to-visual projection heads,
//! the shared attribute decoder, the seen-class softmax classifier, and an
//! optional linear feature adapter.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::DsenError;
use crate::matrix::Matrix2D;
use crate::nn::{relu, relu_backward, softmax_rows, LinearGrads, LinearLayer};

/// Two fully connected layers with a ReLU in between and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionNet {
    pub layer1: LinearLayer,
    pub layer2: LinearLayer,
}

/// Activations recorded by [`ProjectionNet::forward_cached`], consumed by
/// [`ProjectionNet::backward`].
#[derive(Debug, Clone)]
pub struct ProjectionCache {
    input: Matrix2D,
    pre1: Matrix2D,
    hidden: Matrix2D,
}

impl ProjectionNet {
    pub fn msra<R: Rng>(in_dim: usize, hidden_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        ProjectionNet {
            layer1: LinearLayer::msra(in_dim, hidden_dim, rng),
            layer2: LinearLayer::msra(hidden_dim, out_dim, rng),
        }
    }

    pub fn zeros(in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        ProjectionNet {
            layer1: LinearLayer::zeros(in_dim, hidden_dim),
            layer2: LinearLayer::zeros(hidden_dim, out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layer1.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layer2.out_dim()
    }

    pub fn forward(&self, input: &Matrix2D) -> Result<Matrix2D, DsenError> {
        let pre1 = self.layer1.forward(input)?;
        self.layer2.forward(&relu(&pre1))
    }

    /// Forward pass that keeps the activations needed for the backward pass.
    pub fn forward_cached(&self, input: &Matrix2D) -> Result<(Matrix2D, ProjectionCache), DsenError> {
        let pre1 = self.layer1.forward(input)?;
        let hidden = relu(&pre1);
        let out = self.layer2.forward(&hidden)?;
        Ok((
            out,
            ProjectionCache {
                input: input.clone(),
                pre1,
                hidden,
            },
        ))
    }

    /// Accumulates parameter gradients for this net and returns the gradient
    /// wrt its input.
    pub fn backward(&self, cache: &ProjectionCache, dout: &Matrix2D, grads: &mut ProjectionGrads) -> Matrix2D {
        let dhidden = self.layer2.backward(&cache.hidden, dout, &mut grads.layer2);
        let dpre1 = relu_backward(&cache.pre1, &dhidden);
        self.layer1.backward(&cache.input, &dpre1, &mut grads.layer1)
    }
}

/// Gradient accumulator matching a `ProjectionNet`.
#[derive(Debug, Clone)]
pub struct ProjectionGrads {
    pub layer1: LinearGrads,
    pub layer2: LinearGrads,
}

impl ProjectionGrads {
    pub fn zeros_like(net: &ProjectionNet) -> Self {
        ProjectionGrads {
            layer1: LinearGrads::zeros_like(&net.layer1),
            layer2: LinearGrads::zeros_like(&net.layer2),
        }
    }
}

/// Linear softmax classifier over the seen classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub linear: LinearLayer,
}

impl Classifier {
    pub fn n_classes(&self) -> usize {
        self.linear.out_dim()
    }
}

/// Complete trainable state of the embedding network.
///
/// `phi_c` is shared across domains, `phi_s`/`phi_t` are the seen/unseen
/// specific heads, `phi_sr` decodes embeddings back to attribute space, and
/// `p` is the seen-class classifier. The optional `adapter` is a square
/// linear map standing in for a trainable feature extractor; when absent the
/// extractor is the identity over the precomputed features.
#[derive(Debug, Clone, PartialEq)]
pub struct DsenModel {
    pub phi_c: ProjectionNet,
    pub phi_s: ProjectionNet,
    pub phi_t: ProjectionNet,
    pub phi_sr: ProjectionNet,
    pub p: Classifier,
    pub adapter: Option<LinearLayer>,
    pub attr_dim: usize,
    pub feat_dim: usize,
    pub hidden_dim: usize,
    pub n_seen_classes: usize,
}

impl DsenModel {
    pub fn new<R: Rng>(
        attr_dim: usize,
        feat_dim: usize,
        hidden_dim: usize,
        n_seen_classes: usize,
        adapter_enabled: bool,
        rng: &mut R,
    ) -> Self {
        DsenModel {
            phi_c: ProjectionNet::msra(attr_dim, hidden_dim, feat_dim, rng),
            phi_s: ProjectionNet::msra(attr_dim, hidden_dim, feat_dim, rng),
            phi_t: ProjectionNet::msra(attr_dim, hidden_dim, feat_dim, rng),
            phi_sr: ProjectionNet::msra(feat_dim, hidden_dim, attr_dim, rng),
            p: Classifier {
                linear: LinearLayer::msra(feat_dim, n_seen_classes, rng),
            },
            adapter: adapter_enabled.then(|| LinearLayer::identity(feat_dim)),
            attr_dim,
            feat_dim,
            hidden_dim,
            n_seen_classes,
        }
    }

    /// Seen-domain embedding `phi_s(a) + phi_c(a)` per attribute row.
    pub fn embed_seen(&self, attrs: &Matrix2D) -> Result<Matrix2D, DsenError> {
        self.phi_s.forward(attrs)?.add(&self.phi_c.forward(attrs)?)
    }

    /// Unseen-domain embedding `phi_t(a) + phi_c(a)` per attribute row.
    pub fn embed_unseen(&self, attrs: &Matrix2D) -> Result<Matrix2D, DsenError> {
        self.phi_t.forward(attrs)?.add(&self.phi_c.forward(attrs)?)
    }

    /// Decodes embeddings back to attribute space through `phi_sr`.
    pub fn decode(&self, embeddings: &Matrix2D) -> Result<Matrix2D, DsenError> {
        self.phi_sr.forward(embeddings)
    }

    /// Applies the feature adapter when enabled, otherwise the identity.
    pub fn extract(&self, features: &Matrix2D) -> Result<Matrix2D, DsenError> {
        match &self.adapter {
            Some(a) => a.forward(features),
            None => Ok(features.clone()),
        }
    }

    /// Row-wise softmax scores over the seen classes.
    pub fn classify_scores(&self, features: &Matrix2D) -> Result<Matrix2D, DsenError> {
        Ok(softmax_rows(&self.p.linear.forward(features)?))
    }

    /// Copies `phi_s` into `phi_t`. Later updates to either head leave the
    /// other untouched.
    pub fn warm_start_unseen(&mut self) {
        self.phi_t = self.phi_s.clone();
    }

    /// Trainable parameter blocks in checkpoint order.
    ///
    /// Order: phi_c, phi_s, phi_t, phi_sr, p, then the adapter when present;
    /// each net contributes layer1 weight, layer1 bias, layer2 weight,
    /// layer2 bias. Checkpoint serialization and the optimizer both rely on
    /// this ordering.
    pub fn param_blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut blocks = Vec::with_capacity(18);
        net_blocks(&self.phi_c, PHI_C_NAMES, &mut blocks);
        net_blocks(&self.phi_s, PHI_S_NAMES, &mut blocks);
        net_blocks(&self.phi_t, PHI_T_NAMES, &mut blocks);
        net_blocks(&self.phi_sr, PHI_SR_NAMES, &mut blocks);
        blocks.push((P_NAMES[0], self.p.linear.weight.data()));
        blocks.push((P_NAMES[1], &self.p.linear.bias));
        if let Some(a) = &self.adapter {
            blocks.push((ADAPTER_NAMES[0], a.weight.data()));
            blocks.push((ADAPTER_NAMES[1], &a.bias));
        }
        blocks
    }

    /// Mutable view of the same blocks, in the same order.
    pub fn param_blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut blocks = Vec::with_capacity(18);
        net_blocks_mut(&mut self.phi_c, PHI_C_NAMES, &mut blocks);
        net_blocks_mut(&mut self.phi_s, PHI_S_NAMES, &mut blocks);
        net_blocks_mut(&mut self.phi_t, PHI_T_NAMES, &mut blocks);
        net_blocks_mut(&mut self.phi_sr, PHI_SR_NAMES, &mut blocks);
        blocks.push((P_NAMES[0], self.p.linear.weight.data_mut()));
        blocks.push((P_NAMES[1], self.p.linear.bias.as_mut_slice()));
        if let Some(a) = self.adapter.as_mut() {
            blocks.push((ADAPTER_NAMES[0], a.weight.data_mut()));
            blocks.push((ADAPTER_NAMES[1], a.bias.as_mut_slice()));
        }
        blocks
    }
}

const PHI_C_NAMES: [&str; 4] = [
    "phi_c.l1.weight",
    "phi_c.l1.bias",
    "phi_c.l2.weight",
    "phi_c.l2.bias",
];
const PHI_S_NAMES: [&str; 4] = [
    "phi_s.l1.weight",
    "phi_s.l1.bias",
    "phi_s.l2.weight",
    "phi_s.l2.bias",
];
const PHI_T_NAMES: [&str; 4] = [
    "phi_t.l1.weight",
    "phi_t.l1.bias",
    "phi_t.l2.weight",
    "phi_t.l2.bias",
];
const PHI_SR_NAMES: [&str; 4] = [
    "phi_sr.l1.weight",
    "phi_sr.l1.bias",
    "phi_sr.l2.weight",
    "phi_sr.l2.bias",
];
const P_NAMES: [&str; 2] = ["p.weight", "p.bias"];
const ADAPTER_NAMES: [&str; 2] = ["adapter.weight", "adapter.bias"];

fn net_blocks<'a>(
    net: &'a ProjectionNet,
    names: [&'static str; 4],
    out: &mut Vec<(&'static str, &'a [f64])>,
) {
    out.push((names[0], net.layer1.weight.data()));
    out.push((names[1], &net.layer1.bias));
    out.push((names[2], net.layer2.weight.data()));
    out.push((names[3], &net.layer2.bias));
}

fn net_blocks_mut<'a>(
    net: &'a mut ProjectionNet,
    names: [&'static str; 4],
    out: &mut Vec<(&'static str, &'a mut [f64])>,
) {
    out.push((names[0], net.layer1.weight.data_mut()));
    out.push((names[1], net.layer1.bias.as_mut_slice()));
    out.push((names[2], net.layer2.weight.data_mut()));
    out.push((names[3], net.layer2.bias.as_mut_slice()));
}

/// Gradient bundle mirroring [`DsenModel::param_blocks`].
#[derive(Debug, Clone)]
pub struct DsenGrads {
    pub phi_c: ProjectionGrads,
    pub phi_s: ProjectionGrads,
    pub phi_t: ProjectionGrads,
    pub phi_sr: ProjectionGrads,
    pub p: LinearGrads,
    pub adapter: Option<LinearGrads>,
}

impl DsenGrads {
    pub fn zeros_like(model: &DsenModel) -> Self {
        DsenGrads {
            phi_c: ProjectionGrads::zeros_like(&model.phi_c),
            phi_s: ProjectionGrads::zeros_like(&model.phi_s),
            phi_t: ProjectionGrads::zeros_like(&model.phi_t),
            phi_sr: ProjectionGrads::zeros_like(&model.phi_sr),
            p: LinearGrads::zeros_like(&model.p.linear),
            adapter: model.adapter.as_ref().map(LinearGrads::zeros_like),
        }
    }

    /// Blocks in the same order as [`DsenModel::param_blocks`].
    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut blocks = Vec::with_capacity(18);
        grad_blocks(&self.phi_c, PHI_C_NAMES, &mut blocks);
        grad_blocks(&self.phi_s, PHI_S_NAMES, &mut blocks);
        grad_blocks(&self.phi_t, PHI_T_NAMES, &mut blocks);
        grad_blocks(&self.phi_sr, PHI_SR_NAMES, &mut blocks);
        blocks.push((P_NAMES[0], self.p.weight.data()));
        blocks.push((P_NAMES[1], &self.p.bias));
        if let Some(a) = &self.adapter {
            blocks.push((ADAPTER_NAMES[0], a.weight.data()));
            blocks.push((ADAPTER_NAMES[1], &a.bias));
        }
        blocks
    }
}

fn grad_blocks<'a>(
    g: &'a ProjectionGrads,
    names: [&'static str; 4],
    out: &mut Vec<(&'static str, &'a [f64])>,
) {
    out.push((names[0], g.layer1.weight.data()));
    out.push((names[1], &g.layer1.bias));
    out.push((names[2], g.layer2.weight.data()));
    out.push((names[3], &g.layer2.bias));
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_model(seed: u64) -> DsenModel {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        DsenModel::new(4, 6, 5, 3, false, &mut rng)
    }

    fn random_attrs(rows: usize, cols: usize, seed: u64) -> Matrix2D {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut m = Matrix2D::zeros(rows, cols);
        for v in m.data_mut() {
            *v = rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        m
    }

    #[test]
    fn zero_model_embeds_to_zero() {
        let model = DsenModel {
            phi_c: ProjectionNet::zeros(4, 5, 6),
            phi_s: ProjectionNet::zeros(4, 5, 6),
            phi_t: ProjectionNet::zeros(4, 5, 6),
            phi_sr: ProjectionNet::zeros(6, 5, 4),
            p: Classifier {
                linear: LinearLayer::zeros(6, 3),
            },
            adapter: None,
            attr_dim: 4,
            feat_dim: 6,
            hidden_dim: 5,
            n_seen_classes: 3,
        };
        let a = random_attrs(2, 4, 3);
        assert_eq!(model.embed_seen(&a).unwrap(), Matrix2D::zeros(2, 6));
        assert_eq!(model.embed_unseen(&a).unwrap(), Matrix2D::zeros(2, 6));
        assert_eq!(model.decode(&Matrix2D::zeros(2, 6)).unwrap(), Matrix2D::zeros(2, 4));
        // zero classifier weights give a uniform distribution
        let scores = model.classify_scores(&random_attrs(2, 6, 4)).unwrap();
        for r in 0..2 {
            for &s in scores.row(r) {
                assert_abs_diff_eq!(s, 1.0 / 3.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn embed_matches_hand_composed_oracle() {
        let model = random_model(7);
        let a = random_attrs(1, 4, 9);
        let seen = model.embed_seen(&a).unwrap();
        let by_hand = model
            .phi_s
            .forward(&a)
            .unwrap()
            .add(&model.phi_c.forward(&a).unwrap())
            .unwrap();
        for (x, y) in seen.data().iter().zip(by_hand.data()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        let unseen = model.embed_unseen(&a).unwrap();
        let by_hand = model
            .phi_t
            .forward(&a)
            .unwrap()
            .add(&model.phi_c.forward(&a).unwrap())
            .unwrap();
        for (x, y) in unseen.data().iter().zip(by_hand.data()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn embedding_decomposition_property() {
        let model = random_model(21);
        let a = random_attrs(3, 4, 22);
        let common = model.phi_c.forward(&a).unwrap();
        let seen = model.embed_seen(&a).unwrap();
        let unseen = model.embed_unseen(&a).unwrap();
        let phi_s = model.phi_s.forward(&a).unwrap();
        let phi_t = model.phi_t.forward(&a).unwrap();
        for i in 0..seen.data().len() {
            assert_abs_diff_eq!(seen.data()[i] - common.data()[i], phi_s.data()[i], epsilon = 1e-12);
            assert_abs_diff_eq!(unseen.data()[i] - common.data()[i], phi_t.data()[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn warm_start_copies_and_detaches() {
        let mut model = random_model(5);
        assert_ne!(model.phi_s, model.phi_t);
        model.warm_start_unseen();
        assert_eq!(model.phi_s, model.phi_t);
        let a = random_attrs(2, 4, 6);
        assert_eq!(model.embed_seen(&a).unwrap(), model.embed_unseen(&a).unwrap());
        // mutating phi_t must not touch phi_s
        let before = model.phi_s.clone();
        model.phi_t.layer1.bias[0] += 1.0;
        assert_eq!(model.phi_s, before);
    }

    #[test]
    fn classify_scores_rows_are_distributions() {
        let model = random_model(13);
        let f = random_attrs(4, 6, 14);
        let scores = model.classify_scores(&f).unwrap();
        for r in 0..scores.rows() {
            let sum: f64 = scores.row(r).iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-6);
            let max = scores.row(r).iter().cloned().fold(0.0, f64::max);
            assert!(max >= 1.0 / 3.0 && max <= 1.0);
            assert!(scores.row(r).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn classify_matches_manual_logits() {
        let model = random_model(17);
        let f = random_attrs(1, 6, 18);
        let scores = model.classify_scores(&f).unwrap();
        let logits = model.p.linear.forward(&f).unwrap();
        let max = logits.row(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: alloc::vec::Vec<f64> = logits.row(0).iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (got, e) in scores.row(0).iter().zip(&exps) {
            assert_abs_diff_eq!(*got, e / sum, epsilon = 1e-9);
        }
    }

    #[test]
    fn block_order_is_stable() {
        let model = random_model(1);
        let names: alloc::vec::Vec<_> = model.param_blocks().iter().map(|(n, _)| *n).collect();
        assert_eq!(names[0], "phi_c.l1.weight");
        assert_eq!(names[4], "phi_s.l1.weight");
        assert_eq!(names[8], "phi_t.l1.weight");
        assert_eq!(names[12], "phi_sr.l1.weight");
        assert_eq!(names[16], "p.weight");
        assert_eq!(names.len(), 18);
        let grads = DsenGrads::zeros_like(&model);
        let gnames: alloc::vec::Vec<_> = grads.blocks().iter().map(|(n, _)| *n).collect();
        assert_eq!(names, gnames);
    }
}
