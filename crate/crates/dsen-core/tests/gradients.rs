//! Finite-difference checks of the analytic gradients for every loss
//! configuration. The oracle is a central difference with step 1e-5,
//! independent of the backward path it verifies.

use dsen_core::losses::{total_loss, total_loss_with_grads, Batch, LossToggles, LossWeights};
use dsen_core::matrix::Matrix2D;
use dsen_core::model::DsenModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-3;

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> Matrix2D {
    let mut m = Matrix2D::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.sample::<f64, _>(StandardNormal);
    }
    m
}

struct Fixture {
    model: DsenModel,
    features: Matrix2D,
    labels: Vec<usize>,
    seen_attrs: Matrix2D,
    unseen_attrs: Matrix2D,
}

fn fixture(seed: u64, adapter: bool) -> Fixture {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (attr_dim, feat_dim, hidden, n_seen, n_unseen) = (4, 6, 5, 3, 2);
    let mut model = DsenModel::new(attr_dim, feat_dim, hidden, n_seen, adapter, &mut rng);
    if let Some(a) = model.adapter.as_mut() {
        // perturb the adapter off the identity so its gradients are generic
        for v in a.weight.data_mut() {
            *v += 0.05 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Fixture {
        model,
        features: random_matrix(4, feat_dim, &mut rng),
        labels: vec![0, 2, 1, 0],
        seen_attrs: random_matrix(n_seen, attr_dim, &mut rng),
        unseen_attrs: random_matrix(n_unseen, attr_dim, &mut rng),
    }
}

fn check_gradients(mut fx: Fixture, toggles: LossToggles) {
    let weights = LossWeights::default();
    let batch = Batch {
        features: &fx.features,
        labels: &fx.labels,
        seen_attrs: &fx.seen_attrs,
        unseen_attrs: &fx.unseen_attrs,
    };
    let (_, grads) = total_loss_with_grads(&fx.model, batch, &weights, toggles).unwrap();
    let analytic: Vec<(&'static str, Vec<f64>)> = grads
        .blocks()
        .into_iter()
        .map(|(n, g)| (n, g.to_vec()))
        .collect();

    for (block_idx, (name, block_grad)) in analytic.iter().enumerate() {
        for coord in 0..block_grad.len() {
            let eval = |model: &DsenModel| {
                let batch = Batch {
                    features: &fx.features,
                    labels: &fx.labels,
                    seen_attrs: &fx.seen_attrs,
                    unseen_attrs: &fx.unseen_attrs,
                };
                total_loss(model, batch, &weights, toggles).unwrap().total
            };
            let original = fx.model.param_blocks()[block_idx].1[coord];
            fx.model.param_blocks_mut()[block_idx].1[coord] = original + FD_STEP;
            let plus = eval(&fx.model);
            fx.model.param_blocks_mut()[block_idx].1[coord] = original - FD_STEP;
            let minus = eval(&fx.model);
            fx.model.param_blocks_mut()[block_idx].1[coord] = original;

            let fd = (plus - minus) / (2.0 * FD_STEP);
            let an = block_grad[coord];
            let scale = fd.abs().max(an.abs()).max(1e-6);
            assert!(
                (fd - an).abs() <= REL_TOL * scale,
                "{name}[{coord}]: analytic {an} vs finite-difference {fd}"
            );
        }
    }
}

#[test]
fn gradients_match_finite_differences_s2v() {
    check_gradients(fixture(101, false), LossToggles::s2v());
}

#[test]
fn gradients_match_finite_differences_dsp() {
    check_gradients(fixture(102, false), LossToggles::dsp());
}

#[test]
fn gradients_match_finite_differences_ddc() {
    check_gradients(fixture(103, false), LossToggles::ddc());
}

#[test]
fn gradients_match_finite_differences_dsen() {
    check_gradients(fixture(104, false), LossToggles::dsen());
}

#[test]
fn gradients_match_finite_differences_with_adapter() {
    check_gradients(fixture(105, true), LossToggles::dsen());
}

#[test]
fn relu_outer_product_case() {
    // loss = sum(relu(W x)) with all pre-activations positive: the gradient
    // wrt W is the outer product of ones and x, checked by finite differences
    use dsen_core::nn::{relu, LinearGrads, LinearLayer};
    let layer = LinearLayer {
        weight: Matrix2D::from_rows(&[&[1.0, 0.5], &[0.3, 2.0]]),
        bias: vec![0.1, 0.2],
    };
    let x = Matrix2D::from_rows(&[&[1.0, 2.0]]);
    let pre = layer.forward(&x).unwrap();
    assert!(pre.data().iter().all(|&v| v > 0.0));
    let mut grads = LinearGrads::zeros_like(&layer);
    let dout = Matrix2D::from_rows(&[&[1.0, 1.0]]);
    layer.backward(&x, &dout, &mut grads);
    for j in 0..2 {
        for i in 0..2 {
            // outer-product form: d/dW[j][i] = x[i]
            assert!((grads.weight.get(j, i) - x.get(0, i)).abs() < 1e-12);
            // finite differences on sum(relu(W x))
            let mut perturbed = layer.clone();
            perturbed.weight.set(j, i, layer.weight.get(j, i) + FD_STEP);
            let plus: f64 = relu(&perturbed.forward(&x).unwrap()).data().iter().sum();
            perturbed.weight.set(j, i, layer.weight.get(j, i) - FD_STEP);
            let minus: f64 = relu(&perturbed.forward(&x).unwrap()).data().iter().sum();
            let fd = (plus - minus) / (2.0 * FD_STEP);
            let an = grads.weight.get(j, i);
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(1.0));
        }
    }
}
