//! Dense-layer kernel: linear maps, ReLU, row softmax, negative cosine
//! distance, their analytic gradients, and the Adam update.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::DsenError;
use crate::matrix::Matrix2D;

/// Norm clamp used inside loss gradients so training never emits NaN.
pub const NORM_EPS: f64 = 1e-12;

/// Fully connected layer; `weight` is `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weight: Matrix2D,
    pub bias: Vec<f64>,
}

impl LinearLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LinearLayer {
            weight: Matrix2D::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Zero-mean Gaussian weights with std `sqrt(2 / fan_in)`, zero biases.
    pub fn msra<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let std = (2.0 / in_dim as f64).sqrt();
        let mut weight = Matrix2D::zeros(out_dim, in_dim);
        for v in weight.data_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = z * std;
        }
        LinearLayer {
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    /// Square layer initialized to the identity map.
    pub fn identity(dim: usize) -> Self {
        LinearLayer {
            weight: Matrix2D::identity(dim),
            bias: vec![0.0; dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// `output[i] = weight * input[i] + bias` for every batch row.
    pub fn forward(&self, input: &Matrix2D) -> Result<Matrix2D, DsenError> {
        if input.cols() != self.in_dim() {
            return Err(DsenError::DimensionMismatch {
                op: "linear forward",
                expected: (input.rows(), self.in_dim()),
                got: input.shape(),
            });
        }
        let mut out = Matrix2D::zeros(input.rows(), self.out_dim());
        for b in 0..input.rows() {
            let x = input.row(b);
            let o = out.row_mut(b);
            for (j, oj) in o.iter_mut().enumerate() {
                let w = self.weight.row(j);
                let mut acc = self.bias[j];
                for (wi, xi) in w.iter().zip(x) {
                    acc += wi * xi;
                }
                *oj = acc;
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the gradient wrt the input.
    ///
    /// `input` must be the matrix used in the matching forward pass.
    pub fn backward(&self, input: &Matrix2D, dout: &Matrix2D, grads: &mut LinearGrads) -> Matrix2D {
        debug_assert_eq!(input.cols(), self.in_dim());
        debug_assert_eq!(dout.cols(), self.out_dim());
        debug_assert_eq!(input.rows(), dout.rows());
        let mut dinput = Matrix2D::zeros(input.rows(), self.in_dim());
        for b in 0..input.rows() {
            let x = input.row(b);
            let g = dout.row(b);
            for (j, &gj) in g.iter().enumerate() {
                grads.bias[j] += gj;
                let wrow = grads.weight.row_mut(j);
                for (wi, xi) in wrow.iter_mut().zip(x) {
                    *wi += gj * xi;
                }
                let w = self.weight.row(j);
                let dx = dinput.row_mut(b);
                for (di, wi) in dx.iter_mut().zip(w) {
                    *di += gj * wi;
                }
            }
        }
        dinput
    }
}

/// Gradient accumulator matching a `LinearLayer`.
#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub weight: Matrix2D,
    pub bias: Vec<f64>,
}

impl LinearGrads {
    pub fn zeros_like(layer: &LinearLayer) -> Self {
        LinearGrads {
            weight: Matrix2D::zeros(layer.out_dim(), layer.in_dim()),
            bias: vec![0.0; layer.out_dim()],
        }
    }
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &Matrix2D) -> Matrix2D {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Routes `dout` through the ReLU mask of the pre-activation `pre`.
/// The subgradient at exactly zero is taken as zero.
pub fn relu_backward(pre: &Matrix2D, dout: &Matrix2D) -> Matrix2D {
    debug_assert_eq!(pre.shape(), dout.shape());
    let mut din = dout.clone();
    for (d, p) in din.data_mut().iter_mut().zip(pre.data()) {
        if *p <= 0.0 {
            *d = 0.0;
        }
    }
    din
}

/// Row-wise softmax with max subtraction for overflow safety.
pub fn softmax_rows(logits: &Matrix2D) -> Matrix2D {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Negative cosine distance `-<v1,v2> / (|v1| |v2|)`, in `[-1, 1]`.
///
/// A zero-norm operand is a hard error here; gradient paths use the clamped
/// variants below instead.
pub fn cosine_distance(v1: &[f64], v2: &[f64]) -> Result<f64, DsenError> {
    assert_eq!(v1.len(), v2.len(), "cosine distance on unequal lengths");
    let n1 = norm(v1);
    let n2 = norm(v2);
    if n1 == 0.0 {
        return Err(DsenError::ZeroNormVector { which: "first vector" });
    }
    if n2 == 0.0 {
        return Err(DsenError::ZeroNormVector { which: "second vector" });
    }
    Ok(-dot(v1, v2) / (n1 * n2))
}

/// Clamped negative cosine distance for use inside losses.
pub fn cosine_distance_clamped(v1: &[f64], v2: &[f64]) -> f64 {
    let n1 = norm(v1).max(NORM_EPS);
    let n2 = norm(v2).max(NORM_EPS);
    -dot(v1, v2) / (n1 * n2)
}

/// Value and gradients of the clamped negative cosine distance.
///
/// Returns `(d, dd/dv1, dd/dv2)` with
/// `dd/dv1 = -v2/(|v1||v2|) + <v1,v2> v1 / (|v1|^3 |v2|)`.
pub fn cosine_distance_grad(v1: &[f64], v2: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let n1 = norm(v1).max(NORM_EPS);
    let n2 = norm(v2).max(NORM_EPS);
    let ip = dot(v1, v2);
    let d = -ip / (n1 * n2);
    let mut g1 = Vec::with_capacity(v1.len());
    let mut g2 = Vec::with_capacity(v2.len());
    for i in 0..v1.len() {
        g1.push(-v2[i] / (n1 * n2) + ip * v1[i] / (n1 * n1 * n1 * n2));
        g2.push(-v1[i] / (n1 * n2) + ip * v2[i] / (n1 * n2 * n2 * n2));
    }
    (d, g1, g2)
}

/// Adam optimizer state over an ordered list of parameter blocks.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// When false (the default), decoupled decay skips bias blocks.
    pub decay_biases: bool,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            decay_biases: false,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update over all blocks with `active[i] == true`.
    ///
    /// Decoupled weight decay is applied to the parameters first, then the
    /// bias-corrected Adam delta. Inactive blocks keep both their values and
    /// their moment buffers untouched.
    pub fn step(
        &mut self,
        params: &mut [(&'static str, &mut [f64])],
        grads: &[(&'static str, &[f64])],
        active: &[bool],
    ) -> Result<(), DsenError> {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), active.len());
        if self.m.is_empty() {
            for (_, p) in params.iter() {
                self.m.push(vec![0.0; p.len()]);
                self.v.push(vec![0.0; p.len()]);
            }
        }
        for (i, (name, g)) in grads.iter().enumerate() {
            if active[i] && !g.iter().all(|x| x.is_finite()) {
                return Err(DsenError::NonFiniteGradient {
                    block: String::from(*name),
                });
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (name, p)) in params.iter_mut().enumerate() {
            if !active[i] {
                continue;
            }
            let g = grads[i].1;
            debug_assert_eq!(p.len(), g.len(), "grad shape mismatch for {name}");
            let decay = self.decay_biases || !name.ends_with("bias");
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for k in 0..p.len() {
                if decay && self.weight_decay > 0.0 {
                    p[k] -= self.lr * self.weight_decay * p[k];
                }
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn linear_identity_passthrough() {
        let layer = LinearLayer {
            weight: Matrix2D::identity(2),
            bias: vec![0.0, 0.0],
        };
        let input = Matrix2D::from_rows(&[&[3.0, -1.0]]);
        let out = layer.forward(&input).unwrap();
        assert_eq!(out.row(0), &[3.0, -1.0]);
    }

    #[test]
    fn linear_constant_map() {
        let layer = LinearLayer {
            weight: Matrix2D::zeros(2, 3),
            bias: vec![5.0, 5.0],
        };
        let input = Matrix2D::from_rows(&[&[1.0, 2.0, 3.0], &[-7.0, 0.0, 4.0]]);
        let out = layer.forward(&input).unwrap();
        assert_eq!(out.row(0), &[5.0, 5.0]);
        assert_eq!(out.row(1), &[5.0, 5.0]);
    }

    #[test]
    fn linear_matches_triple_loop_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let layer = LinearLayer::msra(4, 3, &mut rng);
        let mut input = Matrix2D::zeros(2, 4);
        for v in input.data_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        let out = layer.forward(&input).unwrap();
        // naive triple-loop matmul oracle
        for b in 0..2 {
            for j in 0..3 {
                let mut acc = layer.bias[j];
                for i in 0..4 {
                    acc += layer.weight.get(j, i) * input.get(b, i);
                }
                assert_abs_diff_eq!(out.get(b, j), acc, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn linear_rejects_bad_shape() {
        let layer = LinearLayer::zeros(3, 2);
        let input = Matrix2D::zeros(1, 4);
        assert!(matches!(
            layer.forward(&input),
            Err(DsenError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn relu_basics() {
        let x = Matrix2D::from_rows(&[&[-1.0, 0.0, 2.0]]);
        assert_eq!(relu(&x).row(0), &[0.0, 0.0, 2.0]);
        let neg = Matrix2D::from_rows(&[&[-3.0, -0.5]]);
        assert_eq!(relu(&neg).row(0), &[0.0, 0.0]);
        let pos = Matrix2D::from_rows(&[&[0.5, 7.0]]);
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn softmax_symmetry_and_overflow() {
        let z = Matrix2D::from_rows(&[&[0.0, 0.0, 0.0]]);
        let s = softmax_rows(&z);
        for &v in s.row(0) {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
        }
        let big = Matrix2D::from_rows(&[&[1000.0, 0.0]]);
        let s = softmax_rows(&big);
        assert!(s.is_finite());
        assert!(s.get(0, 0) > 1.0 - 1e-9);
        assert!(s.get(0, 1) < 1e-9);
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        let logits = Matrix2D::from_rows(&[&[1.0, 2.0, 3.0]]);
        let s = softmax_rows(&logits);
        let raw: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).collect();
        let sum: f64 = raw.iter().sum();
        for (got, want) in s.row(0).iter().zip(raw.iter().map(|v| v / sum)) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn cosine_examples() {
        let v = [1.0, 2.0, 3.0];
        assert_abs_diff_eq!(cosine_distance(&v, &v).unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            cosine_distance(&[1.0, 0.0], &[-2.0, 0.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            cosine_distance(&[0.0, 0.0], &[1.0, 0.0]),
            Err(DsenError::ZeroNormVector { .. })
        ));
    }

    #[test]
    fn cosine_grad_zero_at_self() {
        let v = [0.3, -1.2, 2.0];
        let (d, g1, _) = cosine_distance_grad(&v, &v);
        assert_abs_diff_eq!(d, -1.0, epsilon = 1e-12);
        for g in g1 {
            assert_abs_diff_eq!(g, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cosine_grad_matches_finite_differences() {
        let v1 = [0.4, -0.7, 1.3, 0.2];
        let v2 = [-0.9, 0.5, 0.8, -1.1];
        let (_, g1, g2) = cosine_distance_grad(&v1, &v2);
        let h = 1e-6;
        for i in 0..4 {
            let mut p = v1;
            p[i] += h;
            let mut m = v1;
            m[i] -= h;
            let fd = (cosine_distance_clamped(&p, &v2) - cosine_distance_clamped(&m, &v2)) / (2.0 * h);
            assert_abs_diff_eq!(g1[i], fd, epsilon = 1e-6);
            let mut p = v2;
            p[i] += h;
            let mut m = v2;
            m[i] -= h;
            let fd = (cosine_distance_clamped(&v1, &p) - cosine_distance_clamped(&v1, &m)) / (2.0 * h);
            assert_abs_diff_eq!(g2[i], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = vec![1.0, -2.0, 3.0];
        let g = vec![0.0, 0.0, 0.0];
        let mut state = AdamState::new(1e-3, 0.5, 0.999, 1e-8, 0.0);
        state
            .step(
                &mut [("w.weight", p.as_mut_slice())],
                &[("w.weight", g.as_slice())],
                &[true],
            )
            .unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_matches_scalar_recurrence_oracle() {
        let g = 0.3;
        let (beta1, beta2, lr, eps) = (0.5, 0.999, 1e-2, 1e-8);
        let mut p = vec![1.0];
        let mut state = AdamState::new(lr, beta1, beta2, eps, 0.0);
        // hand-stepped recurrence
        let mut p_ref = 1.0;
        let mut m = 0.0;
        let mut v = 0.0;
        for t in 1..=25u32 {
            state
                .step(&mut [("s.weight", p.as_mut_slice())], &[("s.weight", &[g])], &[true])
                .unwrap();
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            let mhat = m / (1.0 - beta1.powi(t as i32));
            let vhat: f64 = v / (1.0 - beta2.powi(t as i32));
            p_ref -= lr * mhat / (vhat.sqrt() + eps);
            assert_abs_diff_eq!(p[0], p_ref, epsilon = 1e-10);
        }
    }

    #[test]
    fn adam_decoupled_decay_shrinks_params() {
        let lr = 1e-3;
        let wd = 5e-5;
        let mut p = vec![2.0];
        let mut state = AdamState::new(lr, 0.5, 0.999, 1e-8, wd);
        state
            .step(&mut [("w.weight", p.as_mut_slice())], &[("w.weight", &[0.0])], &[true])
            .unwrap();
        assert_abs_diff_eq!(p[0], 2.0 * (1.0 - lr * wd), epsilon = 1e-15);
        // biases are exempt by default
        let mut b = vec![2.0];
        let mut state = AdamState::new(lr, 0.5, 0.999, 1e-8, wd);
        state
            .step(&mut [("w.bias", b.as_mut_slice())], &[("w.bias", &[0.0])], &[true])
            .unwrap();
        assert_eq!(b[0], 2.0);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut p = vec![1.0];
        let mut state = AdamState::new(1e-3, 0.5, 0.999, 1e-8, 0.0);
        let err = state
            .step(
                &mut [("phi_c.l1.weight", p.as_mut_slice())],
                &[("phi_c.l1.weight", &[f64::NAN])],
                &[true],
            )
            .unwrap_err();
        assert!(matches!(err, DsenError::NonFiniteGradient { ref block } if block == "phi_c.l1.weight"));
    }
}
