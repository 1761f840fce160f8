//! One-hidden-layer perceptron: ReLU hidden units, softmax cross-entropy,
//! mini-batch gradient descent with a fixed epoch budget and seeded init.

use super::svm::join;
use super::{section, TrainHyper};
use crate::error::Result;
use crate::rng::SplitMix64;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub dim: usize,
    pub hidden: usize,
    pub n_classes: usize,
    /// w1[h*dim + j], b1[h], w2[c*hidden + h], b2[c], flattened in order.
    pub params: Vec<Scalar>,
}

impl Mlp {
    pub fn n_params(dim: usize, hidden: usize, n_classes: usize) -> usize {
        hidden * dim + hidden + n_classes * hidden + n_classes
    }

    pub fn init(dim: usize, hidden: usize, n_classes: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let mut params = Vec::with_capacity(Self::n_params(dim, hidden, n_classes));
        let lim1 = 1.0 / (dim as f64).sqrt();
        for _ in 0..hidden * dim {
            params.push((rng.next_f64() * 2.0 - 1.0) * lim1);
        }
        params.extend(std::iter::repeat_n(0.0, hidden));
        let lim2 = 1.0 / (hidden as f64).sqrt();
        for _ in 0..n_classes * hidden {
            params.push((rng.next_f64() * 2.0 - 1.0) * lim2);
        }
        params.extend(std::iter::repeat_n(0.0, n_classes));
        Self {
            dim,
            hidden,
            n_classes,
            params,
        }
    }

    fn split(&self) -> (&[Scalar], &[Scalar], &[Scalar], &[Scalar]) {
        let (d, h, c) = (self.dim, self.hidden, self.n_classes);
        let (w1, rest) = self.params.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(c * h);
        (w1, b1, w2, b2)
    }

    /// Class logits.
    pub fn scores(&self, x: &[Scalar]) -> Vec<Scalar> {
        let (w1, b1, w2, b2) = self.split();
        let (d, h, c) = (self.dim, self.hidden, self.n_classes);
        let mut a = vec![0.0; h];
        for i in 0..h {
            let mut z = b1[i];
            for j in 0..d {
                z += w1[i * d + j] * x[j];
            }
            a[i] = z.max(0.0);
        }
        let mut out = vec![0.0; c];
        for k in 0..c {
            let mut z = b2[k];
            for i in 0..h {
                z += w2[k * h + i] * a[i];
            }
            out[k] = z;
        }
        out
    }

    /// Softmax probabilities; sums to one.
    pub fn probabilities(&self, x: &[Scalar]) -> Vec<Scalar> {
        softmax(&self.scores(x))
    }

    /// Mean cross-entropy loss and the gradient w.r.t. every parameter over
    /// a batch. Exposed so tests can check the analytic gradient against
    /// central finite differences.
    pub fn loss_grad(&self, batch: &[(&[Scalar], usize)]) -> (Scalar, Vec<Scalar>) {
        let (w1, b1, w2, b2) = self.split();
        let (d, h, c) = (self.dim, self.hidden, self.n_classes);
        let mut grad = vec![0.0; self.params.len()];
        let (gw1, grest) = grad.split_at_mut(h * d);
        let (gb1, grest) = grest.split_at_mut(h);
        let (gw2, gb2) = grest.split_at_mut(c * h);
        let mut loss = 0.0;
        let n = batch.len() as f64;
        for (x, y) in batch {
            let mut z1 = vec![0.0; h];
            let mut a = vec![0.0; h];
            for i in 0..h {
                let mut z = b1[i];
                for j in 0..d {
                    z += w1[i * d + j] * x[j];
                }
                z1[i] = z;
                a[i] = z.max(0.0);
            }
            let mut logits = vec![0.0; c];
            for k in 0..c {
                let mut z = b2[k];
                for i in 0..h {
                    z += w2[k * h + i] * a[i];
                }
                logits[k] = z;
            }
            let p = softmax(&logits);
            loss += -(p[*y].max(1e-300)).ln() / n;

            // dL/dlogits = (p - onehot(y)) / n
            let mut dz2 = p;
            dz2[*y] -= 1.0;
            for v in &mut dz2 {
                *v /= n;
            }
            let mut da = vec![0.0; h];
            for k in 0..c {
                gb2[k] += dz2[k];
                for i in 0..h {
                    gw2[k * h + i] += dz2[k] * a[i];
                    da[i] += dz2[k] * w2[k * h + i];
                }
            }
            for i in 0..h {
                if z1[i] <= 0.0 {
                    continue;
                }
                gb1[i] += da[i];
                for j in 0..d {
                    gw1[i * d + j] += da[i] * x[j];
                }
            }
        }
        (loss, grad)
    }

    pub fn fit(
        rows: &[(Vec<Scalar>, usize)],
        dim: usize,
        n_classes: usize,
        hyper: &TrainHyper,
        seed: u64,
    ) -> Self {
        let mut model = Self::init(dim, hyper.hidden, n_classes, seed);
        let mut rng = SplitMix64::new(seed ^ 0xd1b5_4a32_d192_ed03);
        let mut order: Vec<usize> = (0..rows.len()).collect();
        for _ in 0..hyper.epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(hyper.batch.max(1)) {
                let batch: Vec<(&[Scalar], usize)> = chunk
                    .iter()
                    .map(|&i| (rows[i].0.as_slice(), rows[i].1))
                    .collect();
                let (_, mut grad) = model.loss_grad(&batch);
                for (g, p) in grad.iter_mut().zip(&model.params) {
                    *g += hyper.l2 * p;
                }
                for (p, g) in model.params.iter_mut().zip(&grad) {
                    *p -= hyper.learning_rate * g;
                }
            }
        }
        model
    }

    pub fn dump(&self) -> String {
        format!(
            "mlp_shape {} {} {}\nmlp_params {}\n",
            self.dim,
            self.hidden,
            self.n_classes,
            join(&self.params)
        )
    }

    pub fn from_sections(sections: &[(String, Vec<Scalar>)]) -> Result<Self> {
        let shape = section(sections, "mlp_shape")?;
        Ok(Self {
            dim: shape[0] as usize,
            hidden: shape[1] as usize,
            n_classes: shape[2] as usize,
            params: section(sections, "mlp_params")?.to_vec(),
        })
    }
}

pub(super) fn softmax(z: &[Scalar]) -> Vec<Scalar> {
    let m = z.iter().cloned().fold(Scalar::NEG_INFINITY, Scalar::max);
    let exp: Vec<Scalar> = z.iter().map(|v| (v - m).exp()).collect();
    let sum: Scalar = exp.iter().sum();
    exp.iter().map(|v| v / sum).collect()
}
