//! One-vs-rest linear SVM trained by subgradient descent on L2-regularized
//! hinge loss. Fixed epoch budget, seeded shuffle, deterministic.

use super::{section, TrainHyper};
use crate::error::Result;
use crate::rng::SplitMix64;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub n_classes: usize,
    pub dim: usize,
    /// Row-major per-class weight vectors, then one bias per class.
    pub weights: Vec<Scalar>,
    pub bias: Vec<Scalar>,
}

impl LinearSvm {
    pub fn fit(
        rows: &[(Vec<Scalar>, usize)],
        n_classes: usize,
        hyper: &TrainHyper,
        seed: u64,
    ) -> Self {
        let dim = rows[0].0.len();
        let mut weights = vec![0.0; n_classes * dim];
        let mut bias = vec![0.0; n_classes];
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let mut rng = SplitMix64::new(seed);
        for epoch in 0..hyper.epochs {
            let lr = hyper.learning_rate / (1.0 + 0.1 * epoch as f64);
            rng.shuffle(&mut order);
            for &i in &order {
                let (x, y) = (&rows[i].0, rows[i].1);
                for c in 0..n_classes {
                    let target = if c == y { 1.0 } else { -1.0 };
                    let w = &mut weights[c * dim..(c + 1) * dim];
                    let margin =
                        target * (dot(w, x) + bias[c]);
                    if margin < 1.0 {
                        for (wj, &xj) in w.iter_mut().zip(x) {
                            *wj += lr * (target * xj - hyper.l2 * *wj);
                        }
                        bias[c] += lr * target;
                    } else {
                        for wj in w.iter_mut() {
                            *wj -= lr * hyper.l2 * *wj;
                        }
                    }
                }
            }
        }
        Self {
            n_classes,
            dim,
            weights,
            bias,
        }
    }

    pub fn scores(&self, x: &[Scalar]) -> Vec<Scalar> {
        (0..self.n_classes)
            .map(|c| dot(&self.weights[c * self.dim..(c + 1) * self.dim], x) + self.bias[c])
            .collect()
    }

    pub fn dump(&self) -> String {
        format!(
            "svm_shape {} {}\nsvm_weights {}\nsvm_bias {}\n",
            self.n_classes,
            self.dim,
            join(&self.weights),
            join(&self.bias)
        )
    }

    pub fn from_sections(sections: &[(String, Vec<Scalar>)]) -> Result<Self> {
        let shape = section(sections, "svm_shape")?;
        Ok(Self {
            n_classes: shape[0] as usize,
            dim: shape[1] as usize,
            weights: section(sections, "svm_weights")?.to_vec(),
            bias: section(sections, "svm_bias")?.to_vec(),
        })
    }
}

pub(super) fn dot(a: &[Scalar], b: &[Scalar]) -> Scalar {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(super) fn join(v: &[Scalar]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}
