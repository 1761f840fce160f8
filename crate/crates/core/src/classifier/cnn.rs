//! 1-D convolutional classifier over the per-segment bandwidth sub-series:
//! one convolution layer (edge-padded), ReLU, global average pooling, then a
//! dense softmax over the pooled channels concatenated with the scalar
//! feature block.

use super::mlp::softmax;
use super::svm::join;
use super::{section, FeatureLayout, TrainHyper};
use crate::error::Result;
use crate::rng::SplitMix64;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Cnn1d {
    pub series_off: usize,
    pub series_len: usize,
    pub n_scalars: usize,
    pub filters: usize,
    pub width: usize,
    pub n_classes: usize,
    /// conv kernels [f*width + k], conv bias [f], dense
    /// w[c*(filters+n_scalars) + j], dense bias [c], flattened in order.
    pub params: Vec<Scalar>,
}

impl Cnn1d {
    pub fn n_params(filters: usize, width: usize, n_scalars: usize, n_classes: usize) -> usize {
        filters * width + filters + n_classes * (filters + n_scalars) + n_classes
    }

    pub fn init(layout: &FeatureLayout, hyper: &TrainHyper, n_classes: usize, seed: u64) -> Self {
        let series = layout.series_range();
        let filters = hyper.filters;
        let width = hyper.filter_width;
        let n_scalars = FeatureLayout::SCALARS;
        let mut rng = SplitMix64::new(seed);
        let mut params = Vec::with_capacity(Self::n_params(filters, width, n_scalars, n_classes));
        let lim1 = 1.0 / (width as f64).sqrt();
        for _ in 0..filters * width {
            params.push((rng.next_f64() * 2.0 - 1.0) * lim1);
        }
        params.extend(std::iter::repeat_n(0.0, filters));
        let dense_in = filters + n_scalars;
        let lim2 = 1.0 / (dense_in as f64).sqrt();
        for _ in 0..n_classes * dense_in {
            params.push((rng.next_f64() * 2.0 - 1.0) * lim2);
        }
        params.extend(std::iter::repeat_n(0.0, n_classes));
        Self {
            series_off: series.start,
            series_len: series.len(),
            n_scalars,
            filters,
            width,
            n_classes,
            params,
        }
    }

    fn split(&self) -> (&[Scalar], &[Scalar], &[Scalar], &[Scalar]) {
        let (kernels, rest) = self.params.split_at(self.filters * self.width);
        let (cb, rest) = rest.split_at(self.filters);
        let dense_in = self.filters + self.n_scalars;
        let (w, b) = rest.split_at(self.n_classes * dense_in);
        (kernels, cb, w, b)
    }

    /// Edge-padded sample index: positions beyond the ends clamp to the edge
    /// value (segments shorter than the filter width behave the same way).
    fn at(series: &[Scalar], i: isize) -> Scalar {
        let n = series.len() as isize;
        series[i.clamp(0, n - 1) as usize]
    }

    /// Pooled features: per-filter global average of the ReLU'd convolution.
    pub fn pooled(&self, x: &[Scalar]) -> Vec<Scalar> {
        let (kernels, cb, _, _) = self.split();
        let series = &x[self.series_off..self.series_off + self.series_len];
        let half = (self.width / 2) as isize;
        let mut out = vec![0.0; self.filters];
        for f in 0..self.filters {
            let k = &kernels[f * self.width..(f + 1) * self.width];
            let mut acc = 0.0;
            for p in 0..series.len() as isize {
                let mut z = cb[f];
                for (j, &kj) in k.iter().enumerate() {
                    z += kj * Self::at(series, p + j as isize - half);
                }
                acc += z.max(0.0);
            }
            out[f] = acc / series.len() as f64;
        }
        out
    }

    pub fn scores(&self, x: &[Scalar]) -> Vec<Scalar> {
        let (_, _, w, b) = self.split();
        let mut dense_in = self.pooled(x);
        dense_in.extend_from_slice(&x[..self.n_scalars]);
        let d = dense_in.len();
        (0..self.n_classes)
            .map(|c| {
                b[c] + w[c * d..(c + 1) * d]
                    .iter()
                    .zip(&dense_in)
                    .map(|(a, v)| a * v)
                    .sum::<Scalar>()
            })
            .collect()
    }

    /// Mean cross-entropy and gradient over a batch, for training and for
    /// the finite-difference checks.
    pub fn loss_grad(&self, batch: &[(&[Scalar], usize)]) -> (Scalar, Vec<Scalar>) {
        let (kernels, cb, w, _b) = self.split();
        let dense_in_len = self.filters + self.n_scalars;
        let mut grad = vec![0.0; self.params.len()];
        let half = (self.width / 2) as isize;
        let mut loss = 0.0;
        let n = batch.len() as f64;
        for (x, y) in batch {
            let series = &x[self.series_off..self.series_off + self.series_len];
            let slen = series.len();
            // forward, keeping pre-activations
            let mut z = vec![0.0; self.filters * slen];
            let mut pooled = vec![0.0; self.filters];
            for f in 0..self.filters {
                let k = &kernels[f * self.width..(f + 1) * self.width];
                let mut acc = 0.0;
                for p in 0..slen as isize {
                    let mut v = cb[f];
                    for (j, &kj) in k.iter().enumerate() {
                        v += kj * Self::at(series, p + j as isize - half);
                    }
                    z[f * slen + p as usize] = v;
                    acc += v.max(0.0);
                }
                pooled[f] = acc / slen as f64;
            }
            let mut dense_in = pooled.clone();
            dense_in.extend_from_slice(&x[..self.n_scalars]);
            let logits: Vec<Scalar> = (0..self.n_classes)
                .map(|c| {
                    self.params[self.filters * self.width
                        + self.filters
                        + self.n_classes * dense_in_len
                        + c]
                        + w[c * dense_in_len..(c + 1) * dense_in_len]
                            .iter()
                            .zip(&dense_in)
                            .map(|(a, v)| a * v)
                            .sum::<Scalar>()
                })
                .collect();
            let p = softmax(&logits);
            loss += -(p[*y].max(1e-300)).ln() / n;

            let mut dlogit = p;
            dlogit[*y] -= 1.0;
            for v in &mut dlogit {
                *v /= n;
            }
            let (gk_off, gcb_off) = (0, self.filters * self.width);
            let gw_off = gcb_off + self.filters;
            let gb_off = gw_off + self.n_classes * dense_in_len;
            let mut dpooled = vec![0.0; self.filters];
            for c in 0..self.n_classes {
                grad[gb_off + c] += dlogit[c];
                for j in 0..dense_in_len {
                    grad[gw_off + c * dense_in_len + j] += dlogit[c] * dense_in[j];
                }
                for f in 0..self.filters {
                    dpooled[f] += dlogit[c] * w[c * dense_in_len + f];
                }
            }
            for f in 0..self.filters {
                let dz_scale = dpooled[f] / slen as f64;
                for p_idx in 0..slen {
                    if z[f * slen + p_idx] <= 0.0 {
                        continue;
                    }
                    grad[gcb_off + f] += dz_scale;
                    for j in 0..self.width {
                        let src = Self::at(series, p_idx as isize + j as isize - half);
                        grad[gk_off + f * self.width + j] += dz_scale * src;
                    }
                }
            }
        }
        (loss, grad)
    }

    pub fn fit(
        rows: &[(Vec<Scalar>, usize)],
        layout: &FeatureLayout,
        n_classes: usize,
        hyper: &TrainHyper,
        seed: u64,
    ) -> Self {
        let mut model = Self::init(layout, hyper, n_classes, seed);
        let mut rng = SplitMix64::new(seed ^ 0xa076_1d64_78bd_642f);
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
            "cnn_shape {} {} {} {} {} {}\ncnn_params {}\n",
            self.series_off,
            self.series_len,
            self.n_scalars,
            self.filters,
            self.width,
            self.n_classes,
            join(&self.params)
        )
    }

    pub fn from_sections(sections: &[(String, Vec<Scalar>)]) -> Result<Self> {
        let shape = section(sections, "cnn_shape")?;
        Ok(Self {
            series_off: shape[0] as usize,
            series_len: shape[1] as usize,
            n_scalars: shape[2] as usize,
            filters: shape[3] as usize,
            width: shape[4] as usize,
            n_classes: shape[5] as usize,
            params: section(sections, "cnn_params")?.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_layout() -> FeatureLayout {
        FeatureLayout {
            with_dwt: false,
            series_len: 16,
            dwt_levels: 2,
        }
    }

    fn small_hyper() -> TrainHyper {
        TrainHyper {
            filters: 3,
            filter_width: 5,
            ..TrainHyper::default()
        }
    }

    fn random_row(rng: &mut SplitMix64, layout: &FeatureLayout) -> Vec<Scalar> {
        (0..layout.dim()).map(|_| rng.next_f64() * 2.0 - 1.0).collect()
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let layout = small_layout();
        let hyper = small_hyper();
        let mut rng = SplitMix64::new(4242);
        let rows: Vec<(Vec<Scalar>, usize)> = (0..8)
            .map(|i| (random_row(&mut rng, &layout), i % 3))
            .collect();
        let batch: Vec<(&[Scalar], usize)> =
            rows.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
        for point in 0..10 {
            let mut m = Cnn1d::init(&layout, &hyper, 3, 900 + point);
            let mut jitter = SplitMix64::new(30 + point);
            for p in &mut m.params {
                *p += jitter.next_f64() * 0.4 - 0.2;
            }
            let (_, grad) = m.loss_grad(&batch);
            let eps = 1e-5;
            let mut max_rel: f64 = 0.0;
            for j in 0..m.params.len() {
                let orig = m.params[j];
                m.params[j] = orig + eps;
                let (lp, _) = m.loss_grad(&batch);
                m.params[j] = orig - eps;
                let (lm, _) = m.loss_grad(&batch);
                m.params[j] = orig;
                let num = (lp - lm) / (2.0 * eps);
                let rel = (grad[j] - num).abs() / grad[j].abs().max(num.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
            assert!(max_rel < 1e-4, "point {point}: max rel err {max_rel}");
        }
    }

    #[test]
    fn shift_changes_pooled_features_boundedly() {
        // shifting a padded constant-background input by one step moves the
        // pooled averages by at most ~filter_width/segment_len of their range
        let layout = small_layout();
        let hyper = small_hyper();
        let m = Cnn1d::init(&layout, &hyper, 2, 7);
        let n = layout.series_len;
        let mut x = vec![0.5; layout.dim()];
        for (i, v) in x[layout.series_range()].iter_mut().enumerate() {
            *v = if (4..8).contains(&i) { 4.0 } else { 1.0 };
        }
        let mut x_shift = vec![0.5; layout.dim()];
        for (i, v) in x_shift[layout.series_range()].iter_mut().enumerate() {
            *v = if (5..9).contains(&i) { 4.0 } else { 1.0 };
        }
        let a = m.pooled(&x);
        let b = m.pooled(&x_shift);
        let range = a
            .iter()
            .map(|v| v.abs())
            .fold(0.0f64, f64::max)
            .max(1e-9);
        let bound = hyper.filter_width as f64 / n as f64;
        for (u, v) in a.iter().zip(&b) {
            assert!(
                (u - v).abs() <= bound * range.max(4.0) + 1e-9,
                "pooled moved too much: {u} vs {v}"
            );
        }
    }

    #[test]
    fn short_series_edge_pad() {
        // series shorter than the filter width still evaluates (edge pad)
        let layout = FeatureLayout {
            with_dwt: false,
            series_len: 3,
            dwt_levels: 1,
        };
        let m = Cnn1d::init(&layout, &small_hyper(), 2, 1);
        let x = vec![1.0; layout.dim()];
        let s = m.scores(&x);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|v| v.is_finite()));
    }
}
