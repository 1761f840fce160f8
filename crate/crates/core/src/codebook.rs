//! Bag-of-words vocabulary: seeded k-means over standardized feature vectors
//! and nearest-centroid histogram encoding.

use crate::error::{Error, Result};
use crate::features::Standardizer;
use crate::rng::SplitMix64;
use crate::Real;

const MAX_KMEANS_ITERS: usize = 50;

/// Learned vocabulary: k centroids in standardized feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<F> {
    pub k: usize,
    pub centroids: Vec<Vec<F>>,
    pub feature_scaling: Standardizer<F>,
    /// Set when duplicate collapse left fewer than the requested k distinct
    /// points; `centroids.len() < k` in that case.
    pub truncated: bool,
}

fn dist2<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

fn nearest<F: Real>(point: &[F], centroids: &[Vec<F>]) -> usize {
    let mut best = 0;
    let mut best_d = dist2(point, &centroids[0]);
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let d = dist2(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best // ties keep the lowest index
}

/// k-means with seeded farthest-point initialization on standardized
/// features. Deterministic per seed: the first centroid is a seeded draw,
/// each subsequent one is the point farthest from its nearest chosen centroid
/// (ties to the lowest index), then Lloyd iterations run to a fixed cap.
pub fn build_codebook<F: Real>(features: &[Vec<F>], k: usize, seed: u64) -> Result<Codebook<F>> {
    if k < 1 {
        return Err(Error::InvalidParam("codebook k must be >= 1".into()));
    }
    if features.len() < k {
        return Err(Error::InvalidParam(format!(
            "need at least k={k} feature vectors, got {}",
            features.len()
        )));
    }
    let scaler = Standardizer::fit(features);
    let points = scaler.transform_all(features);

    let mut rng = SplitMix64::new(seed);
    let mut centroids: Vec<Vec<F>> = vec![points[rng.next_index(points.len())].clone()];
    let mut truncated = false;
    while centroids.len() < k {
        let mut far_idx = 0;
        let mut far_d = F::neg_infinity();
        for (i, p) in points.iter().enumerate() {
            let d = centroids
                .iter()
                .map(|c| dist2(p, c))
                .fold(F::infinity(), F::min);
            if d > far_d {
                far_d = d;
                far_idx = i;
            }
        }
        if far_d <= F::zero() {
            truncated = true; // fewer distinct points than k
            break;
        }
        centroids.push(points[far_idx].clone());
    }

    for _ in 0..MAX_KMEANS_ITERS {
        let assign: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        let dim = centroids[0].len();
        let mut sums = vec![vec![F::zero(); dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, &x) in sums[a].iter_mut().zip(p) {
                *s = *s + x;
            }
        }
        let mut moved = false;
        for (ci, c) in centroids.iter_mut().enumerate() {
            if counts[ci] == 0 {
                continue; // keep empty centroids where they are
            }
            let n = F::from_usize(counts[ci]).unwrap();
            for (dst, s) in c.iter_mut().zip(&sums[ci]) {
                let v = *s / n;
                if v != *dst {
                    moved = true;
                }
                *dst = v;
            }
        }
        if !moved {
            break;
        }
    }

    Ok(Codebook {
        k,
        centroids,
        feature_scaling: scaler,
        truncated,
    })
}

/// Word histogram over a feature sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct BowHistogram<F> {
    pub counts: Vec<u64>,
    pub normalized: Vec<F>,
}

impl<F: Real> BowHistogram<F> {
    /// L1 distance between normalized histograms.
    pub fn l1(&self, other: &Self) -> F {
        self.normalized
            .iter()
            .zip(&other.normalized)
            .fold(F::zero(), |a, (&x, &y)| a + (x - y).abs())
    }
}

/// Assign each raw feature vector to its nearest centroid (after scaling) and
/// histogram the assignments.
pub fn bow_encode<F: Real>(features: &[Vec<F>], codebook: &Codebook<F>) -> BowHistogram<F> {
    assert!(!codebook.centroids.is_empty(), "empty codebook");
    let mut counts = vec![0u64; codebook.centroids.len()];
    for f in features {
        let p = codebook.feature_scaling.transform(f);
        counts[nearest(&p, &codebook.centroids)] += 1;
    }
    let total: u64 = counts.iter().sum();
    let normalized = if total == 0 {
        vec![F::zero(); counts.len()]
    } else {
        let t = F::from_u64(total).unwrap();
        counts
            .iter()
            .map(|&c| F::from_u64(c).unwrap() / t)
            .collect()
    };
    BowHistogram { counts, normalized }
}

/// Assignment indices for a feature sequence; the word stream the detector
/// histograms over its own sliding bags.
pub fn assign_words<F: Real>(features: &[Vec<F>], codebook: &Codebook<F>) -> Vec<usize> {
    features
        .iter()
        .map(|f| {
            let p = codebook.feature_scaling.transform(f);
            nearest(&p, &codebook.centroids)
        })
        .collect()
}
