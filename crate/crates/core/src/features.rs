//! Observer-side feature extraction: sliding windows over a bandwidth trace,
//! per-segment statistics, and the orthonormal Haar wavelet transform.

use crate::error::{Error, Result};
use crate::Real;

/// Half-open index ranges `[i*stride, i*stride + win_len)`; the last partial
/// segment is dropped. Empty when the series is shorter than `win_len`.
pub fn sliding_windows(len: usize, win_len: usize, stride: usize) -> Vec<std::ops::Range<usize>> {
    assert!(win_len >= 2, "win_len must be >= 2");
    assert!(stride >= 1, "stride must be >= 1");
    let mut out = Vec::new();
    let mut start = 0;
    while start + win_len <= len {
        out.push(start..start + win_len);
        start += stride;
    }
    out
}

fn sqrt2<F: Real>() -> F {
    F::from_f64(std::f64::consts::SQRT_2).unwrap()
}

/// Orthonormal Haar DWT. `approx[i] = (s[2i]+s[2i+1])/sqrt(2)`,
/// `detail[i] = (s[2i]-s[2i+1])/sqrt(2)`, recursed on the approximation for
/// `levels` levels. Signals whose length is not a multiple of `2^levels` are
/// padded with their final value first. Returns the final approximation and
/// the detail vector of each level, finest first.
pub fn haar_dwt<F: Real>(signal: &[F], levels: usize) -> Result<(Vec<F>, Vec<Vec<F>>)> {
    if levels < 1 {
        return Err(Error::InvalidParam("haar_dwt needs levels >= 1".into()));
    }
    if signal.is_empty() {
        return Err(Error::InvalidParam(
            "haar_dwt needs a non-empty signal".into(),
        ));
    }
    let unit = 1usize << levels;
    let mut cur: Vec<F> = signal.to_vec();
    let padded_len = cur.len().div_ceil(unit) * unit;
    let last = *cur.last().unwrap();
    cur.resize(padded_len, last);

    let s2 = sqrt2::<F>();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let half = cur.len() / 2;
        let mut approx = Vec::with_capacity(half);
        let mut detail = Vec::with_capacity(half);
        for i in 0..half {
            approx.push((cur[2 * i] + cur[2 * i + 1]) / s2);
            detail.push((cur[2 * i] - cur[2 * i + 1]) / s2);
        }
        details.push(detail);
        cur = approx;
    }
    Ok((cur, details))
}

/// Inverse of [`haar_dwt`]: reconstructs the (padded) signal exactly.
pub fn haar_idwt<F: Real>(approx: &[F], details: &[Vec<F>]) -> Vec<F> {
    let s2 = sqrt2::<F>();
    let mut cur = approx.to_vec();
    for detail in details.iter().rev() {
        let mut next = Vec::with_capacity(cur.len() * 2);
        for (a, d) in cur.iter().zip(detail) {
            next.push((*a + *d) / s2);
            next.push((*a - *d) / s2);
        }
        cur = next;
    }
    cur
}

/// Per-segment statistics plus wavelet coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures<F> {
    pub total_bytes: F,
    pub median_bw: F,
    pub peak_bw: F,
    pub std_bw: F,
    pub dwt_approx: Vec<F>,
    pub dwt_detail: Vec<Vec<F>>,
}

impl<F: Real> WindowFeatures<F> {
    /// Flat layout: statistics first, then detail coefficients level by level
    /// (finest first), then the approximation.
    pub fn flatten(&self) -> Vec<F> {
        let mut v = vec![self.total_bytes, self.median_bw, self.peak_bw, self.std_bw];
        for d in &self.dwt_detail {
            v.extend_from_slice(d);
        }
        v.extend_from_slice(&self.dwt_approx);
        v
    }

    /// Column names matching [`flatten`](Self::flatten), for feature dumps.
    pub fn column_names(win_len: usize, levels: usize) -> Vec<String> {
        let mut names = vec![
            "total_bytes".to_string(),
            "median_bw".to_string(),
            "peak_bw".to_string(),
            "std_bw".to_string(),
        ];
        let mut n = win_len.div_ceil(1 << levels) * (1 << levels);
        for lvl in 1..=levels {
            n /= 2;
            for i in 0..n {
                names.push(format!("d{lvl}_{i}"));
            }
        }
        for i in 0..n {
            names.push(format!("a{levels}_{i}"));
        }
        names
    }
}

/// Median of a sample; even-length samples average the middle pair.
pub fn median<F: Real>(xs: &[F]) -> F {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / F::from_u8(2).unwrap()
    }
}

/// Population standard deviation.
pub fn std_dev<F: Real>(xs: &[F]) -> F {
    let n = F::from_usize(xs.len()).unwrap();
    let mean = xs.iter().fold(F::zero(), |a, &x| a + x) / n;
    let var = xs
        .iter()
        .fold(F::zero(), |a, &x| a + (x - mean) * (x - mean))
        / n;
    var.sqrt()
}

/// Statistics and DWT coefficients of one windowed-byte segment. Position
/// within the trace plays no role; two equal segments produce equal features.
pub fn extract_features<F: Real>(segment: &[F], levels: usize) -> Result<WindowFeatures<F>> {
    if segment.is_empty() {
        return Err(Error::InvalidParam("empty segment".into()));
    }
    let (dwt_approx, dwt_detail) = haar_dwt(segment, levels)?;
    Ok(WindowFeatures {
        total_bytes: segment.iter().fold(F::zero(), |a, &x| a + x),
        median_bw: median(segment),
        peak_bw: segment.iter().fold(F::zero(), |a, &x| a.max(x)),
        std_bw: std_dev(segment),
        dwt_approx,
        dwt_detail,
    })
}

/// Per-dimension standardization (zero mean, unit variance) fitted once and
/// applied to every vector before clustering or classification.
/// Zero-variance dimensions keep scale 1 so the transform stays invertible.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<F> {
    pub mean: Vec<F>,
    pub scale: Vec<F>,
}

impl<F: Real> Standardizer<F> {
    pub fn fit(rows: &[Vec<F>]) -> Self {
        assert!(!rows.is_empty(), "cannot fit a standardizer on no rows");
        let dim = rows[0].len();
        let n = F::from_usize(rows.len()).unwrap();
        let mut mean = vec![F::zero(); dim];
        for r in rows {
            for (m, &x) in mean.iter_mut().zip(r) {
                *m = *m + x;
            }
        }
        for m in &mut mean {
            *m = *m / n;
        }
        let mut scale = vec![F::zero(); dim];
        for r in rows {
            for ((s, &x), &m) in scale.iter_mut().zip(r).zip(&mean) {
                *s = *s + (x - m) * (x - m);
            }
        }
        for s in &mut scale {
            let sd = (*s / n).sqrt();
            *s = if sd > F::zero() { sd } else { F::one() };
        }
        Self { mean, scale }
    }

    pub fn transform(&self, row: &[F]) -> Vec<F> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&x, &m), &s)| (x - m) / s)
            .collect()
    }

    pub fn transform_all(&self, rows: &[Vec<F>]) -> Vec<Vec<F>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![F::zero(); dim],
            scale: vec![F::one(); dim],
        }
    }
}
