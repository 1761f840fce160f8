//! Termination-timing baseline: classify a segment by the nearest per-class
//! mean duration. No other feature is consulted.

use super::section;
use crate::error::Result;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeOnly {
    pub duration_index: usize,
    pub class_means: Vec<Scalar>,
}

impl TimeOnly {
    pub fn fit(rows: &[(&[Scalar], usize)], duration_index: usize, n_classes: usize) -> Self {
        let mut sums = vec![0.0; n_classes];
        let mut counts = vec![0u64; n_classes];
        for (x, y) in rows {
            sums[*y] += x[duration_index];
            counts[*y] += 1;
        }
        let class_means = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { Scalar::INFINITY })
            .collect();
        Self {
            duration_index,
            class_means,
        }
    }

    /// Negative distance to each class mean, so argmax picks the nearest;
    /// exact ties resolve to the lowest class index via argmax semantics.
    pub fn scores(&self, x: &[Scalar]) -> Vec<Scalar> {
        let d = x[self.duration_index];
        self.class_means.iter().map(|m| -(d - m).abs()).collect()
    }

    pub fn dump(&self) -> String {
        format!(
            "time_shape {}\ntime_means {}\n",
            self.duration_index,
            super::svm::join(&self.class_means)
        )
    }

    pub fn from_sections(sections: &[(String, Vec<Scalar>)]) -> Result<Self> {
        let shape = section(sections, "time_shape")?;
        Ok(Self {
            duration_index: shape[0] as usize,
            class_means: section(sections, "time_means")?.to_vec(),
        })
    }
}
