//! Supervised layer-type classification on per-segment features.
//!
//! A class is a (layer dimensions, tile configuration) pair: layers that are
//! dimensionally identical and tiled identically are indistinguishable by
//! construction and share a label. Training data comes from attacker-side
//! isolated profile runs replicated under measurement noise; features are a
//! fixed scalar block (duration, read statistics, write total), a
//! length-normalized bandwidth sub-series, and optionally the Haar
//! coefficients of that sub-series.

mod cnn;
mod mlp;
mod svm;
mod time_only;

pub use cnn::Cnn1d;
pub use mlp::Mlp;
pub use svm::LinearSvm;
pub use time_only::TimeOnly;

use crate::catalog::ModelSpec;
use crate::detector::{class_label, simulate_isolated_layer};
use crate::error::{Error, Result};
use crate::features::{haar_dwt, median, std_dev, Standardizer};
use crate::npu::NpuConfig;
use crate::rng::SplitMix64;
use crate::sim::inject_noise;
use crate::tuner::TileSchedule;
use crate::Scalar;
use std::collections::BTreeMap;
use std::ops::Range;

/// Fixed column order of a sample row. Scalars first, then the resampled
/// read sub-series, then (optionally) its wavelet coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub with_dwt: bool,
    pub series_len: usize,
    pub dwt_levels: usize,
}

impl FeatureLayout {
    /// duration, read total, read median, read peak, read std, write total.
    pub const SCALARS: usize = 6;

    pub fn new(with_dwt: bool) -> Self {
        Self {
            with_dwt,
            series_len: 64,
            dwt_levels: 3,
        }
    }

    /// The DWT block: one energy per level plus the approximation energy,
    /// then every coefficient (finest level first, approximation last).
    pub fn dwt_block_len(&self) -> usize {
        self.dwt_levels + 1 + self.series_len
    }

    pub fn dim(&self) -> usize {
        Self::SCALARS + self.series_len + if self.with_dwt { self.dwt_block_len() } else { 0 }
    }

    pub fn duration_index(&self) -> usize {
        0
    }

    /// Column carrying the output-store volume; only measurable per segment
    /// in isolated runs.
    pub fn write_total_index(&self) -> usize {
        5
    }

    /// The 1-D sub-series a convolutional learner slides over: the resampled
    /// bandwidth series plus, when enabled, its wavelet coefficients.
    pub fn series_range(&self) -> Range<usize> {
        Self::SCALARS..self.dim()
    }

    pub fn scalar_range(&self) -> Range<usize> {
        0..Self::SCALARS
    }
}

/// One replicated observation of a single layer class; the window series
/// spans the layer's own execution (loads, compute, trailing sync).
#[derive(Debug, Clone)]
pub struct ProfileRun {
    pub label: String,
    pub duration_windows: u64,
    pub read_windows: Vec<u64>,
    /// Bytes the layer's output store moves. Meaningful for isolated profile
    /// runs; in a full victim run the write channel serializes across layers
    /// and this column cannot be recovered per segment.
    pub write_total: u64,
    /// How often the class occurs in its source model (weighting).
    pub occurrences: u64,
}

/// Reduce a window series to `len` buckets by averaging (piecewise aggregate
/// approximation); used to make sub-series of different durations comparable.
pub fn resample_series(xs: &[u64], len: usize) -> Vec<Scalar> {
    assert!(len > 0);
    if xs.is_empty() {
        return vec![0.0; len];
    }
    let n = xs.len();
    (0..len)
        .map(|i| {
            let lo = i * n / len;
            let hi = (((i + 1) * n).div_ceil(len)).min(n).max(lo + 1);
            xs[lo..hi].iter().sum::<u64>() as Scalar / (hi - lo) as Scalar
        })
        .collect()
}

/// Simulate every distinct (layer, config) class of `model` under its tuned
/// schedule, replicated `n_replicas` times under multiplicative measurement
/// noise. Deterministic per seed.
pub fn make_profile_runs(
    model: &ModelSpec,
    schedule: &TileSchedule,
    npu: &NpuConfig,
    n_replicas: usize,
    noise_amplitude: f64,
    seed: u64,
) -> Result<Vec<ProfileRun>> {
    let mut classes: BTreeMap<String, (usize, u64)> = BTreeMap::new();
    for &id in &model.weight_layers() {
        let cfg = schedule
            .per_layer
            .get(&id)
            .ok_or(Error::ScheduleGap { layer: id })?;
        let label = class_label(model.layer(id), cfg);
        let e = classes.entry(label).or_insert((id, 0));
        e.1 += 1;
    }
    let mut runs = Vec::new();
    for (ci, (label, (layer_id, occurrences))) in classes.into_iter().enumerate() {
        let layer = model.layer(layer_id);
        let cfg = schedule.per_layer[&layer_id];
        let base = simulate_isolated_layer(layer, &cfg, model.element_size, npu)?;
        let span = &base.layer_spans[0];
        // the span's trailing sync pause has no transactions, so the trace
        // can end before the span does; the duration keeps span semantics
        let end = span.end_window.min(base.trace.len());
        for rep in 0..n_replicas {
            let noise_seed = SplitMix64::derive(seed, (ci as u64) << 20 | rep as u64).next_u64();
            let noisy = inject_noise(&base.trace, noise_amplitude, noise_seed);
            runs.push(ProfileRun {
                label: label.clone(),
                duration_windows: (span.end_window - span.start_window) as u64,
                read_windows: noisy.read_bytes[span.start_window..end].to_vec(),
                write_total: noisy.write_bytes.iter().sum(),
                occurrences,
            });
        }
    }
    Ok(runs)
}

/// Labeled samples with a deterministic stratified 80/20 split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<(Vec<Scalar>, usize)>,
    pub label_names: Vec<String>,
    pub layout: FeatureLayout,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    /// Occurrence weight per class, for model-weighted accuracy.
    pub class_weights: Vec<f64>,
}

impl Dataset {
    pub fn rows(&self, idx: &[usize]) -> Vec<(&[Scalar], usize)> {
        idx.iter()
            .map(|&i| (self.samples[i].0.as_slice(), self.samples[i].1))
            .collect()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }
}

/// End of the observable read extent for a span: one past the last window
/// with read traffic, clamped to the span itself.
pub fn trim_to_last_read(read_bytes: &[u64], start: usize, end: usize) -> usize {
    let end = end.min(read_bytes.len());
    let mut e = end;
    while e > start + 1 && read_bytes[e - 1] == 0 {
        e -= 1;
    }
    e
}

fn run_features(run: &ProfileRun, layout: &FeatureLayout) -> Result<Vec<Scalar>> {
    let series = resample_series(&run.read_windows, layout.series_len);
    let reads: Vec<Scalar> = run.read_windows.iter().map(|&b| b as Scalar).collect();
    let mut row = Vec::with_capacity(layout.dim());
    row.push(run.duration_windows as Scalar);
    row.push(reads.iter().sum());
    row.push(if reads.is_empty() { 0.0 } else { median(&reads) });
    row.push(reads.iter().cloned().fold(0.0, Scalar::max));
    row.push(if reads.is_empty() { 0.0 } else { std_dev(&reads) });
    row.push(run.write_total as Scalar);
    row.extend_from_slice(&series);
    if layout.with_dwt {
        let (approx, details) = haar_dwt(&series, layout.dwt_levels)?;
        let l2 = |xs: &[Scalar]| xs.iter().map(|x| x * x).sum::<Scalar>().sqrt();
        for d in &details {
            row.push(l2(d));
        }
        row.push(l2(&approx));
        for d in &details {
            row.extend_from_slice(d);
        }
        row.extend_from_slice(&approx);
    }
    debug_assert_eq!(row.len(), layout.dim());
    Ok(row)
}

/// Assemble a dataset from profile runs. Labels are the sorted distinct run
/// labels; the split is stratified per class (4/5 train, rounded down, at
/// least one test sample) with a seeded shuffle.
pub fn build_dataset(runs: &[ProfileRun], with_dwt: bool, seed: u64) -> Result<Dataset> {
    let layout = FeatureLayout::new(with_dwt);
    let mut label_names: Vec<String> = runs.iter().map(|r| r.label.clone()).collect();
    label_names.sort();
    label_names.dedup();
    if label_names.len() < 2 {
        return Err(Error::TooFewClasses(label_names.len()));
    }
    let index_of: BTreeMap<&str, usize> = label_names
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();

    let mut samples = Vec::with_capacity(runs.len());
    let mut class_weights = vec![0.0f64; label_names.len()];
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); label_names.len()];
    for run in runs {
        let y = index_of[run.label.as_str()];
        class_weights[y] = run.occurrences as f64;
        per_class[y].push(samples.len());
        samples.push((run_features(run, &layout)?, y));
    }

    let mut rng = SplitMix64::new(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for idxs in per_class.iter_mut() {
        rng.shuffle(idxs);
        let n_train = (idxs.len() * 4 / 5).min(idxs.len().saturating_sub(1));
        train_idx.extend_from_slice(&idxs[..n_train]);
        test_idx.extend_from_slice(&idxs[n_train..]);
    }
    train_idx.sort();
    test_idx.sort();
    Ok(Dataset {
        samples,
        label_names,
        layout,
        train_idx,
        test_idx,
        class_weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Svm,
    Mlp,
    Cnn,
    TimeOnly,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Mlp => "mlp",
            ClassifierKind::Cnn => "cnn",
            ClassifierKind::TimeOnly => "time_only",
        }
    }
}

/// A fitted model with its scaling and layout; prediction is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub kind: ClassifierKind,
    pub layout: FeatureLayout,
    pub scaling: Standardizer<Scalar>,
    pub label_names: Vec<String>,
    pub train_seed: u64,
    pub params: ClassifierParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierParams {
    Svm(LinearSvm),
    Mlp(Mlp),
    Cnn(Cnn1d),
    TimeOnly(TimeOnly),
}

impl TrainedClassifier {
    /// Per-class decision scores for a raw (unscaled) feature row.
    pub fn scores(&self, row: &[Scalar]) -> Vec<Scalar> {
        let x = self.scaling.transform(row);
        match &self.params {
            ClassifierParams::Svm(m) => m.scores(&x),
            ClassifierParams::Mlp(m) => m.scores(&x),
            ClassifierParams::Cnn(m) => m.scores(&x),
            ClassifierParams::TimeOnly(m) => m.scores(row), // raw duration
        }
    }

    /// Argmax class; ties resolve to the lowest index.
    pub fn predict(&self, row: &[Scalar]) -> usize {
        let s = self.scores(row);
        let mut best = 0;
        for (i, &v) in s.iter().enumerate().skip(1) {
            if v > s[best] {
                best = i;
            }
        }
        best
    }
}

/// Accuracy, class-weighted accuracy and the confusion matrix on the test
/// split (`confusion[truth][predicted]`).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub weighted_accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
}

pub fn evaluate(clf: &TrainedClassifier, ds: &Dataset, idx: &[usize]) -> Result<EvalReport> {
    if idx.is_empty() {
        return Err(Error::InvalidParam("empty evaluation split".into()));
    }
    let c = ds.n_classes();
    if clf.label_names != ds.label_names {
        return Err(Error::LayoutMismatch {
            expected: clf.label_names.len(),
            got: ds.label_names.len(),
        });
    }
    let mut confusion = vec![vec![0u64; c]; c];
    for &i in idx {
        let (x, y) = (&ds.samples[i].0, ds.samples[i].1);
        if x.len() != clf.layout.dim() {
            return Err(Error::LayoutMismatch {
                expected: clf.layout.dim(),
                got: x.len(),
            });
        }
        confusion[y][clf.predict(x)] += 1;
    }
    let correct: u64 = (0..c).map(|i| confusion[i][i]).sum();
    let total: u64 = confusion.iter().flatten().sum();
    let mut wsum = 0.0;
    let mut wtot = 0.0;
    for y in 0..c {
        let class_total: u64 = confusion[y].iter().sum();
        if class_total == 0 {
            continue;
        }
        let acc = confusion[y][y] as f64 / class_total as f64;
        wsum += ds.class_weights[y] * acc;
        wtot += ds.class_weights[y];
    }
    Ok(EvalReport {
        accuracy: correct as f64 / total as f64,
        weighted_accuracy: if wtot > 0.0 { wsum / wtot } else { 0.0 },
        confusion,
    })
}

/// Shared training hyperparameters; fixed budgets, no early stopping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub batch: usize,
    pub hidden: usize,
    pub filters: usize,
    pub filter_width: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 120,
            learning_rate: 0.05,
            l2: 1e-3,
            batch: 16,
            hidden: 64,
            filters: 8,
            filter_width: 5,
        }
    }
}

fn fit_scaling(ds: &Dataset) -> Standardizer<Scalar> {
    let rows: Vec<Vec<Scalar>> = ds.train_idx.iter().map(|&i| ds.samples[i].0.clone()).collect();
    Standardizer::fit(&rows)
}

/// Train a one-vs-rest linear SVM (hinge loss, L2, subgradient descent).
pub fn train_svm(ds: &Dataset, hyper: &TrainHyper, seed: u64) -> Result<TrainedClassifier> {
    check_trainable(ds)?;
    let scaling = fit_scaling(ds);
    let rows = scaled_train(ds, &scaling);
    let model = LinearSvm::fit(&rows, ds.n_classes(), hyper, seed);
    Ok(TrainedClassifier {
        kind: ClassifierKind::Svm,
        layout: ds.layout,
        scaling,
        label_names: ds.label_names.clone(),
        train_seed: seed,
        params: ClassifierParams::Svm(model),
    })
}

/// Train a one-hidden-layer MLP (ReLU, softmax cross-entropy, mini-batch GD).
pub fn train_mlp(ds: &Dataset, hyper: &TrainHyper, seed: u64) -> Result<TrainedClassifier> {
    check_trainable(ds)?;
    let scaling = fit_scaling(ds);
    let rows = scaled_train(ds, &scaling);
    let model = Mlp::fit(&rows, ds.layout.dim(), ds.n_classes(), hyper, seed);
    Ok(TrainedClassifier {
        kind: ClassifierKind::Mlp,
        layout: ds.layout,
        scaling,
        label_names: ds.label_names.clone(),
        train_seed: seed,
        params: ClassifierParams::Mlp(model),
    })
}

/// Train the 1-D CNN over the bandwidth sub-series (conv + global average
/// pool + dense softmax, scalar block appended after pooling).
pub fn train_cnn(ds: &Dataset, hyper: &TrainHyper, seed: u64) -> Result<TrainedClassifier> {
    check_trainable(ds)?;
    let scaling = fit_scaling(ds);
    let rows = scaled_train(ds, &scaling);
    let model = Cnn1d::fit(&rows, &ds.layout, ds.n_classes(), hyper, seed);
    Ok(TrainedClassifier {
        kind: ClassifierKind::Cnn,
        layout: ds.layout,
        scaling,
        label_names: ds.label_names.clone(),
        train_seed: seed,
        params: ClassifierParams::Cnn(model),
    })
}

/// Nearest-mean-duration baseline: what an attacker gets from termination
/// timing alone.
pub fn baseline_time_only(ds: &Dataset) -> Result<TrainedClassifier> {
    check_trainable(ds)?;
    let rows = ds.rows(&ds.train_idx);
    let model = TimeOnly::fit(&rows, ds.layout.duration_index(), ds.n_classes());
    Ok(TrainedClassifier {
        kind: ClassifierKind::TimeOnly,
        layout: ds.layout,
        scaling: Standardizer::identity(ds.layout.dim()),
        label_names: ds.label_names.clone(),
        train_seed: 0,
        params: ClassifierParams::TimeOnly(model),
    })
}

fn check_trainable(ds: &Dataset) -> Result<()> {
    if ds.n_classes() < 2 {
        return Err(Error::TooFewClasses(ds.n_classes()));
    }
    if ds.train_idx.is_empty() {
        return Err(Error::InvalidParam("empty training split".into()));
    }
    Ok(())
}

fn scaled_train(ds: &Dataset, scaling: &Standardizer<Scalar>) -> Vec<(Vec<Scalar>, usize)> {
    ds.train_idx
        .iter()
        .map(|&i| (scaling.transform(&ds.samples[i].0), ds.samples[i].1))
        .collect()
}

// ---- versioned text dump ----------------------------------------------

const DUMP_MAGIC: &str = "npuscope-clf v1";

impl TrainedClassifier {
    /// Versioned flat text dump: layout header, labels, scaling, parameters.
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        s.push_str(DUMP_MAGIC);
        s.push('\n');
        s.push_str(&format!(
            "kind {}\nlabels {}\nlayout with_dwt={} series_len={} dwt_levels={} seed={}\n",
            self.kind.as_str(),
            self.label_names.join(","),
            self.layout.with_dwt as u8,
            self.layout.series_len,
            self.layout.dwt_levels,
            self.train_seed,
        ));
        let dump_vec = |name: &str, v: &[Scalar]| {
            let body: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            format!("{name} {}\n", body.join(" "))
        };
        s.push_str(&dump_vec("scaling_mean", &self.scaling.mean));
        s.push_str(&dump_vec("scaling_scale", &self.scaling.scale));
        match &self.params {
            ClassifierParams::Svm(m) => s.push_str(&m.dump()),
            ClassifierParams::Mlp(m) => s.push_str(&m.dump()),
            ClassifierParams::Cnn(m) => s.push_str(&m.dump()),
            ClassifierParams::TimeOnly(m) => s.push_str(&m.dump()),
        }
        s
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::BadModelDump(msg.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(DUMP_MAGIC) {
            return Err(bad("missing header"));
        }
        let mut kind = None;
        let mut labels = Vec::new();
        let mut layout = FeatureLayout::new(false);
        let mut seed = 0u64;
        let mut mean = Vec::new();
        let mut scale = Vec::new();
        let mut sections: Vec<(String, Vec<Scalar>)> = Vec::new();
        for line in lines {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "kind" => {
                    kind = Some(match rest {
                        "svm" => ClassifierKind::Svm,
                        "mlp" => ClassifierKind::Mlp,
                        "cnn" => ClassifierKind::Cnn,
                        "time_only" => ClassifierKind::TimeOnly,
                        _ => return Err(bad("unknown kind")),
                    })
                }
                "labels" => labels = rest.split(',').map(str::to_string).collect(),
                "layout" => {
                    for field in rest.split(' ') {
                        let (k, v) = field.split_once('=').ok_or_else(|| bad("layout field"))?;
                        match k {
                            "with_dwt" => layout.with_dwt = v == "1",
                            "series_len" => {
                                layout.series_len =
                                    v.parse().map_err(|_| bad("series_len"))?
                            }
                            "dwt_levels" => {
                                layout.dwt_levels = v.parse().map_err(|_| bad("dwt_levels"))?
                            }
                            "seed" => seed = v.parse().map_err(|_| bad("seed"))?,
                            _ => return Err(bad("unknown layout field")),
                        }
                    }
                }
                "scaling_mean" => mean = parse_vec(rest)?,
                "scaling_scale" => scale = parse_vec(rest)?,
                _ => sections.push((key.to_string(), parse_vec(rest)?)),
            }
        }
        let kind = kind.ok_or_else(|| bad("missing kind"))?;
        let params = match kind {
            ClassifierKind::Svm => ClassifierParams::Svm(LinearSvm::from_sections(&sections)?),
            ClassifierKind::Mlp => ClassifierParams::Mlp(Mlp::from_sections(&sections)?),
            ClassifierKind::Cnn => ClassifierParams::Cnn(Cnn1d::from_sections(&sections)?),
            ClassifierKind::TimeOnly => {
                ClassifierParams::TimeOnly(TimeOnly::from_sections(&sections)?)
            }
        };
        Ok(Self {
            kind,
            layout,
            scaling: Standardizer { mean, scale },
            label_names: labels,
            train_seed: seed,
            params,
        })
    }
}

pub(crate) fn parse_vec(rest: &str) -> Result<Vec<Scalar>> {
    rest.split_whitespace()
        .map(|t| {
            t.parse::<Scalar>()
                .map_err(|_| Error::BadModelDump(format!("bad number '{t}'")))
        })
        .collect()
}

pub(crate) fn section<'a>(
    sections: &'a [(String, Vec<Scalar>)],
    name: &str,
) -> Result<&'a [Scalar]> {
    sections
        .iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v.as_slice())
        .ok_or_else(|| Error::BadModelDump(format!("missing section {name}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_runs(n_per: usize, seed: u64) -> Vec<ProfileRun> {
        // two well-separated synthetic classes
        let mut rng = SplitMix64::new(seed);
        let mut runs = Vec::new();
        for c in 0..2u64 {
            for _ in 0..n_per {
                let base = 100 + c * 4000;
                let series: Vec<u64> = (0..80)
                    .map(|_| base + rng.next_index(50) as u64)
                    .collect();
                runs.push(ProfileRun {
                    label: format!("class{c}"),
                    duration_windows: 200 + c * 900,
                    read_windows: series,
                    write_total: 10_000 + c * 90_000,
                    occurrences: 1 + c,
                });
            }
        }
        runs
    }

    #[test]
    fn layout_dimensions() {
        let no = FeatureLayout::new(false);
        let yes = FeatureLayout::new(true);
        assert_eq!(no.dim() + yes.dwt_block_len(), yes.dim());
        assert_eq!(no.dim(), FeatureLayout::SCALARS + 64);
    }

    #[test]
    fn stratified_split_preserves_ratio() {
        let ds = build_dataset(&blob_runs(20, 3), false, 9).unwrap();
        for c in 0..2 {
            let tr = ds
                .train_idx
                .iter()
                .filter(|&&i| ds.samples[i].1 == c)
                .count();
            let te = ds.test_idx.iter().filter(|&&i| ds.samples[i].1 == c).count();
            assert_eq!(tr, 16);
            assert_eq!(te, 4);
        }
    }

    #[test]
    fn single_class_errors() {
        let mut runs = blob_runs(10, 3);
        runs.retain(|r| r.label == "class0");
        assert!(matches!(
            build_dataset(&runs, false, 1),
            Err(Error::TooFewClasses(1))
        ));
    }

    #[test]
    fn dwt_flag_changes_layout_only() {
        let runs = blob_runs(10, 5);
        let a = build_dataset(&runs, false, 1).unwrap();
        let b = build_dataset(&runs, true, 1).unwrap();
        assert_eq!(a.samples.len(), b.samples.len());
        assert_eq!(b.samples[0].0.len() - a.samples[0].0.len(), b.layout.dwt_block_len());
        // the non-DWT prefix is identical
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.0[..a.layout.dim()], y.0[..a.layout.dim()]);
        }
    }

    #[test]
    fn separable_blobs_reach_full_accuracy() {
        let ds = build_dataset(&blob_runs(15, 7), false, 2).unwrap();
        let hyper = TrainHyper::default();
        for clf in [
            train_svm(&ds, &hyper, 1).unwrap(),
            train_mlp(&ds, &hyper, 1).unwrap(),
            train_cnn(&ds, &hyper, 1).unwrap(),
            baseline_time_only(&ds).unwrap(),
        ] {
            let r = evaluate(&clf, &ds, &ds.test_idx).unwrap();
            assert_eq!(r.accuracy, 1.0, "{:?} failed", clf.kind);
        }
    }

    #[test]
    fn accuracy_matches_counting_oracle() {
        let ds = build_dataset(&blob_runs(12, 11), false, 4).unwrap();
        let clf = train_svm(&ds, &TrainHyper::default(), 3).unwrap();
        let r = evaluate(&clf, &ds, &ds.test_idx).unwrap();
        let mut correct = 0u64;
        for &i in &ds.test_idx {
            if clf.predict(&ds.samples[i].0) == ds.samples[i].1 {
                correct += 1;
            }
        }
        assert_eq!(r.accuracy, correct as f64 / ds.test_idx.len() as f64);
        let total: u64 = r.confusion.iter().flatten().sum();
        let diag: u64 = (0..2).map(|i| r.confusion[i][i]).sum();
        assert_eq!(r.accuracy, diag as f64 / total as f64);
    }

    #[test]
    fn perfect_predictor_yields_identity_confusion() {
        let ds = build_dataset(&blob_runs(15, 23), false, 8).unwrap();
        let clf = train_cnn(&ds, &TrainHyper::default(), 1).unwrap();
        let r = evaluate(&clf, &ds, &ds.test_idx).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for (y, row) in r.confusion.iter().enumerate() {
            for (p, &count) in row.iter().enumerate() {
                assert_eq!(count > 0, y == p && count > 0, "off-diagonal at {y},{p}");
                if y != p {
                    assert_eq!(count, 0);
                }
            }
        }
    }

    #[test]
    fn single_class_eval_split_with_matching_predictor() {
        let ds = build_dataset(&blob_runs(10, 29), false, 8).unwrap();
        let clf = baseline_time_only(&ds).unwrap();
        // restrict evaluation to one class: the matching predictor scores 1.0
        let only: Vec<usize> = ds
            .test_idx
            .iter()
            .copied()
            .filter(|&i| ds.samples[i].1 == 0)
            .collect();
        let r = evaluate(&clf, &ds, &only).unwrap();
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn same_seed_same_parameters() {
        let ds = build_dataset(&blob_runs(12, 13), true, 4).unwrap();
        let h = TrainHyper::default();
        for (a, b) in [
            (train_svm(&ds, &h, 5).unwrap(), train_svm(&ds, &h, 5).unwrap()),
            (train_mlp(&ds, &h, 5).unwrap(), train_mlp(&ds, &h, 5).unwrap()),
            (train_cnn(&ds, &h, 5).unwrap(), train_cnn(&ds, &h, 5).unwrap()),
        ] {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn dump_roundtrip_is_exact() {
        let ds = build_dataset(&blob_runs(10, 17), true, 4).unwrap();
        let h = TrainHyper::default();
        for clf in [
            train_svm(&ds, &h, 2).unwrap(),
            train_mlp(&ds, &h, 2).unwrap(),
            train_cnn(&ds, &h, 2).unwrap(),
            baseline_time_only(&ds).unwrap(),
        ] {
            let text = clf.to_dump();
            let back = TrainedClassifier::from_dump(&text).unwrap();
            assert_eq!(clf, back);
        }
    }

    #[test]
    fn refit_on_standardized_data_is_identity_on_predictions() {
        let ds = build_dataset(&blob_runs(12, 19), false, 6).unwrap();
        let clf = train_svm(&ds, &TrainHyper::default(), 7).unwrap();
        // standardize the whole dataset with the fitted scaler, refit, retrain
        let mut ds2 = ds.clone();
        for (x, _) in ds2.samples.iter_mut() {
            *x = clf.scaling.transform(x);
        }
        let clf2 = train_svm(&ds2, &TrainHyper::default(), 7).unwrap();
        for &i in &ds.test_idx {
            assert_eq!(
                clf.predict(&ds.samples[i].0),
                clf2.predict(&ds2.samples[i].0)
            );
        }
    }
}
