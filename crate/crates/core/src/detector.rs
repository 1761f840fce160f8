//! Layer-boundary detection from a bandwidth trace.
//!
//! Pipeline: sliding windows over the windowed byte counts are encoded
//! against a learned codebook; a candidate boundary is declared wherever the
//! L1 distance between consecutive bag-of-words histograms exceeds an
//! adaptive threshold (median + c * MAD over the whole trace); candidates are
//! localized to the strongest raw step nearby; finally every candidate must
//! be explained by an offline profile (the segment it terminates has to
//! match some profiled layer/tile-config duration and level) or it is
//! dropped as a false positive.

use crate::catalog::{LayerSpec, ModelSpec};
use crate::codebook::{assign_words, Codebook};
use crate::error::{Error, Result};
use crate::features::{extract_features, median, sliding_windows};
use crate::npu::NpuConfig;
use crate::sim::{simulate_inference, BandwidthTrace, SimResult};
use crate::tiles::{enumerate_tile_configs, TileConfig};
use crate::tuner::TileSchedule;

/// Detector hyperparameters; defaults follow the shipped pipeline
/// (64-window segments, stride 16, 3 wavelet levels, 16-word vocabulary,
/// threshold c = 3, matching tolerance of one segment length).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub win_len: usize,
    pub stride: usize,
    pub dwt_levels: usize,
    pub codebook_k: usize,
    /// Threshold multiplier on the MAD of consecutive histogram distances.
    pub c: f64,
    /// Bag width in segments for each histogram.
    pub bag_len: usize,
    /// Match tolerance, in windows, for scoring predictions against truth.
    pub tau: usize,
    /// Duration tolerance, in windows, when validating a candidate segment
    /// against the profile database. Wider than `tau` because the victim
    /// segment includes the activation/pool tail that follows a layer.
    pub tau_valid: usize,
    /// Relative tolerance on the profiled median window level.
    pub level_rtol: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            win_len: 64,
            stride: 16,
            dwt_levels: 3,
            codebook_k: 16,
            c: 3.0,
            bag_len: 4,
            tau: 64,
            tau_valid: 192,
            level_rtol: 0.5,
        }
    }
}

/// Per-segment feature vector used for both vocabulary building and
/// detection: read-channel statistics, the energy of each wavelet level
/// (position-invariant, so equal disturbances at different offsets share a
/// word), the write-channel total and peak, and the longest silent run on
/// the read channel (the sync pauses that mark layer launches live there).
pub fn segment_features(trace: &BandwidthTrace, params: &DetectorParams) -> Result<Vec<Vec<f64>>> {
    let l2 = |xs: &[f64]| xs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut rows = Vec::new();
    for r in sliding_windows(trace.len(), params.win_len, params.stride) {
        let read: Vec<f64> = trace.read_bytes[r.clone()].iter().map(|&b| b as f64).collect();
        let f = extract_features(&read, params.dwt_levels)?;
        let mut v = vec![f.total_bytes, f.median_bw, f.peak_bw, f.std_bw];
        for level in &f.dwt_detail {
            v.push(l2(level));
        }
        v.push(l2(&f.dwt_approx));
        let write = &trace.write_bytes[r];
        v.push(write.iter().sum::<u64>() as f64);
        v.push(write.iter().copied().max().unwrap_or(0) as f64);
        let mut longest = 0usize;
        let mut run = 0usize;
        for &x in &read {
            if x == 0.0 {
                run += 1;
                longest = longest.max(run);
            } else {
                run = 0;
            }
        }
        v.push(longest as f64);
        rows.push(v);
    }
    Ok(rows)
}

/// One profiled (layer type, tile config) signature.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEntry {
    /// Layer-type label: dimensions and blocking, e.g. "conv64x3x7x7/oc32xic3".
    pub label: String,
    pub config: TileConfig,
    pub duration_windows: u64,
    pub median_window_bytes: f64,
}

/// Offline library of layer signatures, built attacker-side from isolated
/// simulations, never from the victim run under test.
#[derive(Debug, Clone, Default)]
pub struct ProfileDb {
    pub entries: Vec<ProfileEntry>,
}

impl ProfileDb {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Does any entry explain a segment of `duration` windows at `level`
    /// median bytes per window?
    fn explains(&self, duration: u64, level: f64, params: &DetectorParams) -> bool {
        self.entries.iter().any(|e| {
            duration.abs_diff(e.duration_windows) <= params.tau_valid as u64
                && (level - e.median_window_bytes).abs()
                    <= params.level_rtol * e.median_window_bytes.max(1.0)
        })
    }
}

/// Canonical label for a (layer, config) class.
pub fn class_label(layer: &LayerSpec, cfg: &TileConfig) -> String {
    format!(
        "{}{}x{}x{}x{}s{}/oc{}ic{}",
        layer.kind,
        layer.out_channels,
        layer.in_channels,
        layer.kernel_h,
        layer.kernel_w,
        layer.stride,
        cfg.tile_oc,
        cfg.tile_ic
    )
}

/// Simulate one layer in isolation under `cfg` (a profile run).
pub fn simulate_isolated_layer(
    layer: &LayerSpec,
    cfg: &TileConfig,
    element_size: u32,
    npu: &NpuConfig,
) -> Result<SimResult> {
    let mut solo = layer.clone();
    solo.id = 0;
    let model = ModelSpec {
        name: format!("isolated-{}", layer.id),
        layers: vec![solo],
        element_size,
    };
    let mut schedule = TileSchedule::empty();
    schedule.per_layer.insert(0, *cfg);
    simulate_inference(&model, &schedule, npu)
}

/// Execution units the profiler enumerates per (layer, config): the layer
/// alone, followed by its activation, and additionally followed by a 2x2
/// stride-2 pooling stage. Victim segments between adjacent weight layers
/// are one of these shapes.
pub const PROFILE_UNIT_VARIANTS: usize = 3;

fn profile_unit_model(
    layer: &LayerSpec,
    element_size: u32,
    variant: usize,
) -> Option<ModelSpec> {
    use crate::catalog::LayerKind;
    let mut solo = layer.clone();
    solo.id = 0;
    let mut layers = vec![solo];
    if variant >= 1 {
        layers.push(LayerSpec {
            id: 1,
            kind: LayerKind::Activation,
            in_channels: layer.out_channels,
            out_channels: layer.out_channels,
            kernel_h: 1,
            kernel_w: 1,
            input_h: layer.out_h(),
            input_w: layer.out_w(),
            stride: 1,
            element_size,
        });
    }
    if variant >= 2 {
        if layer.kind == LayerKind::Dense || layer.out_h() < 2 {
            return None;
        }
        layers.push(LayerSpec {
            id: 2,
            kind: LayerKind::Pool,
            in_channels: layer.out_channels,
            out_channels: layer.out_channels,
            kernel_h: 2,
            kernel_w: 2,
            input_h: layer.out_h(),
            input_w: layer.out_w(),
            stride: 2,
            element_size,
        });
    }
    Some(ModelSpec {
        name: format!("unit-{}-{variant}", layer.id),
        layers,
        element_size,
    })
}

/// Build the profile database: one entry per (weight layer, legal config),
/// with the per-layer config list capped at `cap_per_layer` evenly spaced
/// choices. The scheduled (victim) config always appears: if subsampling
/// dropped it, it replaces the nearest subsampled entry, keeping the count at
/// `min(cap, legal)` per layer. Deterministic.
pub fn build_profile_db(
    models: &[ModelSpec],
    npu: &NpuConfig,
    schedules: &[TileSchedule],
    cap_per_layer: usize,
) -> Result<ProfileDb> {
    if models.is_empty() {
        return Err(Error::InvalidParam("no catalogs for profile db".into()));
    }
    let cap = cap_per_layer.max(1);
    let mut entries = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (model, schedule) in models.iter().zip(schedules) {
        for &id in &model.weight_layers() {
            let layer = model.layer(id);
            let legal = enumerate_tile_configs(layer, npu)?;
            let mut picks: Vec<TileConfig> = if legal.len() <= cap {
                legal.clone()
            } else {
                (0..cap).map(|i| legal[i * legal.len() / cap]).collect()
            };
            if let Some(victim) = schedule.per_layer.get(&id) {
                if !picks.contains(victim) {
                    // replace the nearest pick so the victim signature exists
                    let nearest = picks
                        .iter()
                        .enumerate()
                        .min_by_key(|(_, c)| {
                            (c.tile_oc as i64 * c.tile_ic as i64
                                - victim.tile_oc as i64 * victim.tile_ic as i64)
                                .abs()
                        })
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    picks[nearest] = *victim;
                }
            }
            for cfg in picks {
                let key = (class_label(layer, &cfg), layer.input_h, layer.input_w);
                if !seen.insert(key) {
                    continue;
                }
                for variant in 0..PROFILE_UNIT_VARIANTS {
                    let Some(unit) = profile_unit_model(layer, model.element_size, variant)
                    else {
                        continue;
                    };
                    let mut sched = TileSchedule::empty();
                    sched.per_layer.insert(0, cfg);
                    let sim = crate::sim::simulate_inference(&unit, &sched, npu)?;
                    let dur = sim.layer_spans.last().map(|s| s.end_window).unwrap_or(0) as u64;
                    // level over the execution span only; the write channel
                    // may drain past it and must not dilute the median
                    let span_end = (dur as usize).min(sim.trace.len());
                    let reads: Vec<f64> = sim.trace.read_bytes[..span_end]
                        .iter()
                        .map(|&b| b as f64)
                        .collect();
                    let med = if reads.is_empty() { 0.0 } else { median(&reads) };
                    entries.push(ProfileEntry {
                        label: class_label(layer, &cfg),
                        config: cfg,
                        duration_windows: dur,
                        median_window_bytes: med,
                    });
                }
            }
        }
    }
    Ok(ProfileDb { entries })
}

/// Segment features from offline profile-unit runs, for vocabulary training.
/// Simulates the layer+activation unit for the scheduled config plus up to
/// `alt_configs` evenly spaced alternates per layer.
pub fn collect_codebook_rows(
    models: &[ModelSpec],
    schedules: &[TileSchedule],
    npu: &NpuConfig,
    params: &DetectorParams,
    alt_configs: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (model, schedule) in models.iter().zip(schedules) {
        for &id in &model.weight_layers() {
            let layer = model.layer(id);
            let legal = enumerate_tile_configs(layer, npu)?;
            let mut picks = vec![schedule.per_layer[&id]];
            for i in 0..alt_configs.min(legal.len()) {
                picks.push(legal[i * legal.len() / alt_configs.max(1)]);
            }
            picks.sort();
            picks.dedup();
            for cfg in picks {
                let unit = profile_unit_model(layer, model.element_size, 1)
                    .expect("layer+activation unit always exists");
                let mut sched = TileSchedule::empty();
                sched.per_layer.insert(0, cfg);
                let sim = crate::sim::simulate_inference(&unit, &sched, npu)?;
                rows.extend(segment_features(&sim.trace, params)?);
            }
        }
    }
    Ok(rows)
}

/// Deterministically thin a feature bank to at most `cap` rows, keeping the
/// high-variance half intact: segments carrying gaps and tile dips are rare
/// but are exactly the vocabulary the detector needs.
pub fn balance_codebook_rows(rows: Vec<Vec<f64>>, cap: usize) -> Vec<Vec<f64>> {
    if rows.len() <= cap {
        return rows;
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    // std_bw is column 3 of the segment feature layout
    order.sort_by(|&a, &b| {
        rows[b][3]
            .partial_cmp(&rows[a][3])
            .unwrap()
            .then(a.cmp(&b))
    });
    let active: Vec<usize> = order[..cap / 2].to_vec();
    let quiet_pool = &order[cap / 2..];
    let step = (quiet_pool.len() / (cap - active.len())).max(1);
    let mut keep: Vec<usize> = active;
    keep.extend(quiet_pool.iter().step_by(step).take(cap - keep.len()));
    keep.sort();
    keep.into_iter().map(|i| rows[i].clone()).collect()
}

/// Detected boundary positions (window indices) with confidences in [0, 1].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundarySet {
    pub positions: Vec<usize>,
    pub confidence: Vec<f64>,
}

fn mad(xs: &[f64], med: f64) -> f64 {
    let dev: Vec<f64> = xs.iter().map(|x| (x - med).abs()).collect();
    median(&dev)
}

/// Windows where the read channel resumes after a silent run of at least
/// `min_run` windows. Layer transitions pause the interface (driver sync plus
/// any on-chip activation/pool work), so these are the natural boundary
/// anchors; intra-layer DMA setup gaps are shorter than one window and never
/// qualify.
fn gap_ends(read: &[f64], min_run: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut run = 0usize;
    for (w, &v) in read.iter().enumerate() {
        if v == 0.0 {
            run += 1;
        } else {
            if run >= min_run {
                out.push(w);
            }
            run = 0;
        }
    }
    out
}

/// Localize a coarse candidate to the strongest step in the raw series
/// within +-`radius` windows; used when the trace carries no silent gaps.
fn refine_step(read: &[f64], pos: usize, radius: usize) -> usize {
    let g = 8usize;
    let lo = pos.saturating_sub(radius).max(g);
    let hi = (pos + radius).min(read.len().saturating_sub(g));
    if lo >= hi {
        return pos;
    }
    let mut best = pos;
    let mut best_s = -1.0f64;
    for w in lo..hi {
        let left: f64 = read[w - g..w].iter().sum::<f64>() / g as f64;
        let right: f64 = read[w..w + g].iter().sum::<f64>() / g as f64;
        let s = (left - right).abs();
        if s > best_s {
            best_s = s;
            best = w;
        }
    }
    best
}

/// Detect layer boundaries in `trace`.
pub fn detect_boundaries(
    trace: &BandwidthTrace,
    codebook: &Codebook<f64>,
    profile: &ProfileDb,
    params: &DetectorParams,
) -> Result<BoundarySet> {
    if codebook.centroids.is_empty() {
        return Err(Error::InvalidParam("empty codebook".into()));
    }
    if profile.is_empty() {
        return Err(Error::InvalidParam("empty profile database".into()));
    }
    let feats = segment_features(trace, params)?;
    if feats.len() < params.bag_len + 1 {
        return Ok(BoundarySet::default());
    }
    let words = assign_words(&feats, codebook);

    // sliding bag histograms (normalized), step one segment
    let k = codebook.centroids.len();
    let nbags = words.len() - params.bag_len + 1;
    let mut hists: Vec<Vec<f64>> = Vec::with_capacity(nbags);
    for i in 0..nbags {
        let mut h = vec![0.0f64; k];
        for &w in &words[i..i + params.bag_len] {
            h[w] += 1.0;
        }
        for v in &mut h {
            *v /= params.bag_len as f64;
        }
        hists.push(h);
    }
    if hists.len() < 2 {
        return Ok(BoundarySet::default());
    }
    let dist: Vec<f64> = hists
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).sum())
        .collect();

    let med = median(&dist);
    let threshold = med + params.c * mad(&dist, med);
    let d_max = dist.iter().cloned().fold(0.0f64, f64::max);

    // local maxima above threshold, separated by at least one segment length;
    // the first point of a plateau wins
    let sep = (params.win_len / params.stride).max(1);
    let mut raw: Vec<(usize, f64)> = Vec::new();
    for (i, &d) in dist.iter().enumerate() {
        if d <= threshold || d <= 0.0 {
            continue;
        }
        let lo = i.saturating_sub(sep);
        let hi = (i + sep + 1).min(dist.len());
        let left_ok = dist[lo..i].iter().all(|&x| x < d);
        let right_ok = dist[i..hi].iter().all(|&x| x <= d);
        if left_ok && right_ok {
            raw.push((i, d));
        }
    }

    let read: Vec<f64> = trace.read_bytes.iter().map(|&b| b as f64).collect();
    let anchors = gap_ends(&read, 3);
    let mut cands: Vec<(usize, f64)> = Vec::new();
    let norm = |d: f64| {
        if d_max > threshold {
            ((d - threshold) / (d_max - threshold)).clamp(0.0, 1.0)
        } else {
            1.0
        }
    };
    if anchors.is_empty() {
        // gap-free trace (shaped, or synthetic level steps): localize each
        // spike to the strongest raw step nearby
        for (i, d) in raw {
            let coarse = (i + params.bag_len) * params.stride + params.win_len / 2;
            let coarse = coarse.min(trace.len().saturating_sub(1));
            cands.push((refine_step(&read, coarse, params.win_len), norm(d)));
        }
    } else {
        // boundaries pause the interface, so silent-gap ends are the anchor
        // set; keep every anchor lying inside the influence of some
        // above-threshold stretch of the distance series. A spike with no
        // anchor in reach is intra-layer tile texture and proposes nothing.
        let reach = params.win_len + params.bag_len * params.stride + params.stride;
        let mut near = vec![0.0f64; trace.len()];
        for (i, &d) in dist.iter().enumerate() {
            if d <= threshold || d <= 0.0 {
                continue;
            }
            let lo = (i * params.stride).saturating_sub(reach);
            let hi = ((i + params.bag_len) * params.stride + params.win_len + reach)
                .min(trace.len());
            for w in lo..hi {
                near[w] = near[w].max(norm(d));
            }
        }
        for &a in &anchors {
            if a < trace.len() && near[a] > 0.0 {
                cands.push((a, near[a]));
            }
        }
    }
    cands.sort_by_key(|c| c.0);
    cands.dedup_by(|a, b| a.0.saturating_sub(b.0) <= 4);

    // profile validation: each kept candidate must terminate a segment that
    // matches some profiled signature
    let mut kept = BoundarySet::default();
    let mut last = 0usize;
    for (pos, conf) in cands {
        if pos <= last {
            continue;
        }
        let dur = (pos - last) as u64;
        let seg: Vec<f64> = read[last..pos].to_vec();
        let level = if seg.is_empty() { 0.0 } else { median(&seg) };
        if profile.explains(dur, level, params) {
            kept.positions.push(pos);
            kept.confidence.push(conf);
            last = pos;
        }
    }
    Ok(kept)
}

/// Match outcome of a prediction set against ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionScore {
    pub matched: Vec<(usize, usize)>,
    pub predicted: usize,
    pub truth: usize,
}

impl DetectionScore {
    /// matched / predicted; `None` when nothing was predicted.
    pub fn precision(&self) -> Option<f64> {
        if self.predicted == 0 {
            None
        } else {
            Some(self.matched.len() as f64 / self.predicted as f64)
        }
    }

    /// matched / true; `None` when there is no true boundary.
    pub fn recall(&self) -> Option<f64> {
        if self.truth == 0 {
            None
        } else {
            Some(self.matched.len() as f64 / self.truth as f64)
        }
    }
}

/// Greedy earliest-first one-to-one matching of predictions to true
/// boundaries within `tolerance` windows. For this interval structure the
/// greedy two-pointer matching is maximum, which the tests verify against an
/// exhaustive bipartite oracle.
pub fn score_boundaries(predicted: &[usize], truth: &[usize], tolerance: usize) -> DetectionScore {
    let mut p: Vec<usize> = predicted.to_vec();
    let mut t: Vec<usize> = truth.to_vec();
    p.sort();
    t.sort();
    let mut matched = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    while i < p.len() && j < t.len() {
        let d = p[i].abs_diff(t[j]);
        if d <= tolerance {
            matched.push((p[i], t[j]));
            i += 1;
            j += 1;
        } else if p[i] < t[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    DetectionScore {
        matched,
        predicted: p.len(),
        truth: t.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn perfect_predictions_score_one() {
        let t = vec![100, 300, 700];
        let s = score_boundaries(&t, &t, 10);
        assert_eq!(s.precision(), Some(1.0));
        assert_eq!(s.recall(), Some(1.0));
    }

    #[test]
    fn hand_counted_partial_match() {
        // 3 predictions, 2 true, 1 match
        let s = score_boundaries(&[100, 500, 900], &[105, 2000], 10);
        assert_eq!(s.matched.len(), 1);
        assert!((s.precision().unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.recall().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_predictions_have_no_precision() {
        let s = score_boundaries(&[], &[10, 20], 5);
        assert_eq!(s.precision(), None);
        assert_eq!(s.recall(), Some(0.0));
    }

    /// Exhaustive maximum bipartite matching on small instances.
    fn brute_force_max_matching(p: &[usize], t: &[usize], tol: usize) -> usize {
        fn rec(pi: usize, used: &mut Vec<bool>, p: &[usize], t: &[usize], tol: usize) -> usize {
            if pi == p.len() {
                return 0;
            }
            let mut best = rec(pi + 1, used, p, t, tol); // skip this prediction
            for (ti, &tv) in t.iter().enumerate() {
                if !used[ti] && p[pi].abs_diff(tv) <= tol {
                    used[ti] = true;
                    best = best.max(1 + rec(pi + 1, used, p, t, tol));
                    used[ti] = false;
                }
            }
            best
        }
        rec(0, &mut vec![false; t.len()], p, t, tol)
    }

    #[test]
    fn greedy_matches_bipartite_oracle_on_random_instances() {
        let mut rng = SplitMix64::new(314);
        for _ in 0..50 {
            let np = rng.next_index(8);
            let nt = 1 + rng.next_index(8);
            let p: Vec<usize> = (0..np).map(|_| rng.next_index(200)).collect();
            let t: Vec<usize> = (0..nt).map(|_| rng.next_index(200)).collect();
            let tol = 5 + rng.next_index(20);
            let greedy = score_boundaries(&p, &t, tol);
            let oracle = brute_force_max_matching(&p, &t, tol);
            assert_eq!(greedy.matched.len(), oracle, "p={p:?} t={t:?} tol={tol}");
        }
    }
}

#[cfg(test)]
mod detector_tests {
    use super::*;
    use crate::catalog::parse_catalog;
    use crate::codebook::build_codebook;
    use crate::sim::BandwidthTrace;
    use crate::tuner::tune;

    fn flat_trace(levels: &[(u64, usize)]) -> BandwidthTrace {
        let mut read = Vec::new();
        for &(level, n) in levels {
            read.extend(std::iter::repeat_n(level, n));
        }
        let n = read.len();
        BandwidthTrace {
            window_us: 4,
            read_bytes: read,
            write_bytes: vec![0; n],
        }
    }

    fn hand_profile(entries: &[(u64, f64)]) -> ProfileDb {
        ProfileDb {
            entries: entries
                .iter()
                .map(|&(duration_windows, median_window_bytes)| ProfileEntry {
                    label: format!("hand-{duration_windows}"),
                    config: TileConfig {
                        tile_oc: 1,
                        tile_ic: 1,
                        tile_h: 1,
                        tile_w: 1,
                    },
                    duration_windows,
                    median_window_bytes,
                })
                .collect(),
        }
    }

    fn noisy_codebook(params: &DetectorParams) -> crate::codebook::Codebook<f64> {
        // vocabulary trained on two-level synthetic material
        let mut rows = Vec::new();
        for level in [1000u64, 4000] {
            let t = flat_trace(&[(level, 400)]);
            rows.extend(segment_features(&t, params).unwrap());
        }
        build_codebook(&rows, 4, 7).unwrap()
    }

    #[test]
    fn single_level_trace_detects_nothing() {
        let params = DetectorParams::default();
        let cb = noisy_codebook(&params);
        let db = hand_profile(&[(600, 1000.0)]);
        let t = flat_trace(&[(1000, 600)]);
        let found = detect_boundaries(&t, &cb, &db, &params).unwrap();
        assert!(found.positions.is_empty());
    }

    #[test]
    fn two_level_step_found_within_tolerance() {
        let params = DetectorParams::default();
        let cb = noisy_codebook(&params);
        // both segments profile-matched at their durations and levels
        let db = hand_profile(&[(600, 1000.0), (500, 4000.0)]);
        let t = flat_trace(&[(1000, 600), (4000, 500)]);
        let found = detect_boundaries(&t, &cb, &db, &params).unwrap();
        assert_eq!(found.positions.len(), 1, "{found:?}");
        assert!(found.positions[0].abs_diff(600) <= params.win_len);
        assert!(found.confidence[0] > 0.0 && found.confidence[0] <= 1.0);
    }

    #[test]
    fn unmatched_step_is_pruned_by_validation() {
        let params = DetectorParams::default();
        let cb = noisy_codebook(&params);
        // profile db knows nothing near the segment's duration
        let db = hand_profile(&[(5000, 1000.0)]);
        let t = flat_trace(&[(1000, 600), (4000, 500)]);
        let found = detect_boundaries(&t, &cb, &db, &params).unwrap();
        assert!(found.positions.is_empty());
    }

    #[test]
    fn empty_codebook_and_profile_are_errors() {
        let params = DetectorParams::default();
        let cb = noisy_codebook(&params);
        let t = flat_trace(&[(1000, 300)]);
        assert!(detect_boundaries(&t, &cb, &ProfileDb::default(), &params).is_err());
    }

    #[test]
    fn profile_entry_counts_and_determinism() {
        let model = parse_catalog("one", "0,conv,8,8,3,3,16,16,1\n", 1).unwrap();
        let npu = crate::NpuConfig::default();
        let schedule = tune(&model, &npu).unwrap();
        // single layer, capped to one config: one entry per unit variant
        let db = build_profile_db(std::slice::from_ref(&model), &npu, std::slice::from_ref(&schedule), 1)
            .unwrap();
        assert_eq!(db.entries.len(), PROFILE_UNIT_VARIANTS);

        // uncapped: variants * legal configs, and durations reproduce exactly
        let legal = enumerate_tile_configs(model.layer(0), &npu).unwrap();
        let db2 =
            build_profile_db(std::slice::from_ref(&model), &npu, std::slice::from_ref(&schedule), 1000)
                .unwrap();
        assert_eq!(db2.entries.len(), PROFILE_UNIT_VARIANTS * legal.len());
        let db3 =
            build_profile_db(&[model], &npu, std::slice::from_ref(&schedule), 1000).unwrap();
        for (a, b) in db2.entries.iter().zip(&db3.entries) {
            assert_eq!(a.duration_windows, b.duration_windows);
            assert_eq!(a.median_window_bytes, b.median_window_bytes);
        }
    }

    #[test]
    fn detection_is_deterministic() {
        let params = DetectorParams::default();
        let cb = noisy_codebook(&params);
        let db = hand_profile(&[(600, 1000.0), (500, 4000.0)]);
        let t = flat_trace(&[(1000, 600), (4000, 500)]);
        let a = detect_boundaries(&t, &cb, &db, &params).unwrap();
        let b = detect_boundaries(&t, &cb, &db, &params).unwrap();
        assert_eq!(a, b);
    }
}
