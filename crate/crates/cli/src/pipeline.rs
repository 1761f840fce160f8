//! Shared orchestration between the CLI commands and the acceptance suite:
//! models, tuned schedules, traces, the attacker kit (profile + vocabulary),
//! boundary scoring rows, the classification benchmark, and the shaper sweep.

use crate::config::ExperimentConfig;
use anyhow::{anyhow, Context, Result};
use npuscope_core::classifier::{
    baseline_time_only, build_dataset, evaluate, make_profile_runs, resample_series, train_cnn,
    train_mlp, train_svm, Dataset, FeatureLayout, TrainedClassifier,
};
use npuscope_core::codebook::{build_codebook, Codebook};
use npuscope_core::detector::{
    balance_codebook_rows, build_profile_db, collect_codebook_rows, detect_boundaries,
    score_boundaries, BoundarySet, ProfileDb,
};
use npuscope_core::features::{median, std_dev};
use npuscope_core::rng::SplitMix64;
use npuscope_core::shaper::{
    mean_demand_bps, peak_window_bps, shape, shaped_trace, ShapedResult, ShaperConfig,
};
use npuscope_core::sim::LayerSpan;
use npuscope_core::{
    inject_noise, label_boundaries, load_model_with, simulate_inference, tune, BandwidthTrace,
    BoundaryClass, Error as CoreError, ModelSpec, Scalar, SimResult, TileSchedule,
};

/// Loaded catalogs and their tuned schedules; everything downstream hangs off
/// this.
pub struct Workbench {
    pub cfg: ExperimentConfig,
    pub models: Vec<ModelSpec>,
    pub schedules: Vec<TileSchedule>,
}

impl Workbench {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.npu.validate().map_err(|e| anyhow!("{e}"))?;
        let mut models = Vec::new();
        let mut schedules = Vec::new();
        for name in &cfg.models {
            let model = load_model_with(name, cfg.element_size).map_err(|e| anyhow!("{e}"))?;
            let schedule = tune(&model, &cfg.npu)
                .with_context(|| format!("tuning {name}"))
                .map_err(|e| anyhow!("{e}"))?;
            models.push(model);
            schedules.push(schedule);
        }
        Ok(Self {
            cfg,
            models,
            schedules,
        })
    }

    /// Simulate model `i` and apply the configured measurement noise.
    pub fn victim_run(&self, i: usize) -> Result<SimResult> {
        let mut sim = simulate_inference(&self.models[i], &self.schedules[i], &self.cfg.npu)
            .map_err(|e| anyhow!("{e}"))?;
        if self.cfg.noise_amplitude > 0.0 {
            let seed = SplitMix64::derive(self.cfg.seed, i as u64).next_u64();
            sim.trace = inject_noise(&sim.trace, self.cfg.noise_amplitude, seed);
        }
        Ok(sim)
    }

    /// Attacker-side offline material: profile database and vocabulary.
    pub fn attack_kit(&self) -> Result<AttackKit> {
        let profile = build_profile_db(
            &self.models,
            &self.cfg.npu,
            &self.schedules,
            self.cfg.profile_cap,
        )
        .map_err(|e| anyhow!("{e}"))?;
        let rows = collect_codebook_rows(
            &self.models,
            &self.schedules,
            &self.cfg.npu,
            &self.cfg.detector,
            self.cfg.codebook_alt_configs,
        )
        .map_err(|e| anyhow!("{e}"))?;
        let rows = balance_codebook_rows(rows, self.cfg.codebook_rows_cap);
        let codebook = build_codebook(&rows, self.cfg.detector.codebook_k, self.cfg.seed)
            .map_err(|e| anyhow!("{e}"))?;
        Ok(AttackKit { profile, codebook })
    }
}

pub struct AttackKit {
    pub profile: ProfileDb,
    pub codebook: Codebook<Scalar>,
}

/// One row of the boundary-detection report.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRow {
    pub model: String,
    pub easy_n: usize,
    pub all_n: usize,
    pub predicted: usize,
    pub matched_all: usize,
    pub matched_easy: usize,
    pub easy_precision: Option<f64>,
    pub easy_recall: Option<f64>,
    pub all_precision: Option<f64>,
    pub all_recall: Option<f64>,
}

/// True boundary positions (weight-layer span starts after the first) from a
/// span list.
pub fn boundaries_from_spans(model: &ModelSpec, spans: &[LayerSpan]) -> Vec<usize> {
    model
        .weight_layers()
        .iter()
        .skip(1)
        .map(|&id| {
            spans
                .iter()
                .find(|s| s.layer == id)
                .map(|s| s.start_window)
                .unwrap_or(0)
        })
        .collect()
}

/// Score one detection against truth, reporting the easy (T1) row under the
/// strict-row convention: predictions explained by non-easy boundaries leave
/// the easy denominator, and easy recall is measured against all boundaries.
pub fn boundary_row(
    model: &ModelSpec,
    schedule: &TileSchedule,
    detected: &BoundarySet,
    truth: &[usize],
    tau: usize,
) -> Result<BoundaryRow> {
    let labels = label_boundaries(model, schedule).map_err(|e| anyhow!("{e}"))?;
    let easy_truth: Vec<usize> = truth
        .iter()
        .zip(&labels)
        .filter(|(_, l)| l.class == BoundaryClass::T1DiffTileSize)
        .map(|(&p, _)| p)
        .collect();
    let all = score_boundaries(&detected.positions, truth, tau);
    let easy_set: std::collections::BTreeSet<usize> = easy_truth.iter().copied().collect();
    let matched_easy = all
        .matched
        .iter()
        .filter(|&&(_, t)| easy_set.contains(&t))
        .count();
    let matched_other = all.matched.len() - matched_easy;
    let easy_denom = all.predicted.saturating_sub(matched_other);
    Ok(BoundaryRow {
        model: model.name.clone(),
        easy_n: easy_truth.len(),
        all_n: truth.len(),
        predicted: all.predicted,
        matched_all: all.matched.len(),
        matched_easy,
        easy_precision: (easy_denom > 0).then(|| matched_easy as f64 / easy_denom as f64),
        easy_recall: (!truth.is_empty()).then(|| matched_easy as f64 / truth.len() as f64),
        all_precision: all.precision(),
        all_recall: all.recall(),
    })
}

/// Detect boundaries on a trace with the workbench's attacker kit.
pub fn detect(
    bench: &Workbench,
    kit: &AttackKit,
    trace: &BandwidthTrace,
) -> Result<BoundarySet> {
    detect_boundaries(trace, &kit.codebook, &kit.profile, &bench.cfg.detector)
        .map_err(|e| anyhow!("{e}"))
}

/// Classification benchmark results: per learner, per model, the
/// class-weighted accuracy, plus the layer-weighted overall.
#[derive(Debug, Clone)]
pub struct ClfBench {
    /// learner name -> per-model weighted accuracy, in model order
    pub rows: Vec<(String, Vec<f64>)>,
    /// learner name -> overall (layer-count weighted across models)
    pub overall: Vec<(String, f64)>,
    /// trained classifiers to persist: (model, learner, dump text)
    pub dumps: Vec<(String, String, String)>,
}

pub const LEARNERS: [&str; 7] = [
    "time_only",
    "svm",
    "svm_dwt",
    "mlp",
    "mlp_dwt",
    "cnn",
    "cnn_dwt",
];

fn train_one(
    name: &str,
    ds: &Dataset,
    hyper: &npuscope_core::classifier::TrainHyper,
    seed: u64,
) -> Result<TrainedClassifier> {
    let r = match name {
        "time_only" => baseline_time_only(ds),
        "svm" | "svm_dwt" => train_svm(ds, hyper, seed),
        "mlp" | "mlp_dwt" => train_mlp(ds, hyper, seed),
        "cnn" | "cnn_dwt" => train_cnn(ds, hyper, seed),
        _ => return Err(anyhow!("unknown learner {name}")),
    };
    r.map_err(|e| anyhow!("{e}"))
}

/// Run the full Table-2-style benchmark over every model in the workbench.
pub fn classification_bench(bench: &Workbench) -> Result<ClfBench> {
    let cfg = &bench.cfg;
    let mut per_model: Vec<Vec<f64>> = vec![Vec::new(); LEARNERS.len()];
    let mut weights: Vec<f64> = Vec::new();
    let mut dumps = Vec::new();
    for (model, schedule) in bench.models.iter().zip(&bench.schedules) {
        let runs = make_profile_runs(
            model,
            schedule,
            &cfg.npu,
            cfg.replicas,
            cfg.dataset_noise,
            cfg.dataset_seed,
        )
        .map_err(|e| anyhow!("{e}"))?;
        let ds_raw = build_dataset(&runs, false, cfg.split_seed).map_err(|e| anyhow!("{e}"))?;
        let ds_dwt = build_dataset(&runs, true, cfg.split_seed).map_err(|e| anyhow!("{e}"))?;
        weights.push(model.weight_layers().len() as f64);
        for (li, learner) in LEARNERS.iter().enumerate() {
            let ds = if learner.ends_with("_dwt") || *learner == "time_only" {
                &ds_dwt
            } else {
                &ds_raw
            };
            let clf = train_one(learner, ds, &cfg.hyper, cfg.train_seed)?;
            let report = evaluate(&clf, ds, &ds.test_idx).map_err(|e| anyhow!("{e}"))?;
            per_model[li].push(report.weighted_accuracy);
            dumps.push((model.name.clone(), learner.to_string(), clf.to_dump()));
        }
    }
    let total_w: f64 = weights.iter().sum();
    let mut rows = Vec::new();
    let mut overall = Vec::new();
    for (li, learner) in LEARNERS.iter().enumerate() {
        let accs = per_model[li].clone();
        let o = accs
            .iter()
            .zip(&weights)
            .map(|(a, w)| a * w)
            .sum::<f64>()
            / total_w;
        rows.push((learner.to_string(), accs));
        overall.push((learner.to_string(), o));
    }
    Ok(ClfBench {
        rows,
        overall,
        dumps,
    })
}

/// End-to-end layer typing: split the victim trace at detected boundaries and
/// classify each segment with the model's strongest learner.
pub fn end_to_end_typing(
    bench: &Workbench,
    model_idx: usize,
    sim: &SimResult,
    detected: &BoundarySet,
) -> Result<EndToEnd> {
    let cfg = &bench.cfg;
    let model = &bench.models[model_idx];
    let schedule = &bench.schedules[model_idx];
    let runs = make_profile_runs(
        model,
        schedule,
        &cfg.npu,
        cfg.replicas,
        cfg.dataset_noise,
        cfg.dataset_seed,
    )
    .map_err(|e| anyhow!("{e}"))?;
    let mut ds = build_dataset(&runs, true, cfg.split_seed).map_err(|e| anyhow!("{e}"))?;
    // the victim's write channel serializes stores across layers, so the
    // per-segment store volume is unrecoverable there; retrain without it
    let write_idx = ds.layout.write_total_index();
    for (x, _) in ds.samples.iter_mut() {
        x[write_idx] = 0.0;
    }
    let clf_time = train_one("time_only", &ds, &cfg.hyper, cfg.train_seed)?;
    let clf_mlp = train_one("mlp_dwt", &ds, &cfg.hyper, cfg.train_seed)?;

    // segments between consecutive detected boundaries (plus trace edges)
    let mut cuts = vec![0usize];
    cuts.extend(detected.positions.iter().copied());
    let span_end = sim
        .layer_spans
        .last()
        .map(|s| s.end_window)
        .unwrap_or(sim.trace.len())
        .min(sim.trace.len());
    cuts.push(span_end);
    cuts.dedup();

    let layout = FeatureLayout::new(true);
    let mut correct_time = 0usize;
    let mut correct_mlp = 0usize;
    let mut total = 0usize;
    // a victim segment runs to the next layer launch and so includes the
    // activation/pool tail; trim it back to the layer's own extent (last
    // read plus the sync pause) so it matches the profile-run spans
    let wc = cfg.npu.window_cycles(cfg.window_us);
    let sync_margin = (cfg.npu.layer_sync_cycles.div_ceil(wc)) as usize + 1;
    for w in cuts.windows(2) {
        let (a, mut b) = (w[0], w[1].min(sim.trace.len()));
        if b <= a {
            continue;
        }
        let read_end =
            npuscope_core::classifier::trim_to_last_read(&sim.trace.read_bytes, a, b);
        b = (read_end + sync_margin).min(b);
        // ground truth: the weight layer covering the segment midpoint
        let mid = (a + b) / 2;
        let Some(span) = sim
            .layer_spans
            .iter()
            .find(|s| {
                s.start_window <= mid
                    && mid < s.end_window
                    && model.layer(s.layer).kind.loads_weights()
            })
            .or_else(|| {
                sim.layer_spans
                    .iter()
                    .filter(|s| model.layer(s.layer).kind.loads_weights())
                    .min_by_key(|s| s.start_window.abs_diff(mid))
            })
        else {
            continue;
        };
        let truth_label = npuscope_core::detector::class_label(
            model.layer(span.layer),
            &schedule.per_layer[&span.layer],
        );
        let Some(truth_idx) = ds.label_names.iter().position(|l| *l == truth_label) else {
            continue;
        };
        let reads = &sim.trace.read_bytes[a..b];
        let series = resample_series(reads, layout.series_len);
        let readsf: Vec<Scalar> = reads.iter().map(|&x| x as Scalar).collect();
        let mut row = Vec::with_capacity(layout.dim());
        row.push((b - a) as Scalar);
        row.push(readsf.iter().sum());
        row.push(median(&readsf));
        row.push(readsf.iter().cloned().fold(0.0, Scalar::max));
        row.push(std_dev(&readsf));
        row.push(0.0); // write volume not recoverable per victim segment
        row.extend_from_slice(&series);
        let (approx, details) =
            npuscope_core::features::haar_dwt(&series, layout.dwt_levels)
                .map_err(|e| anyhow!("{e}"))?;
        let l2 = |xs: &[Scalar]| xs.iter().map(|x| x * x).sum::<Scalar>().sqrt();
        for d in &details {
            row.push(l2(d));
        }
        row.push(l2(&approx));
        for d in &details {
            row.extend_from_slice(d);
        }
        row.extend_from_slice(&approx);
        if clf_time.predict(&row) == truth_idx {
            correct_time += 1;
        }
        if clf_mlp.predict(&row) == truth_idx {
            correct_mlp += 1;
        }
        total += 1;
    }
    let frac = |c: usize| if total > 0 { c as f64 / total as f64 } else { 0.0 };
    Ok(EndToEnd {
        segments: total,
        time_only_accuracy: frac(correct_time),
        mlp_dwt_accuracy: frac(correct_mlp),
    })
}

/// End-to-end layer typing outcome for one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndToEnd {
    pub segments: usize,
    pub time_only_accuracy: f64,
    pub mlp_dwt_accuracy: f64,
}

/// One point of the shaper sweep.
#[derive(Debug, Clone)]
pub struct DefendPoint {
    pub model: String,
    /// "0.50x" style label, or "mean".
    pub label: String,
    pub target_bps: u64,
    pub result: std::result::Result<ShapedOutcome, String>,
}

#[derive(Debug, Clone)]
pub struct ShapedOutcome {
    pub overhead: f64,
    pub stall_cycles: u64,
    /// Max per-window deviation from target rate, full windows only.
    pub max_window_dev: f64,
    pub shaped: ShapedResult,
}

/// Run the shaper sweep for one model; targets are fractions of the model's
/// peak window bandwidth plus its mean demand rate.
pub fn defend_sweep(bench: &Workbench, i: usize, sim: &SimResult) -> Result<Vec<DefendPoint>> {
    let cfg = &bench.cfg;
    let model = &bench.models[i];
    let peak = peak_window_bps(&sim.trace);
    let mean = mean_demand_bps(sim.trace.total_read(), sim.total_cycles, cfg.npu.clock_hz);
    let mut targets: Vec<(String, u64)> = cfg
        .shaper_fracs
        .iter()
        .map(|f| (format!("{f:.2}x"), (peak as f64 * f) as u64))
        .collect();
    targets.push(("mean".to_string(), mean));

    let mut out = Vec::new();
    for (label, target_bps) in targets {
        let mut scfg = ShaperConfig::new(target_bps.max(1), &cfg.npu);
        scfg.quantum_bytes = cfg.quantum();
        scfg.write_period_us = cfg.write_period_us;
        scfg.cycle_cap_factor = cfg.cycle_cap_factor;
        let result = match shape(model, &bench.schedules[i], &cfg.npu, &scfg) {
            Ok(shaped) => {
                let trace = shaped_trace(&shaped, cfg.window_us);
                let expected =
                    shaped.target_bps_effective as f64 * cfg.window_us as f64 / 1e6;
                let n = trace.len().saturating_sub(1);
                let max_dev = trace.read_bytes[..n]
                    .iter()
                    .map(|&b| (b as f64 - expected).abs())
                    .fold(0.0, f64::max);
                Ok(ShapedOutcome {
                    overhead: shaped.overhead,
                    stall_cycles: shaped.stall_cycles,
                    max_window_dev: max_dev,
                    shaped,
                })
            }
            Err(CoreError::InfeasibleTarget { target_bps, cap }) => Err(format!(
                "infeasible: target {target_bps} B/s exceeded {cap} cycles"
            )),
            Err(e) => return Err(anyhow!("{e}")),
        };
        out.push(DefendPoint {
            model: model.name.clone(),
            label,
            target_bps,
            result,
        });
    }
    Ok(out)
}

/// Parse a trace CSV produced by `simulate`.
pub fn load_trace(path: &std::path::Path) -> Result<BandwidthTrace> {
    let text = crate::fsio::read(path)?;
    BandwidthTrace::from_csv(&text).map_err(|e| anyhow!("{e}"))
}

/// Spans CSV: `layer_id,kind,start_window,end_window,is_weight`.
pub fn spans_to_csv(model: &ModelSpec, spans: &[LayerSpan]) -> String {
    let mut s = String::from("layer_id,kind,start_window,end_window,is_weight\n");
    for sp in spans {
        let layer = model.layer(sp.layer);
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            sp.layer,
            layer.kind,
            sp.start_window,
            sp.end_window,
            layer.kind.loads_weights() as u8
        ));
    }
    s
}

/// One row of a spans CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanRow {
    pub layer_id: usize,
    pub kind: String,
    pub start_window: usize,
    pub end_window: usize,
    pub is_weight: bool,
}

pub fn spans_from_csv(text: &str) -> Result<Vec<SpanRow>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(anyhow!("spans CSV line {}: expected 5 columns", i + 1));
        }
        out.push(SpanRow {
            layer_id: cols[0].parse().map_err(|_| anyhow!("bad layer id"))?,
            kind: cols[1].to_string(),
            start_window: cols[2].parse().map_err(|_| anyhow!("bad start"))?,
            end_window: cols[3].parse().map_err(|_| anyhow!("bad end"))?,
            is_weight: cols[4] == "1",
        });
    }
    Ok(out)
}

/// Schedule CSV: one row per weight layer with its chosen blocking.
pub fn schedule_to_csv(model: &ModelSpec, schedule: &TileSchedule) -> String {
    let mut s =
        String::from("layer_id,tile_oc,tile_ic,tile_h,tile_w,num_tiles,bytes_per_tile\n");
    for (&id, cfg) in &schedule.per_layer {
        let (n, b) = npuscope_core::tiles_for(model.layer(id), cfg).unwrap_or((0, 0));
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            id, cfg.tile_oc, cfg.tile_ic, cfg.tile_h, cfg.tile_w, n, b
        ));
    }
    s
}
