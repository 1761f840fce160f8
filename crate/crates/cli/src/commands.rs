//! The five subcommands. Every command is a pure function of (config, input
//! files, seeds): identical invocations produce byte-identical outputs.

use crate::config::ExperimentConfig;
use crate::fsio::{read, write_atomic};
use crate::pipeline::{
    boundaries_from_spans, boundary_row, classification_bench, defend_sweep, detect,
    end_to_end_typing, load_trace, schedule_to_csv, spans_to_csv, BoundaryRow, Workbench,
};
use crate::reports;
use anyhow::{anyhow, bail, Context, Result};
use npuscope_core::features::WindowFeatures;
use npuscope_core::shaper::shaped_trace;
use npuscope_core::{explore, Scalar};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub struct Outcome {
    pub written: Vec<PathBuf>,
}

fn emit(out: &mut Outcome, path: PathBuf, content: &str) -> Result<()> {
    write_atomic(&path, content)?;
    println!("wrote {}", path.display());
    out.written.push(path);
    Ok(())
}

fn write_resolved_config(cfg: &ExperimentConfig, out_dir: &Path, out: &mut Outcome) -> Result<()> {
    emit(out, out_dir.join("config.resolved.txt"), &cfg.render())
}

/// Run a per-model step for every model, collecting failures so one bad
/// model does not hide the rest; the error lists every failed item.
fn for_each_model<F>(bench: &Workbench, mut step: F) -> Result<()>
where
    F: FnMut(usize) -> Result<()>,
{
    let mut failures = Vec::new();
    for i in 0..bench.models.len() {
        if let Err(e) = step(i) {
            eprintln!("failed: {}: {e:#}", bench.models[i].name);
            failures.push(format!("{}: {e:#}", bench.models[i].name));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        bail!("{} item(s) failed:\n  {}", failures.len(), failures.join("\n  "))
    }
}

/// `simulate`: one trace + ground-truth spans + schedule per model.
pub fn cmd_simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    let mut out = Outcome { written: vec![] };
    let bench = Workbench::new(cfg.clone())?;
    write_resolved_config(cfg, out_dir, &mut out)?;
    for_each_model(&bench, |i| {
        let model = &bench.models[i];
        let sim = bench.victim_run(i)?;
        emit(
            &mut out,
            out_dir.join(format!("traces/{}.trace.csv", model.name)),
            &sim.trace.to_csv(),
        )?;
        emit(
            &mut out,
            out_dir.join(format!("traces/{}.spans.csv", model.name)),
            &spans_to_csv(model, &sim.layer_spans),
        )?;
        emit(
            &mut out,
            out_dir.join(format!("schedules/{}.schedule.csv", model.name)),
            &schedule_to_csv(model, &bench.schedules[i]),
        )?;
        println!(
            "simulated {}: {} windows, {} cycles",
            model.name,
            sim.trace.len(),
            sim.total_cycles
        );
        Ok(())
    })?;
    Ok(out)
}

/// `tune`: best schedule summary plus the sampled overhead distribution.
pub fn cmd_tune(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    let mut out = Outcome { written: vec![] };
    let bench = Workbench::new(cfg.clone())?;
    write_resolved_config(cfg, out_dir, &mut out)?;
    let mut rows = Vec::new();
    for (i, model) in bench.models.iter().enumerate() {
        let (samples, stats) = explore(model, &cfg.npu, cfg.explore_samples, cfg.seed)
            .map_err(|e| anyhow!("{e}"))?;
        emit(
            &mut out,
            out_dir.join(format!("tune/{}.ratios.dat", model.name)),
            &reports::ratios_dat(&samples),
        )?;
        emit(
            &mut out,
            out_dir.join(format!("schedules/{}.schedule.csv", model.name)),
            &schedule_to_csv(model, &bench.schedules[i]),
        )?;
        rows.push((model.name.clone(), stats.best_cycles, stats));
    }
    let (text, csv) = reports::tune_report(&rows);
    emit(&mut out, out_dir.join("tune/tune_report.txt"), &text)?;
    emit(&mut out, out_dir.join("tune/tune_report.csv"), &csv)?;
    print!("{text}");
    Ok(out)
}

fn feature_dump(trace: &npuscope_core::BandwidthTrace, cfg: &ExperimentConfig) -> Result<String> {
    // documented column order: statistics, then DWT coefficients level by
    // level (read channel)
    let names = WindowFeatures::<Scalar>::column_names(cfg.detector.win_len, cfg.detector.dwt_levels);
    let mut s = format!("segment,{}\n", names.join(","));
    let wins = npuscope_core::features::sliding_windows(
        trace.len(),
        cfg.detector.win_len,
        cfg.detector.stride,
    );
    for (i, r) in wins.into_iter().enumerate() {
        let read: Vec<Scalar> = trace.read_bytes[r].iter().map(|&b| b as Scalar).collect();
        let f = npuscope_core::features::extract_features(&read, cfg.detector.dwt_levels)
            .map_err(|e| anyhow!("{e}"))?;
        let row: Vec<String> = f.flatten().iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(s, "{i},{}", row.join(","));
    }
    Ok(s)
}

/// `attack`: boundary detection and layer-type classification on the traces
/// produced by `simulate`.
pub fn cmd_attack(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    let mut out = Outcome { written: vec![] };
    let bench = Workbench::new(cfg.clone())?;
    // traces must exist before the attack runs
    for name in &cfg.models {
        let p = out_dir.join(format!("traces/{name}.trace.csv"));
        if !p.exists() {
            bail!(
                "missing trace {} (run `simulate` into the same --out first)",
                p.display()
            );
        }
    }
    let kit = bench.attack_kit()?;
    let mut rows: Vec<BoundaryRow> = Vec::new();
    let mut e2e_lines = String::from("model,segments,time_only_accuracy,mlp_dwt_accuracy\n");
    for (i, model) in bench.models.iter().enumerate() {
        let trace = load_trace(&out_dir.join(format!("traces/{}.trace.csv", model.name)))?;
        // ground truth comes from the span file simulate wrote
        let span_rows = crate::pipeline::spans_from_csv(&read(
            &out_dir.join(format!("traces/{}.spans.csv", model.name)),
        )?)?;
        let truth: Vec<usize> = span_rows
            .iter()
            .filter(|r| r.is_weight)
            .skip(1)
            .map(|r| r.start_window)
            .collect();
        let sim = bench.victim_run(i)?; // spans for end-to-end truth labels
        let detected = detect(&bench, &kit, &trace)?;
        rows.push(boundary_row(
            model,
            &bench.schedules[i],
            &detected,
            &truth,
            cfg.detector.tau,
        )?);
        emit(
            &mut out,
            out_dir.join(format!("attack/{}.features.csv", model.name)),
            &feature_dump(&trace, cfg)?,
        )?;
        emit(
            &mut out,
            out_dir.join(format!("attack/{}.boundaries.csv", model.name)),
            &{
                let mut s = String::from("position,confidence\n");
                for (p, c) in detected.positions.iter().zip(&detected.confidence) {
                    let _ = writeln!(s, "{p},{c:.4}");
                }
                s
            },
        )?;
        let e2e = end_to_end_typing(&bench, i, &sim, &detected)?;
        let _ = writeln!(
            e2e_lines,
            "{},{},{:.4},{:.4}",
            model.name, e2e.segments, e2e.time_only_accuracy, e2e.mlp_dwt_accuracy
        );
    }
    let (text, csv) = reports::boundary_report("boundary detection (unshaped)", &rows);
    emit(&mut out, out_dir.join("attack/boundary_report.txt"), &text)?;
    emit(&mut out, out_dir.join("attack/boundary_report.csv"), &csv)?;
    print!("{text}");

    let clf = classification_bench(&bench)?;
    let (text2, csv2) = reports::classification_report(&cfg.models, &clf);
    emit(&mut out, out_dir.join("attack/classification_report.txt"), &text2)?;
    emit(&mut out, out_dir.join("attack/classification_report.csv"), &csv2)?;
    print!("{text2}");
    for (model, learner, dump) in &clf.dumps {
        emit(
            &mut out,
            out_dir.join(format!("models/{model}.{learner}.clf")),
            dump,
        )?;
    }
    emit(
        &mut out,
        out_dir.join("attack/end_to_end_typing.csv"),
        &e2e_lines,
    )?;
    Ok(out)
}

/// `defend`: shaper sweep, shaped traces at the half-peak point, and the
/// post-defense attack rerun.
pub fn cmd_defend(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    let mut out = Outcome { written: vec![] };
    let bench = Workbench::new(cfg.clone())?;
    write_resolved_config(cfg, out_dir, &mut out)?;
    let kit = bench.attack_kit()?;
    let mut sweep = Vec::new();
    let mut table3: Vec<BoundaryRow> = Vec::new();
    for (i, model) in bench.models.iter().enumerate() {
        let sim = bench.victim_run(i)?;
        let points = defend_sweep(&bench, i, &sim)?;
        // the half-peak point doubles as the post-defense attack target
        for p in &points {
            if p.label == "0.50x" {
                if let Ok(o) = &p.result {
                    let trace = shaped_trace(&o.shaped, cfg.window_us);
                    emit(
                        &mut out,
                        out_dir.join(format!("defend/{}.shaped.trace.csv", model.name)),
                        &trace.to_csv(),
                    )?;
                    let detected = detect(&bench, &kit, &trace)?;
                    let truth = boundaries_from_spans(model, &o.shaped.layer_spans);
                    table3.push(boundary_row(
                        model,
                        &bench.schedules[i],
                        &detected,
                        &truth,
                        cfg.detector.tau,
                    )?);
                }
            }
        }
        sweep.extend(points);
    }
    let (text, csv) = reports::defend_report(&sweep, cfg.quantum());
    emit(&mut out, out_dir.join("defend/shaper_sweep.txt"), &text)?;
    emit(&mut out, out_dir.join("defend/shaper_sweep.csv"), &csv)?;
    print!("{text}");
    let (t3, c3) = reports::boundary_report(
        "boundary detection (shaped, target = 0.50x peak)",
        &table3,
    );
    emit(&mut out, out_dir.join("defend/boundary_report_shaped.txt"), &t3)?;
    emit(&mut out, out_dir.join("defend/boundary_report_shaped.csv"), &c3)?;
    print!("{t3}");
    Ok(out)
}

/// `report`: re-render the aligned-text reports from the CSV twins already in
/// the output directory.
pub fn cmd_report(_cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    let mut out = Outcome { written: vec![] };
    let mut regenerated = 0;
    for (csv_rel, txt_rel, title) in [
        (
            "attack/boundary_report.csv",
            "attack/boundary_report.txt",
            "boundary detection (unshaped)",
        ),
        (
            "defend/boundary_report_shaped.csv",
            "defend/boundary_report_shaped.txt",
            "boundary detection (shaped, target = 0.50x peak)",
        ),
    ] {
        let csv_path = out_dir.join(csv_rel);
        if !csv_path.exists() {
            continue;
        }
        let body = read(&csv_path)?;
        let mut text = String::from(title);
        text.push('\n');
        let _ = writeln!(
            text,
            "{:<10} {:>9} {:>9} {:>9} {:>9}",
            "model", "easy-prec", "easy-rec", "all-prec", "all-rec"
        );
        for line in body.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() == 5 {
                let _ = writeln!(
                    text,
                    "{:<10} {:>9} {:>9} {:>9} {:>9}",
                    cols[0], cols[1], cols[2], cols[3], cols[4]
                );
            }
        }
        emit(&mut out, out_dir.join(txt_rel), &text)?;
        regenerated += 1;
    }
    for rel in ["attack/classification_report.csv", "tune/tune_report.csv", "defend/shaper_sweep.csv"] {
        let csv_path = out_dir.join(rel);
        if !csv_path.exists() {
            continue;
        }
        let body = read(&csv_path)?;
        let mut text = String::new();
        for line in body.lines() {
            let cols: Vec<&str> = line.split(',').collect();
            let mut row = String::new();
            for (i, c) in cols.iter().enumerate() {
                if i == 0 {
                    let _ = write!(row, "{c:<12}");
                } else {
                    let _ = write!(row, " {c:>12}");
                }
            }
            let _ = writeln!(text, "{row}");
        }
        emit(&mut out, csv_path.with_extension("txt"), &text)?;
        regenerated += 1;
    }
    if regenerated == 0 {
        bail!("no report CSVs found under {}", out_dir.display());
    }
    Ok(out)
}

/// Entry point shared by main and the integration tests.
pub fn run(cmd: &str, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Outcome> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    match cmd {
        "simulate" => cmd_simulate(cfg, out_dir),
        "tune" => cmd_tune(cfg, out_dir),
        "attack" => cmd_attack(cfg, out_dir),
        "defend" => cmd_defend(cfg, out_dir),
        "report" => cmd_report(cfg, out_dir),
        _ => bail!("unknown command {cmd}"),
    }
}
