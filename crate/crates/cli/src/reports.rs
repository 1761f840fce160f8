//! Report rendering: aligned plain text for humans, CSV twins for machines.
//! All numbers print with fixed precision so reruns are byte-identical.

use crate::pipeline::{BoundaryRow, ClfBench, DefendPoint, LEARNERS};
use npuscope_core::tuner::ExploreStats;
use std::fmt::Write as _;

pub fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "NA".to_string(),
    }
}

/// Boundary-detection report (used for both the unshaped and shaped runs).
/// The CSV columns are exactly: model, easy_precision, easy_recall,
/// all_precision, all_recall.
pub fn boundary_report(title: &str, rows: &[BoundaryRow]) -> (String, String) {
    let mut text = String::new();
    let _ = writeln!(text, "{title}");
    let _ = writeln!(
        text,
        "{:<10} {:>4} {:>4} {:>5}  {:>9} {:>9}  {:>9} {:>9}",
        "model", "easy", "all", "pred", "easy-prec", "easy-rec", "all-prec", "all-rec"
    );
    let mut csv = String::from("model,easy_precision,easy_recall,all_precision,all_recall\n");
    let mut sum_matched = 0usize;
    let mut sum_all = 0usize;
    for r in rows {
        let _ = writeln!(
            text,
            "{:<10} {:>4} {:>4} {:>5}  {:>9} {:>9}  {:>9} {:>9}",
            r.model,
            r.easy_n,
            r.all_n,
            r.predicted,
            fmt_opt(r.easy_precision),
            fmt_opt(r.easy_recall),
            fmt_opt(r.all_precision),
            fmt_opt(r.all_recall),
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.model,
            fmt_opt(r.easy_precision),
            fmt_opt(r.easy_recall),
            fmt_opt(r.all_precision),
            fmt_opt(r.all_recall),
        );
        sum_matched += r.matched_all;
        sum_all += r.all_n;
    }
    if sum_all > 0 {
        let _ = writeln!(
            text,
            "overall: {}/{} boundaries detected ({:.1}%)",
            sum_matched,
            sum_all,
            100.0 * sum_matched as f64 / sum_all as f64
        );
    }
    (text, csv)
}

/// Layer-type classification accuracy, learners by rows, models by columns.
pub fn classification_report(models: &[String], bench: &ClfBench) -> (String, String) {
    let mut text = String::new();
    let _ = writeln!(text, "layer-type classification accuracy (class-weighted)");
    let mut header = format!("{:<10}", "learner");
    for m in models {
        let _ = write!(header, " {m:>9}");
    }
    let _ = writeln!(text, "{header} {:>9}", "overall");
    let mut csv = String::from("learner,");
    csv.push_str(&models.join(","));
    csv.push_str(",overall\n");
    for (li, learner) in LEARNERS.iter().enumerate() {
        let (_, accs) = &bench.rows[li];
        let (_, overall) = bench.overall[li];
        let mut line = format!("{learner:<10}");
        let mut csv_line = learner.to_string();
        for a in accs {
            let _ = write!(line, " {a:>9.4}");
            let _ = write!(csv_line, ",{a:.4}");
        }
        let _ = writeln!(text, "{line} {overall:>9.4}");
        let _ = writeln!(csv, "{csv_line},{overall:.4}");
    }
    (text, csv)
}

/// Tile exploration summary plus per-model two-column plot data.
pub fn tune_report(rows: &[(String, u64, ExploreStats)]) -> (String, String) {
    let mut text = String::new();
    let _ = writeln!(text, "tile-size exploration (ratios vs tuned optimum)");
    let _ = writeln!(
        text,
        "{:<10} {:>12} {:>8} {:>8} {:>8}",
        "model", "best_cycles", "min", "median", "max"
    );
    let mut csv = String::from("model,best_cycles,min_ratio,median_ratio,max_ratio\n");
    for (model, best, stats) in rows {
        let _ = writeln!(
            text,
            "{model:<10} {best:>12} {:>8.4} {:>8.4} {:>8.4}",
            stats.min, stats.median, stats.max
        );
        let _ = writeln!(
            csv,
            "{model},{best},{:.4},{:.4},{:.4}",
            stats.min, stats.median, stats.max
        );
    }
    (text, csv)
}

/// Shaper sweep report: target, quantum, stall cycles, overhead per model.
pub fn defend_report(points: &[DefendPoint], quantum: u64) -> (String, String) {
    let mut text = String::new();
    let _ = writeln!(text, "traffic shaping sweep (quantum {quantum} bytes)");
    let _ = writeln!(
        text,
        "{:<10} {:>6} {:>12} {:>8} {:>10} {:>12} {:>10}",
        "model", "target", "bytes/s", "quantum", "overhead", "stall_cyc", "max_dev"
    );
    let mut csv = String::from(
        "model,target,target_bps,quantum_bytes,overhead,stall_cycles,max_window_dev,status\n",
    );
    for p in points {
        match &p.result {
            Ok(o) => {
                let _ = writeln!(
                    text,
                    "{:<10} {:>6} {:>12} {:>8} {:>10.4} {:>12} {:>10.1}",
                    p.model,
                    p.label,
                    p.target_bps,
                    quantum,
                    o.overhead,
                    o.stall_cycles,
                    o.max_window_dev
                );
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{:.4},{},{:.1},ok",
                    p.model,
                    p.label,
                    p.target_bps,
                    quantum,
                    o.overhead,
                    o.stall_cycles,
                    o.max_window_dev
                );
            }
            Err(msg) => {
                let _ = writeln!(
                    text,
                    "{:<10} {:>6} {:>12} {:>8} {:>10} {:>12} {:>10}  ({msg})",
                    p.model, p.label, p.target_bps, quantum, "-", "-", "-"
                );
                let _ = writeln!(
                    csv,
                    "{},{},{},{},NA,NA,NA,{msg}",
                    p.model, p.label, p.target_bps, quantum
                );
            }
        }
    }
    (text, csv)
}

/// Two-column plot data: sample index, ratio.
pub fn ratios_dat(samples: &[npuscope_core::tuner::ExploreSample]) -> String {
    let mut s = String::with_capacity(samples.len() * 16);
    for sample in samples {
        let _ = writeln!(s, "{} {:.6}", sample.index, sample.ratio);
    }
    s
}
