//! Plot-ready CSV outputs: verdicts, CDF tables and campaign results.

use carlo_core::carlo::Verdict;
use carlo_core::harness::{ExperimentResult, GroupAsr, PairResult};
use carlo_core::stats::EmpiricalDistribution;

use crate::dump::{csv_writer, finish, fmt_opt, fmt_sig9};
use crate::provenance::Provenance;

pub const VERDICT_HEADER: [&str; 7] = ["frame_id", "box_index", "label", "stage", "f", "g", "ms"];

#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRow {
    pub frame_id: String,
    pub box_index: usize,
    /// Per-box failures stay in the table with label `Error`.
    pub verdict: Result<Verdict, String>,
}

pub fn write_verdicts(rows: &[VerdictRow], prov: Option<&Provenance>) -> String {
    let mut w = csv_writer();
    w.write_record(VERDICT_HEADER).expect("in-memory write");
    for r in rows {
        let rec = match &r.verdict {
            Ok(v) => [
                r.frame_id.clone(),
                r.box_index.to_string(),
                v.label.as_str().into(),
                v.stage.as_str().into(),
                fmt_opt(v.f),
                fmt_opt(v.g),
                format!("{:.3}", v.ms),
            ],
            Err(_) => [
                r.frame_id.clone(),
                r.box_index.to_string(),
                "Error".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ],
        };
        w.write_record(&rec).expect("in-memory write");
    }
    finish(w, prov)
}

/// Long-format CDF table `set,value,cdf` with one step per distinct value.
pub fn write_cdf(sets: &[(&str, &EmpiricalDistribution)], prov: Option<&Provenance>) -> String {
    let mut w = csv_writer();
    w.write_record(["set", "value", "cdf"]).expect("in-memory write");
    for (name, d) in sets {
        for (v, c) in d.cdf_table() {
            w.write_record([name.to_string(), fmt_sig9(v), fmt_sig9(c)]).expect("in-memory write");
        }
    }
    finish(w, prov)
}

pub const ROW_HEADER: [&str; 16] = [
    "frame_id",
    "frame_index",
    "trace_index",
    "placement_range",
    "injected_points",
    "group",
    "target_x",
    "target_y",
    "target_yaw",
    "detections",
    "best_score",
    "success",
    "defended_success",
    "target_label",
    "error",
    "trace_source",
];

pub fn write_rows(rows: &[PairResult], trace_sources: &[String], prov: Option<&Provenance>) -> String {
    let mut w = csv_writer();
    w.write_record(ROW_HEADER).expect("in-memory write");
    for r in rows {
        let (tx, ty, tyaw) = match r.target_box {
            Some(b) => (fmt_sig9(b.center.x), fmt_sig9(b.center.y), fmt_sig9(b.yaw)),
            None => Default::default(),
        };
        w.write_record([
            r.frame_id.clone(),
            r.frame_index.to_string(),
            r.trace_index.to_string(),
            fmt_sig9(r.placement_range),
            r.injected_points.to_string(),
            r.group.map(|g| g.to_string()).unwrap_or_default(),
            tx,
            ty,
            tyaw,
            r.detections.to_string(),
            fmt_opt(r.best_score),
            (r.success as u8).to_string(),
            r.defended_success.map(|d| (d as u8).to_string()).unwrap_or_default(),
            r.target_label.map(|l| l.as_str().to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
            trace_sources.get(r.trace_index).cloned().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    finish(w, prov)
}

pub fn write_groups(groups: &[GroupAsr], prov: Option<&Provenance>) -> String {
    let mut w = csv_writer();
    w.write_record(["group", "points_lo", "points_hi", "samples", "successes", "asr", "defended_successes", "defended_asr"])
        .expect("in-memory write");
    for g in groups {
        w.write_record([
            g.group.to_string(),
            (g.lo + 1).to_string(),
            g.hi.to_string(),
            g.samples.to_string(),
            g.successes.to_string(),
            fmt_sig9(g.asr()),
            g.defended_successes.map(|d| d.to_string()).unwrap_or_default(),
            fmt_opt(g.defended_asr()),
        ])
        .expect("in-memory write");
    }
    finish(w, prov)
}

/// `metric,value` pairs.
pub fn write_summary(items: &[(String, String)], prov: Option<&Provenance>) -> String {
    let mut w = csv_writer();
    w.write_record(["metric", "value"]).expect("in-memory write");
    for (k, v) in items {
        w.write_record([k, v]).expect("in-memory write");
    }
    finish(w, prov)
}

/// Headline numbers of a campaign, all recomputable from the rows.
pub fn campaign_summary(r: &ExperimentResult) -> Vec<(String, String)> {
    let ok = r.rows.iter().filter(|x| x.error.is_none()).count();
    vec![
        ("detector".into(), "proxy".into()),
        ("pairs".into(), r.rows.len().to_string()),
        ("pairs_ok".into(), ok.to_string()),
        ("pairs_failed".into(), (r.rows.len() - ok).to_string()),
        ("asr".into(), fmt_opt(r.asr)),
        ("defended_asr".into(), fmt_opt(r.defended_asr)),
    ]
}
