use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{best_success_score, proxy_detect, Detection, ProxyDetectorConfig, SuccessRule};
use crate::attack::{size_group, spoof_front_near, AttackCapability, AttackTrace, VehicleTemplate};
use crate::carlo::{carlo_batch, CarloConfig, Clock, Label, NoClock};
use crate::cloud::{PointCloud, SensorModel};
use crate::geometry::Box3D;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    pub capability: AttackCapability,
    pub template: VehicleTemplate,
    pub rule: SuccessRule,
    pub detector: ProxyDetectorConfig,
    pub defense: Option<CarloConfig>,
    /// Azimuth of the front-near spot; the range is drawn per pair from the
    /// capability's distance band.
    pub azimuth_deg: f64,
    pub group_width: usize,
    pub seed: u64,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        Self {
            capability: AttackCapability::default(),
            template: VehicleTemplate::default(),
            rule: SuccessRule::default(),
            detector: ProxyDetectorConfig::default(),
            defense: None,
            azimuth_deg: 0.0,
            group_width: 10,
            seed: 0,
        }
    }
}

/// Outcome of one (frame, trace) injection.
#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub frame_id: String,
    pub frame_index: usize,
    pub trace_index: usize,
    pub placement_range: f64,
    pub injected_points: usize,
    pub group: Option<usize>,
    pub target_box: Option<Box3D>,
    pub detections: usize,
    /// Best score at the target location before the defense.
    pub best_score: Option<f64>,
    pub success: bool,
    pub defended_success: Option<bool>,
    /// CARLO label of the best detection at the target, if any was judged.
    pub target_label: Option<Label>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupAsr {
    pub group: usize,
    /// Point counts covered: `(lo, hi]`.
    pub lo: usize,
    pub hi: usize,
    pub samples: usize,
    pub successes: usize,
    pub defended_successes: Option<usize>,
}

impl GroupAsr {
    pub fn asr(&self) -> f64 {
        self.successes as f64 / self.samples as f64
    }

    pub fn defended_asr(&self) -> Option<f64> {
        self.defended_successes.map(|s| s as f64 / self.samples as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    pub rows: Vec<PairResult>,
    /// Over pairs that ran without error; `None` when there were none.
    pub asr: Option<f64>,
    pub defended_asr: Option<f64>,
    pub groups: Vec<GroupAsr>,
}

fn pair_seed(seed: u64, frame: usize, trace: usize) -> u64 {
    seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (trace as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Placement range of a (frame, trace) pair, drawn from the capability's
/// distance band with a generator seeded by the campaign seed and the pair.
pub fn placement_range(spec: &CampaignSpec, frame_index: usize, trace_index: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(spec.seed, frame_index, trace_index));
    let (lo, hi) = spec.capability.target_distance;
    rng.gen_range(lo..=hi)
}

/// Places, snaps, prunes and injects one trace, then detects and judges.
/// `detect` stands in for the victim model (pass [`proxy_detect`] or a
/// lookup into an external dump).
pub fn run_pair(
    sensor: &SensorModel,
    frame: &PointCloud,
    frame_index: usize,
    trace: &AttackTrace,
    trace_index: usize,
    spec: &CampaignSpec,
    detect: &dyn Fn(&PointCloud) -> Vec<Detection>,
    clock: &dyn Clock,
) -> PairResult {
    let range = placement_range(spec, frame_index, trace_index);
    let mut row = PairResult {
        frame_id: frame.frame_id.clone(),
        frame_index,
        trace_index,
        placement_range: range,
        injected_points: 0,
        group: None,
        target_box: None,
        detections: 0,
        best_score: None,
        success: false,
        defended_success: None,
        target_label: None,
        error: None,
    };
    if let Err(e) = judge_pair(sensor, frame, trace, spec, detect, clock, range, &mut row) {
        row.error = Some(e.to_string());
    }
    row
}

#[allow(clippy::too_many_arguments)]
fn judge_pair(
    sensor: &SensorModel,
    frame: &PointCloud,
    trace: &AttackTrace,
    spec: &CampaignSpec,
    detect: &dyn Fn(&PointCloud) -> Vec<Detection>,
    clock: &dyn Clock,
    range: f64,
    row: &mut PairResult,
) -> Result<()> {
    let report = spoof_front_near(
        frame,
        sensor,
        trace,
        &spec.capability,
        &spec.template,
        spec.azimuth_deg,
        range,
    )?;
    row.injected_points = report.injected_point_count;
    row.group = size_group(report.injected_point_count, spec.group_width);
    row.target_box = Some(report.target_box);

    let detections = detect(&report.cloud);
    row.detections = detections.len();
    row.best_score = best_success_score(&detections, &report.target_box, &spec.rule);
    row.success = row.best_score.is_some_and(|s| s >= spec.rule.score_threshold);

    if let Some(cfg) = &spec.defense {
        let boxes: Vec<Box3D> = detections.iter().map(|d| d.bbox).collect();
        let verdicts = carlo_batch(sensor, &report.cloud, &boxes, cfg, clock);
        let mut best: Option<(f64, Option<Label>)> = None;
        let mut kept = Vec::new();
        for (d, v) in detections.iter().zip(&verdicts) {
            let label = v.as_ref().ok().map(|v| v.label);
            if spec.rule.matches(&d.bbox, &report.target_box) && best.is_none_or(|(s, _)| d.score > s) {
                best = Some((d.score, label));
            }
            if label != Some(Label::Spoofed) {
                kept.push(*d);
            }
        }
        row.target_label = best.and_then(|(_, l)| l);
        let score = best_success_score(&kept, &report.target_box, &spec.rule);
        row.defended_success = Some(score.is_some_and(|s| s >= spec.rule.score_threshold));
    }
    Ok(())
}

/// Recomputes every aggregate from the per-pair rows.
pub fn aggregate(rows: Vec<PairResult>, group_width: usize) -> ExperimentResult {
    let ok: Vec<&PairResult> = rows.iter().filter(|r| r.error.is_none()).collect();
    let frac = |n: usize| (!ok.is_empty()).then(|| n as f64 / ok.len() as f64);
    let asr = frac(ok.iter().filter(|r| r.success).count());
    let defended = ok.iter().all(|r| r.defended_success.is_some());
    let defended_asr = if defended {
        frac(ok.iter().filter(|r| r.defended_success == Some(true)).count())
    } else {
        None
    };
    let mut groups: BTreeMap<usize, GroupAsr> = BTreeMap::new();
    for r in &ok {
        let Some(g) = r.group else { continue };
        let e = groups.entry(g).or_insert(GroupAsr {
            group: g,
            lo: g * group_width,
            hi: (g + 1) * group_width,
            samples: 0,
            successes: 0,
            defended_successes: defended.then_some(0),
        });
        e.samples += 1;
        e.successes += r.success as usize;
        if let Some(d) = e.defended_successes.as_mut() {
            *d += (r.defended_success == Some(true)) as usize;
        }
    }
    ExperimentResult {
        rows,
        asr,
        defended_asr,
        groups: groups.into_values().collect(),
    }
}

/// Every frame against every trace with the proxy detector, sequentially.
pub fn run_campaign(
    sensor: &SensorModel,
    frames: &[PointCloud],
    traces: &[AttackTrace],
    spec: &CampaignSpec,
) -> ExperimentResult {
    let detector = spec.detector;
    let detect = move |c: &PointCloud| proxy_detect(c, &detector);
    let mut rows = Vec::with_capacity(frames.len() * traces.len());
    for (fi, frame) in frames.iter().enumerate() {
        for (ti, trace) in traces.iter().enumerate() {
            rows.push(run_pair(sensor, frame, fi, trace, ti, spec, &detect, &NoClock));
        }
    }
    aggregate(rows, spec.group_width)
}
