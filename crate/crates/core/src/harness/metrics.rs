use alloc::vec::Vec;

use super::Detection;
use crate::geometry::{iou3d, Box3D};
use crate::{Error, Result};

/// The eleven recall levels 0.0, 0.1, …, 1.0.
pub const RECALL_LEVELS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SuccessMode {
    /// BEV center distance (meters) at most this.
    CenterDistance(f64),
    /// 3D IoU at least this.
    Iou(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessRule {
    pub mode: SuccessMode,
    pub score_threshold: f64,
}

impl Default for SuccessRule {
    fn default() -> Self {
        Self {
            mode: SuccessMode::CenterDistance(1.0),
            score_threshold: 0.5,
        }
    }
}

impl SuccessRule {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.mode {
            SuccessMode::CenterDistance(d) => d > 0.0 && d.is_finite(),
            SuccessMode::Iou(t) => t > 0.0 && t <= 1.0,
        };
        if !ok || !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::InvalidConfig("success rule out of range".into()));
        }
        Ok(())
    }

    /// Location test only; the score threshold is not applied.
    pub fn matches(&self, detection: &Box3D, target: &Box3D) -> bool {
        match self.mode {
            SuccessMode::CenterDistance(d) => {
                let dx = detection.center.x - target.center.x;
                let dy = detection.center.y - target.center.y;
                dx * dx + dy * dy <= d * d
            }
            SuccessMode::Iou(t) => iou3d(detection, target) >= t,
        }
    }
}

/// Highest score among detections at the target location, whatever the
/// score threshold.
pub fn best_success_score(detections: &[Detection], target: &Box3D, rule: &SuccessRule) -> Option<f64> {
    detections
        .iter()
        .filter(|d| rule.matches(&d.bbox, target))
        .map(|d| d.score)
        .max_by(f64::total_cmp)
}

pub fn judge_success(detections: &[Detection], target: &Box3D, rule: &SuccessRule) -> bool {
    best_success_score(detections, target, rule).is_some_and(|s| s >= rule.score_threshold)
}

pub fn asr(flags: &[bool]) -> Result<f64> {
    if flags.is_empty() {
        return Err(Error::EmptyInput("attack results"));
    }
    Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
}

/// ASR when a sample succeeds iff its target-location score is `>= t`.
pub fn asr_at(scores: &[Option<f64>], t: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("attack results"));
    }
    Ok(scores.iter().filter(|s| s.is_some_and(|s| s >= t)).count() as f64 / scores.len() as f64)
}

/// Greedy score-ordered matching of detections to ground truth over all
/// frames. Returns, for every detection in global rank order, its score and
/// whether it was a true positive, plus the ground-truth count.
fn ranked_matches(detections: &[Vec<Detection>], truth: &[Vec<Box3D>], iou_thresh: f64) -> (Vec<(f64, bool)>, usize) {
    let mut order: Vec<(usize, usize)> = detections
        .iter()
        .enumerate()
        .flat_map(|(f, ds)| (0..ds.len()).map(move |i| (f, i)))
        .collect();
    order.sort_by(|&(fa, ia), &(fb, ib)| {
        detections[fb][ib]
            .score
            .total_cmp(&detections[fa][ia].score)
            .then(fa.cmp(&fb))
            .then(ia.cmp(&ib))
    });
    let mut taken: Vec<Vec<bool>> = truth.iter().map(|g| alloc::vec![false; g.len()]).collect();
    let n_gt = truth.iter().map(Vec::len).sum();
    let ranked = order
        .into_iter()
        .map(|(f, i)| {
            let d = &detections[f][i];
            let gts = truth.get(f).map(Vec::as_slice).unwrap_or(&[]);
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                if taken[f][j] {
                    continue;
                }
                let iou = iou3d(&d.bbox, g);
                if iou >= iou_thresh && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            if let Some((j, _)) = best {
                taken[f][j] = true;
            }
            (d.score, best.is_some())
        })
        .collect();
    (ranked, n_gt)
}

/// Precision/recall after each detection in rank order.
pub fn precision_recall(detections: &[Vec<Detection>], truth: &[Vec<Box3D>], iou_thresh: f64) -> Vec<(f64, f64)> {
    let (ranked, n_gt) = ranked_matches(detections, truth, iou_thresh);
    let mut tp = 0usize;
    ranked
        .iter()
        .enumerate()
        .map(|(k, &(_, hit))| {
            tp += hit as usize;
            let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
            (tp as f64 / (k + 1) as f64, recall)
        })
        .collect()
}

/// 11-point interpolated average precision.
pub fn average_precision(detections: &[Vec<Detection>], truth: &[Vec<Box3D>], iou_thresh: f64) -> f64 {
    let pr = precision_recall(detections, truth, iou_thresh);
    RECALL_LEVELS
        .iter()
        .map(|&r| {
            pr.iter()
                .filter(|&&(_, rec)| rec >= r - 1e-12)
                .map(|&(p, _)| p)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / RECALL_LEVELS.len() as f64
}

/// Recall reached at each candidate score threshold, highest threshold
/// first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecallCurve {
    pub points: Vec<(f64, f64)>,
    pub ground_truth: usize,
}

impl RecallCurve {
    /// Highest threshold whose recall reaches `r`.
    pub fn threshold_for(&self, r: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|&&(_, rec)| rec >= r - 1e-12)
            .map(|&(t, _)| t)
    }
}

pub fn recall_curve(detections: &[Vec<Detection>], truth: &[Vec<Box3D>], iou_thresh: f64) -> RecallCurve {
    let (ranked, n_gt) = ranked_matches(detections, truth, iou_thresh);
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut tp = 0usize;
    for (score, hit) in ranked {
        tp += hit as usize;
        let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
        // all detections at one score enter together
        match points.last_mut() {
            Some(last) if last.0 == score => last.1 = recall,
            _ => points.push((score, recall)),
        }
    }
    RecallCurve {
        points,
        ground_truth: n_gt,
    }
}

/// Mean over the eleven recall levels of the ASR at the threshold that
/// reaches that recall. Levels the detector cannot reach contribute 0.
pub fn a2sr(scores: &[Option<f64>], curve: &RecallCurve) -> Result<f64> {
    if curve.ground_truth == 0 {
        return Err(Error::EmptyInput("ground truth"));
    }
    let mut total = 0.0;
    for &r in &RECALL_LEVELS {
        if let Some(t) = curve.threshold_for(r) {
            total += asr_at(scores, t)?;
        }
    }
    Ok(total / RECALL_LEVELS.len() as f64)
}

/// `|s' − s| / s`.
pub fn relative_score_error(original: f64, moved: f64) -> Option<f64> {
    (original > 0.0).then(|| (moved - original).abs() / original)
}
