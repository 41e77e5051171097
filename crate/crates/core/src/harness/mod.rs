//! Experiment engine: an occlusion-blind proxy detector, success judging,
//! ASR / A²SR / AP metrics and the injection campaign loop.

mod campaign;
mod detector;
mod metrics;

pub use campaign::{
    aggregate, placement_range, run_campaign, run_pair, CampaignSpec, ExperimentResult, GroupAsr, PairResult,
};
pub use detector::{proxy_detect, Detection, ProxyDetectorConfig};
pub use metrics::{
    a2sr, asr, asr_at, average_precision, best_success_score, judge_success, precision_recall,
    recall_curve, relative_score_error, RecallCurve, SuccessMode, SuccessRule, RECALL_LEVELS,
};
