//! CARLO: laser penetration detection (LPD) as a cheap first pass, free
//! space detection (FSD) for the boxes LPD cannot settle.
//!
//! * `g` is the fraction of frustum returns that land behind the box. A
//!   real vehicle stops the lasers that hit it, so `g` is small; a sparse
//!   spoofed trace lets most lasers through.
//! * `f` is the fraction of the box's voxels that some laser crossed on its
//!   way to a return (or to max range). Solid vehicles shadow their own
//!   interior; spoofed boxes are mostly air.

use alloc::vec::Vec;

use crate::cloud::{PointCloud, RayIndex, SensorModel};
use crate::geometry::{box_ray_index, extract_frustum_indexed, Box3D, CellState, Frustum, VoxelGrid};
use crate::stats::EmpiricalDistribution;
use crate::{Error, Result};

/// Tolerance (meters) when deciding whether a return lies inside the box's
/// interval along its ray.
pub const RANGE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarloConfig {
    pub cell_size: f64,
    pub lpd_low: f64,
    pub lpd_high: f64,
    pub fsd_threshold: f64,
    pub epsilon: f64,
}

impl Default for CarloConfig {
    /// Uncalibrated: LPD never decides, FSD splits at 0.5.
    fn default() -> Self {
        Self {
            cell_size: 0.25,
            lpd_low: 0.0,
            lpd_high: 1.0,
            fsd_threshold: 0.5,
            epsilon: 0.05,
        }
    }
}

impl CarloConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::InvalidConfig("cell_size must be positive".into()));
        }
        if !(unit(self.lpd_low) && unit(self.lpd_high) && self.lpd_low <= self.lpd_high) {
            return Err(Error::InvalidConfig(
                "need 0 <= lpd_low <= lpd_high <= 1".into(),
            ));
        }
        if !(self.fsd_threshold > 0.0 && self.fsd_threshold < 1.0) {
            return Err(Error::InvalidConfig("fsd_threshold must lie in (0, 1)".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Valid,
    Spoofed,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Valid => "Valid",
            Label::Spoofed => "Spoofed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Lpd,
    Fsd,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Lpd => "LPD",
            Stage::Fsd => "FSD",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub label: Label,
    pub stage: Stage,
    pub f: Option<f64>,
    /// Absent when the frustum held no returns at all.
    pub g: Option<f64>,
    pub ms: f64,
}

/// Millisecond time source. The core crate has no clock of its own.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Always reads zero; keeps verdicts bit-reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

/// Counts of frustum returns before, inside and behind the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PenetrationCounts {
    pub front: usize,
    pub inside: usize,
    pub behind: usize,
}

impl PenetrationCounts {
    pub fn total(&self) -> usize {
        self.front + self.inside + self.behind
    }
}

pub fn penetration_counts(frustum: &Frustum) -> PenetrationCounts {
    let mut c = PenetrationCounts::default();
    for e in &frustum.entries {
        let Some(r) = e.hit_range else { continue };
        if r < e.t_enter - RANGE_EPS {
            c.front += 1;
        } else if r > e.t_exit + RANGE_EPS {
            c.behind += 1;
        } else {
            c.inside += 1;
        }
    }
    c
}

/// `g = |behind| / |all returns|`. Rays without a return are ignored.
pub fn lpd_ratio(frustum: &Frustum) -> Result<f64> {
    let c = penetration_counts(frustum);
    if c.total() == 0 {
        return Err(Error::EmptyEvidence);
    }
    Ok(c.behind as f64 / c.total() as f64)
}

/// `f`: the share of the box's cells (by center) crossed by at least one
/// frustum ray between the sensor and its return, or max range when the ray
/// came back empty.
pub fn fsd_ratio(sensor: &SensorModel, frustum: &Frustum, config: &CarloConfig) -> Result<f64> {
    let b = &frustum.box_ref;
    let mut grid = VoxelGrid::covering(b, config.cell_size)?;
    let in_box: Vec<[usize; 3]> = grid.cells().filter(|&c| b.contains(grid.cell_center(c))).collect();
    if in_box.is_empty() {
        return Err(Error::DegenerateBox {
            cell_size: config.cell_size,
        });
    }
    let origin = sensor.origin();
    for e in &frustum.entries {
        let end = match e.hit {
            Some(p) => p.xyz(),
            None => origin + sensor.ray_direction_unchecked(e.ray) * sensor.max_range(),
        };
        grid.mark_free(origin, end);
    }
    let free = in_box.iter().filter(|&&c| grid.state(c) == CellState::Free).count();
    Ok(free as f64 / in_box.len() as f64)
}

/// The hierarchical decision given precomputed ratios. `f` is evaluated
/// lazily, only when LPD leaves the box undecided.
pub fn decide(
    g: Option<f64>,
    config: &CarloConfig,
    f: impl FnOnce() -> Result<f64>,
) -> Result<(Label, Stage, Option<f64>)> {
    if let Some(g) = g {
        if g < config.lpd_low {
            return Ok((Label::Valid, Stage::Lpd, None));
        }
        if g > config.lpd_high {
            return Ok((Label::Spoofed, Stage::Lpd, None));
        }
    }
    let f = f()?;
    let label = if f >= config.fsd_threshold {
        Label::Spoofed
    } else {
        Label::Valid
    };
    Ok((label, Stage::Fsd, Some(f)))
}

fn verdict_on(
    sensor: &SensorModel,
    cloud: &PointCloud,
    index: &RayIndex,
    b: &Box3D,
    config: &CarloConfig,
    clock: &dyn Clock,
) -> Result<Verdict> {
    let t0 = clock.now_ms();
    let frustum = extract_frustum_indexed(sensor, cloud, index, b)?;
    let g = match lpd_ratio(&frustum) {
        Ok(g) => Some(g),
        Err(Error::EmptyEvidence) => None,
        Err(e) => return Err(e),
    };
    let (label, stage, f) = decide(g, config, || fsd_ratio(sensor, &frustum, config))?;
    Ok(Verdict {
        label,
        stage,
        f,
        g,
        ms: clock.now_ms() - t0,
    })
}

/// Verdict for one box. Deterministic; `ms` is 0 (see [`carlo_verdict_timed`]).
pub fn carlo_verdict(
    sensor: &SensorModel,
    cloud: &PointCloud,
    b: &Box3D,
    config: &CarloConfig,
) -> Result<Verdict> {
    carlo_verdict_timed(sensor, cloud, b, config, &NoClock)
}

pub fn carlo_verdict_timed(
    sensor: &SensorModel,
    cloud: &PointCloud,
    b: &Box3D,
    config: &CarloConfig,
    clock: &dyn Clock,
) -> Result<Verdict> {
    let t0 = clock.now_ms();
    let index = box_ray_index(sensor, cloud, b);
    let mut v = verdict_on(sensor, cloud, &index, b, config, clock)?;
    v.ms = clock.now_ms() - t0;
    Ok(v)
}

/// Independent verdicts for every detection, in input order. The ray index
/// over `cloud` is built once; per-box failures stay inline.
pub fn carlo_batch(
    sensor: &SensorModel,
    cloud: &PointCloud,
    detections: &[Box3D],
    config: &CarloConfig,
    clock: &dyn Clock,
) -> Vec<Result<Verdict>> {
    if detections.is_empty() {
        return Vec::new();
    }
    let index = RayIndex::build(sensor, cloud);
    detections
        .iter()
        .map(|b| verdict_on(sensor, cloud, &index, b, config, clock))
        .collect()
}

/// One cloud with the boxes to be scored on it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredScene {
    pub cloud: PointCloud,
    pub boxes: Vec<Box3D>,
}

/// `f` and `g` samples for valid (unprimed) and spoofed (primed) boxes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatioDistributions {
    pub f_valid: EmpiricalDistribution,
    pub f_spoofed: EmpiricalDistribution,
    pub g_valid: EmpiricalDistribution,
    pub g_spoofed: EmpiricalDistribution,
}

/// `(f, g)` for every box of every scene. Boxes whose frustum is empty are
/// skipped; `g` is `None` when no ray returned.
pub fn measure_ratios(
    sensor: &SensorModel,
    scenes: &[ScoredScene],
    config: &CarloConfig,
) -> Vec<(Option<f64>, Option<f64>)> {
    let mut out = Vec::new();
    for scene in scenes {
        let index = RayIndex::build(sensor, &scene.cloud);
        for b in &scene.boxes {
            let Ok(frustum) = extract_frustum_indexed(sensor, &scene.cloud, &index, b) else {
                continue;
            };
            let f = fsd_ratio(sensor, &frustum, config).ok();
            let g = lpd_ratio(&frustum).ok();
            out.push((f, g));
        }
    }
    out
}

impl RatioDistributions {
    pub fn from_samples(valid: &[(Option<f64>, Option<f64>)], spoofed: &[(Option<f64>, Option<f64>)]) -> Self {
        let col = |s: &[(Option<f64>, Option<f64>)], first: bool| {
            EmpiricalDistribution::new(
                s.iter()
                    .filter_map(|&(f, g)| if first { f } else { g })
                    .collect(),
            )
        };
        Self {
            f_valid: col(valid, true),
            f_spoofed: col(spoofed, true),
            g_valid: col(valid, false),
            g_spoofed: col(spoofed, false),
        }
    }
}

pub const UPPER_PERCENTILE: f64 = 99.5;
pub const LOWER_PERCENTILE: f64 = 0.5;

/// Threshold fit plus the diagnostics worth persisting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub config: CarloConfig,
    /// Lower percentile of spoofed `f`.
    pub a: f64,
    /// Upper percentile of valid `f`.
    pub b: f64,
    /// Lower percentile of spoofed `g`.
    pub a_prime: f64,
    /// Upper percentile of valid `g`.
    pub b_prime: f64,
    pub fsd_separated: bool,
    /// Whether the valid and spoofed `g` ranges overlap.
    pub lpd_overlap: bool,
}

/// Fits thresholds from measured distributions, keeping `cell_size` and
/// `epsilon` from `base`.
pub fn fit_thresholds(d: &RatioDistributions, base: &CarloConfig) -> Result<Calibration> {
    let need = |x: Option<f64>, what: &'static str| x.ok_or(Error::EmptyInput(what));
    let b = need(d.f_valid.percentile(UPPER_PERCENTILE), "valid f samples")?;
    let a = need(d.f_spoofed.percentile(LOWER_PERCENTILE), "spoofed f samples")?;
    let b_prime = need(d.g_valid.percentile(UPPER_PERCENTILE), "valid g samples")?;
    let a_prime = need(d.g_spoofed.percentile(LOWER_PERCENTILE), "spoofed g samples")?;
    if a <= b {
        return Err(Error::NonSeparable { a, b });
    }
    let eps = base.epsilon;
    let mut lpd_low = (a_prime - eps).clamp(0.0, 1.0);
    let mut lpd_high = (b_prime + eps).clamp(0.0, 1.0);
    if lpd_low > lpd_high {
        let mid = (lpd_low + lpd_high) / 2.0;
        lpd_low = mid;
        lpd_high = mid;
    }
    let lpd_overlap = match (d.g_spoofed.min(), d.g_valid.max()) {
        (Some(lo), Some(hi)) => lo <= hi,
        _ => false,
    };
    let config = CarloConfig {
        lpd_low,
        lpd_high,
        fsd_threshold: (a + b) / 2.0,
        ..*base
    };
    config.validate()?;
    Ok(Calibration {
        config,
        a,
        b,
        a_prime,
        b_prime,
        fsd_separated: true,
        lpd_overlap,
    })
}

/// Measures both scene sets and fits thresholds.
pub fn calibrate(
    sensor: &SensorModel,
    valid: &[ScoredScene],
    spoofed: &[ScoredScene],
    base: &CarloConfig,
) -> Result<(RatioDistributions, Calibration)> {
    if valid.is_empty() || spoofed.is_empty() {
        return Err(Error::EmptyInput("calibration scene set"));
    }
    let d = RatioDistributions::from_samples(
        &measure_ratios(sensor, valid, base),
        &measure_ratios(sensor, spoofed, base),
    );
    let cal = fit_thresholds(&d, base)?;
    Ok((d, cal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{Point, RayId};
    use crate::geometry::{extract_frustum, FrustumEntry};
    use crate::math::Vec3;
    use alloc::vec;

    fn entry(t_enter: f64, t_exit: f64, hit: Option<f64>) -> FrustumEntry {
        FrustumEntry {
            ray: RayId::new(0, 0),
            t_enter,
            t_exit,
            hit: hit.map(|r| Point::new(r, 0.0, 0.0, 0.5)),
            hit_range: hit,
        }
    }

    fn frustum(entries: Vec<FrustumEntry>) -> Frustum {
        Frustum {
            box_ref: Box3D::new(Vec3::new(6.0, 0.0, 0.0), 2.0, 2.0, 2.0, 0.0).unwrap(),
            entries,
        }
    }

    #[test]
    fn lpd_counts() {
        let mut e = vec![entry(5.0, 7.0, Some(4.0)); 2];
        e.extend(vec![entry(5.0, 7.0, Some(6.0)); 3]);
        e.extend(vec![entry(5.0, 7.0, Some(9.0)); 5]);
        e.push(entry(5.0, 7.0, None));
        assert_eq!(lpd_ratio(&frustum(e)).unwrap(), 0.5);
        assert_eq!(lpd_ratio(&frustum(vec![entry(5.0, 7.0, Some(5.0))])).unwrap(), 0.0);
        assert_eq!(lpd_ratio(&frustum(vec![entry(5.0, 7.0, Some(7.5))])).unwrap(), 1.0);
        assert_eq!(lpd_ratio(&frustum(vec![entry(5.0, 7.0, None)])), Err(Error::EmptyEvidence));
    }

    #[test]
    fn toy_calibration() {
        let s = |v: &[f64]| EmpiricalDistribution::new(v.to_vec());
        let d = RatioDistributions {
            f_valid: s(&[0.1, 0.2]),
            f_spoofed: s(&[0.8, 0.9]),
            g_valid: s(&[0.0, 0.3]),
            g_spoofed: s(&[0.2, 0.9]),
        };
        let c = fit_thresholds(&d, &CarloConfig::default()).unwrap();
        assert_eq!((c.a, c.b), (0.8, 0.2));
        assert!((c.config.fsd_threshold - 0.5).abs() < 1e-15);
        assert!((c.config.lpd_low - 0.15).abs() < 1e-12);
        assert!((c.config.lpd_high - 0.35).abs() < 1e-12);
        assert!(c.lpd_overlap);

        let same = RatioDistributions {
            f_spoofed: d.f_valid.clone(),
            ..d
        };
        assert!(matches!(
            fit_thresholds(&same, &CarloConfig::default()),
            Err(Error::NonSeparable { .. })
        ));
    }

    #[test]
    fn decision_branches() {
        let cfg = CarloConfig {
            lpd_low: 0.1,
            lpd_high: 0.6,
            ..CarloConfig::default()
        };
        let never = || -> Result<f64> { panic!("FSD must not run") };
        assert_eq!(decide(Some(0.01), &cfg, never).unwrap(), (Label::Valid, Stage::Lpd, None));
        assert_eq!(decide(Some(0.9), &cfg, never).unwrap(), (Label::Spoofed, Stage::Lpd, None));
        assert_eq!(
            decide(Some(0.3), &cfg, || Ok(0.95)).unwrap(),
            (Label::Spoofed, Stage::Fsd, Some(0.95))
        );
        assert_eq!(
            decide(None, &cfg, || Ok(0.2)).unwrap(),
            (Label::Valid, Stage::Fsd, Some(0.2))
        );
    }

    fn dense_sensor() -> SensorModel {
        SensorModel::uniform(40, -10.0, 10.0, 0.5, -30.0, 30.0, 100.0).unwrap()
    }

    #[test]
    fn fsd_extremes() {
        let s = dense_sensor();
        let b = Box3D::new(Vec3::new(6.0, 0.0, 0.0), 1.0, 1.0, 1.0, 0.0).unwrap();
        // every ray stops on the sensor-side face x = 5.5
        let face: PointCloud = s
            .rays()
            .filter_map(|r| {
                let d = s.ray_direction(r).unwrap();
                let t = 5.5 / d.x;
                let p = d * t;
                (p.y.abs() < 0.5 && p.z.abs() < 0.5).then(|| Point::from_vec(p, 0.5))
            })
            .collect();
        let fr = extract_frustum(&s, &face, &b).unwrap();
        assert_eq!(fsd_ratio(&s, &fr, &CarloConfig::default()).unwrap(), 0.0);

        // no returns at all: every ray crosses the box to max range
        let fr = extract_frustum(&s, &PointCloud::default(), &b).unwrap();
        let f = fsd_ratio(&s, &fr, &CarloConfig::default()).unwrap();
        assert!(f > 0.9, "f = {f}");
        let v = carlo_verdict(&s, &PointCloud::default(), &b, &CarloConfig::default()).unwrap();
        assert_eq!((v.label, v.stage, v.g), (Label::Spoofed, Stage::Fsd, None));
    }

    #[test]
    fn batch_matches_single() {
        let s = dense_sensor();
        let cloud: PointCloud = (0..50)
            .map(|i| Point::new(8.0, -1.0 + 0.04 * i as f64, 0.0, 0.5))
            .collect();
        let boxes = vec![
            Box3D::new(Vec3::new(8.5, 0.0, 0.0), 1.0, 2.0, 1.0, 0.0).unwrap(),
            Box3D::new(Vec3::new(6.0, 0.0, 0.0), 1.0, 1.0, 1.0, 0.0).unwrap(),
            Box3D::new(Vec3::new(-6.0, 0.0, 0.0), 1.0, 1.0, 1.0, 0.0).unwrap(),
        ];
        let cfg = CarloConfig::default();
        let batch = carlo_batch(&s, &cloud, &boxes, &cfg, &NoClock);
        for (b, v) in boxes.iter().zip(&batch) {
            assert_eq!(v, &carlo_verdict(&s, &cloud, b, &cfg));
        }
        assert_eq!(batch[2], Err(Error::EmptyFrustum));
        assert!(carlo_batch(&s, &cloud, &[], &cfg, &NoClock).is_empty());
    }
}
