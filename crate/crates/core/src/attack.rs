//! Spoof trace construction, placement, pruning and injection.
//!
//! A trace is a small point set that the attacker replays into a victim
//! cloud. The pipeline mirrors what a physical spoofer can do: move a
//! recorded or rendered vehicle to a front-near spot, snap each point to a
//! real laser ray, cut it down to the spoofer's capability, then let each
//! spoofed return override the pristine return on its ray.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{Point, PointCloud, RayId, SensorModel};
use crate::geometry::Box3D;
use crate::math::{self, to_degrees, to_radians, wrap_deg, wrap_rad, Vec3};
use crate::{Error, Result};

/// Physical envelope of the spoofer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackCapability {
    pub max_points: usize,
    pub azimuth_window_deg: f64,
    /// Closed range band (meters) for front-near placement.
    pub target_distance: (f64, f64),
}

impl Default for AttackCapability {
    fn default() -> Self {
        Self {
            max_points: 200,
            azimuth_window_deg: 10.0,
            target_distance: (5.0, 8.0),
        }
    }
}

impl AttackCapability {
    pub fn validate(&self) -> Result<()> {
        if self.max_points < 1 {
            return Err(Error::InvalidConfig("max_points must be >= 1".into()));
        }
        if !(self.azimuth_window_deg > 0.0) {
            return Err(Error::InvalidConfig("azimuth window must be positive".into()));
        }
        let (lo, hi) = self.target_distance;
        if !(lo <= hi) || !(lo > 0.0) {
            return Err(Error::InvalidConfig("target distance band is empty".into()));
        }
        Ok(())
    }

    pub fn admits(&self, trace: &AttackTrace) -> bool {
        trace.len() <= self.max_points
            && trace.meta.azimuth_extent_deg <= self.azimuth_window_deg + 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceSource {
    Occluded,
    Distant,
    Rendered,
    SensorBaseline,
}

impl TraceSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceSource::Occluded => "occluded",
            TraceSource::Distant => "distant",
            TraceSource::Rendered => "rendered",
            TraceSource::SensorBaseline => "sensor-baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "occluded" => TraceSource::Occluded,
            "distant" => TraceSource::Distant,
            "rendered" => TraceSource::Rendered,
            "sensor-baseline" => TraceSource::SensorBaseline,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceMeta {
    pub source: TraceSource,
    pub point_count: usize,
    pub azimuth_extent_deg: f64,
    /// Horizontal range of the vehicle the trace was taken from.
    pub source_range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackTrace {
    pub points: PointCloud,
    pub meta: TraceMeta,
}

impl AttackTrace {
    pub fn new(points: PointCloud, source: TraceSource, source_range: f64) -> Self {
        let meta = TraceMeta {
            source,
            point_count: points.len(),
            azimuth_extent_deg: azimuth_extent_deg(&points.points),
            source_range,
        };
        Self { points, meta }
    }

    fn with_points(&self, points: PointCloud) -> Self {
        Self::new(points, self.meta.source, self.meta.source_range)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Azimuths (degrees) of `points` measured from their centroid's azimuth, so
/// traces that straddle the ±180° cut still come out contiguous.
pub fn relative_azimuths(points: &[Point]) -> Vec<f64> {
    let Some(c) = centroid(points) else {
        return Vec::new();
    };
    let reference = if c.norm_xy() > 0.0 {
        to_degrees(math::atan2(c.y, c.x))
    } else {
        0.0
    };
    points
        .iter()
        .map(|p| wrap_deg(to_degrees(math::atan2(p.y, p.x)) - reference))
        .collect()
}

pub fn azimuth_extent_deg(points: &[Point]) -> f64 {
    let rel = relative_azimuths(points);
    if rel.is_empty() {
        return 0.0;
    }
    let lo = rel.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn centroid(points: &[Point]) -> Option<Vec3> {
    if points.is_empty() {
        return None;
    }
    let s = points.iter().fold(Vec3::ZERO, |a, p| a + p.xyz());
    Some(s / points.len() as f64)
}

/// Typical car dimensions and the ground height used to complete partial
/// observations into full vehicle boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleTemplate {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub ground_z: f64,
}

impl Default for VehicleTemplate {
    fn default() -> Self {
        Self {
            length: 3.9,
            width: 1.6,
            height: 1.56,
            ground_z: -1.73,
        }
    }
}

/// Extents longer than the template width by this much identify the
/// vehicle's length axis.
const LENGTH_AXIS_MARGIN: f64 = 0.3;

/// Completes the visible part of a vehicle into a full box.
///
/// The footprint is fitted in the PCA frame of the points. If the longer
/// extent clearly exceeds a car's width it is taken as the length axis;
/// otherwise only a face is visible and the heading is assumed to run along
/// the line of sight. Each axis is then grown to at least the template size,
/// away from the sensor, and z spans ground to at least template height.
pub fn fit_vehicle_box(points: &[Point], template: &VehicleTemplate, origin: Vec3) -> Option<Box3D> {
    let n = points.len();
    if n == 0 {
        return None;
    }
    let (mut mx, mut my) = (0.0, 0.0);
    for p in points {
        mx += p.x;
        my += p.y;
    }
    mx /= n as f64;
    my /= n as f64;
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - mx, p.y - my);
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    }
    let mut yaw = 0.5 * math::atan2(2.0 * cxy, cxx - cyy);
    let (mut along, mut across) = extents(points, yaw);
    if across.1 - across.0 > along.1 - along.0 {
        yaw += core::f64::consts::FRAC_PI_2;
        (along, across) = extents(points, yaw);
    }
    if along.1 - along.0 <= template.width + LENGTH_AXIS_MARGIN {
        let (dx, dy) = (mx - origin.x, my - origin.y);
        yaw = if dx == 0.0 && dy == 0.0 { 0.0 } else { math::atan2(dy, dx) };
        (along, across) = extents(points, yaw);
    }

    let (ux, uy) = (math::cos(yaw), math::sin(yaw));
    let (vx, vy) = (-uy, ux);
    let (ox, oy) = (origin.x, origin.y);
    // sensor coordinate along each axis, to know which side is "away"
    let sensor_u = ox * ux + oy * uy;
    let sensor_v = ox * vx + oy * vy;
    let along = grow_away(along, template.length, sensor_u);
    let across = grow_away(across, template.width, sensor_v);

    let z_min = points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let z_max = points.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
    let bottom = z_min.min(template.ground_z);
    let top = z_max.max(template.ground_z + template.height);

    let cu = (along.0 + along.1) / 2.0;
    let cv = (across.0 + across.1) / 2.0;
    let center = Vec3::new(cu * ux + cv * vx, cu * uy + cv * vy, (bottom + top) / 2.0);
    Box3D::new(
        center,
        along.1 - along.0,
        across.1 - across.0,
        top - bottom,
        yaw,
    )
    .ok()
}

fn extents(points: &[Point], yaw: f64) -> ((f64, f64), (f64, f64)) {
    let (ux, uy) = (math::cos(yaw), math::sin(yaw));
    let mut a = (f64::INFINITY, f64::NEG_INFINITY);
    let mut b = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        let u = p.x * ux + p.y * uy;
        let v = -p.x * uy + p.y * ux;
        a = (a.0.min(u), a.1.max(u));
        b = (b.0.min(v), b.1.max(v));
    }
    (a, b)
}

fn grow_away((lo, hi): (f64, f64), min_len: f64, sensor_coord: f64) -> (f64, f64) {
    if hi - lo >= min_len {
        return (lo, hi);
    }
    let mid = (lo + hi) / 2.0;
    if mid >= sensor_coord {
        (lo, lo + min_len)
    } else {
        (hi - min_len, hi)
    }
}

/// All cloud points inside `b` grown by `margin`.
pub fn extract_vehicle_points(
    cloud: &PointCloud,
    b: &Box3D,
    margin: f64,
    source: TraceSource,
) -> Result<AttackTrace> {
    let grown = b.dilated(margin.max(0.0));
    let points: PointCloud = cloud.iter().filter(|p| grown.contains(p.xyz())).copied().collect();
    if points.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(AttackTrace::new(points, source, b.center.norm_xy()))
}

/// A labelled object in the sensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleLabel {
    pub object_type: String,
    pub truncated: f64,
    pub occluded: u8,
    pub bbox: Box3D,
}

impl VehicleLabel {
    pub fn is_dont_care(&self) -> bool {
        self.object_type == "DontCare"
    }

    pub fn is_vehicle(&self) -> bool {
        matches!(self.object_type.as_str(), "Car" | "Van")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledFrame {
    pub frame_id: String,
    pub labels: Vec<VehicleLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    Occluded,
    Distant,
}

/// Distance beyond which a vehicle counts as a distant candidate.
pub const DISTANT_RANGE_M: f64 = 30.0;

/// `(frame index, label index)` of every vehicle of the requested kind.
pub fn select_candidates(frames: &[LabeledFrame], kind: CandidateKind) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (fi, frame) in frames.iter().enumerate() {
        for (li, label) in frame.labels.iter().enumerate() {
            if label.is_dont_care() || !label.is_vehicle() {
                continue;
            }
            let keep = match kind {
                CandidateKind::Occluded => matches!(label.occluded, 1 | 2),
                CandidateKind::Distant => label.bbox.center.norm_xy() > DISTANT_RANGE_M,
            };
            if keep {
                out.push((fi, li));
            }
        }
    }
    out
}

/// Rotates every point by `theta` about +z, then pushes it by `tau` meters
/// along the rotated centroid azimuth. A rigid motion of the whole trace.
pub fn translate_trace(trace: &AttackTrace, theta: f64, tau: f64) -> Result<AttackTrace> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let c = trace.points.centroid().unwrap_or_default();
    if c.norm_xy() == 0.0 {
        return Err(Error::DegenerateAzimuth);
    }
    let alpha = math::atan2(c.y, c.x);
    let (s, co) = (math::sin(theta), math::cos(theta));
    let (dx, dy) = (tau * math::cos(theta + alpha), tau * math::sin(theta + alpha));
    let points = trace
        .points
        .iter()
        .map(|p| {
            let (mut x, mut y) = (p.x, p.y);
            if theta != 0.0 {
                (x, y) = (co * p.x - s * p.y, s * p.x + co * p.y);
            }
            if tau != 0.0 {
                x += dx;
                y += dy;
            }
            Point::new(x, y, p.z, p.intensity)
        })
        .collect::<Vec<_>>();
    let mut out = trace.with_points(PointCloud::new(points));
    out.points.frame_id = trace.points.frame_id.clone();
    Ok(out)
}

/// Moves the trace so its centroid sits at `azimuth_deg` and horizontal
/// `range` from the sensor.
pub fn place_front_near(
    trace: &AttackTrace,
    capability: &AttackCapability,
    azimuth_deg: f64,
    range: f64,
) -> Result<AttackTrace> {
    let (lo, hi) = capability.target_distance;
    if !(range >= lo && range <= hi) {
        return Err(Error::UnreachablePlacement(format!(
            "range {range} m outside the target band [{lo}, {hi}] m"
        )));
    }
    if !azimuth_deg.is_finite() {
        return Err(Error::UnreachablePlacement("non-finite azimuth".into()));
    }
    let c = trace.points.centroid().ok_or(Error::EmptyTrace)?;
    let rho = c.norm_xy();
    if rho == 0.0 {
        return Err(Error::DegenerateAzimuth);
    }
    let alpha = to_degrees(math::atan2(c.y, c.x));
    let theta = to_radians(wrap_deg(azimuth_deg - alpha));
    translate_trace(trace, theta, range - rho)
}

/// Snaps every point onto its nearest lattice ray, keeping its range. When
/// several points land on one ray the nearest survives. Output is in ray
/// order; points outside the field of view are dropped.
pub fn calibrate_to_rays(sensor: &SensorModel, trace: &AttackTrace) -> Result<AttackTrace> {
    if trace.is_empty() {
        return Ok(trace.clone());
    }
    let mut by_ray: BTreeMap<RayId, (f64, Point)> = BTreeMap::new();
    for p in trace.points.iter() {
        let Ok(s) = sensor.spherical(p.xyz()) else { continue };
        let Ok(ray) = sensor.nearest_ray_angles(s.azimuth_deg, s.elevation_deg) else {
            continue;
        };
        let snapped = sensor.origin() + sensor.ray_direction_unchecked(ray) * s.range;
        let q = Point::from_vec(snapped, p.intensity);
        by_ray
            .entry(ray)
            .and_modify(|cur| {
                if s.range < cur.0 {
                    *cur = (s.range, q);
                }
            })
            .or_insert((s.range, q));
    }
    if by_ray.is_empty() {
        return Err(Error::AllOutOfFov);
    }
    let points: PointCloud = by_ray.into_values().map(|(_, p)| p).collect();
    Ok(trace.with_points(points.with_frame_id(trace.points.frame_id.clone())))
}

/// Cuts the trace down to the capability.
///
/// A trace wider than the azimuth window keeps only the points inside the
/// window centered on its median azimuth. If more than `max_points` remain,
/// an even stride over the azimuth-sorted points keeps exactly
/// `max_points`. Deterministic and idempotent.
pub fn prune_to_capability(trace: &AttackTrace, capability: &AttackCapability) -> AttackTrace {
    let pts = &trace.points.points;
    let rel = relative_azimuths(pts);
    let mut keep: Vec<usize> = (0..pts.len()).collect();

    if trace.meta.azimuth_extent_deg > capability.azimuth_window_deg {
        let mut sorted = rel.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[(sorted.len() - 1) / 2];
        let half = capability.azimuth_window_deg / 2.0;
        keep.retain(|&i| rel[i] >= median - half && rel[i] <= median + half);
    }

    if keep.len() > capability.max_points {
        keep.sort_by(|&a, &b| {
            rel[a]
                .total_cmp(&rel[b])
                .then(pts[a].z.total_cmp(&pts[b].z))
                .then(pts[a].total_cmp(&pts[b]))
                .then(a.cmp(&b))
        });
        let n = keep.len();
        let m = capability.max_points;
        let mut picked: Vec<usize> = (0..m).map(|i| keep[i * n / m]).collect();
        picked.sort_unstable();
        keep = picked;
    }

    if keep.len() == pts.len() {
        return trace.clone();
    }
    let points: PointCloud = keep.iter().map(|&i| pts[i]).collect();
    trace.with_points(points.with_frame_id(trace.points.frame_id.clone()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionReport {
    /// Pristine points that survived, in original order, followed by the
    /// injected points.
    pub cloud: PointCloud,
    pub replaced_ray_count: usize,
    pub injected_point_count: usize,
    pub target_box: Box3D,
    /// Pristine points removed because a spoofed return took their ray, with
    /// their original indices.
    pub removed: Vec<(usize, Point)>,
}

impl InjectionReport {
    pub fn injected_points(&self) -> &[Point] {
        let n = self.cloud.points.len();
        &self.cloud.points[n - self.injected_point_count..]
    }

    /// Undoes the injection.
    pub fn restore(&self) -> PointCloud {
        let n = self.cloud.points.len() - self.injected_point_count;
        let kept = &self.cloud.points[..n];
        let total = n + self.removed.len();
        let mut out = Vec::with_capacity(total);
        let mut removed = self.removed.iter().peekable();
        let mut kept = kept.iter();
        for i in 0..total {
            match removed.peek() {
                Some((j, p)) if *j == i => {
                    out.push(*p);
                    removed.next();
                }
                _ => out.extend(kept.next().copied()),
            }
        }
        PointCloud::new(out).with_frame_id(self.cloud.frame_id.clone())
    }
}

/// Replays a calibrated, pruned trace into `cloud`: on every ray the trace
/// uses, pristine returns are removed and the spoofed point takes their
/// place, whatever the relative ranges.
pub fn inject(
    cloud: &PointCloud,
    sensor: &SensorModel,
    trace: &AttackTrace,
    capability: &AttackCapability,
    template: &VehicleTemplate,
) -> Result<InjectionReport> {
    if trace.len() > capability.max_points {
        return Err(Error::CapabilityViolation(format!(
            "{} points exceed the {} point budget",
            trace.len(),
            capability.max_points
        )));
    }
    if trace.meta.azimuth_extent_deg > capability.azimuth_window_deg + 1e-9 {
        return Err(Error::CapabilityViolation(format!(
            "azimuth extent {:.3}° exceeds the {:.3}° window",
            trace.meta.azimuth_extent_deg, capability.azimuth_window_deg
        )));
    }
    let mut spoofed: BTreeMap<RayId, (f64, Point)> = BTreeMap::new();
    for p in trace.points.iter() {
        let s = sensor.spherical(p.xyz())?;
        let ray = sensor.nearest_ray_angles(s.azimuth_deg, s.elevation_deg)?;
        match spoofed.get(&ray) {
            Some((r, _)) if *r <= s.range => {}
            _ => {
                spoofed.insert(ray, (s.range, *p));
            }
        }
    }

    let mut kept = Vec::with_capacity(cloud.len() + spoofed.len());
    let mut removed = Vec::new();
    let mut hit_rays: BTreeMap<RayId, ()> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let ray = sensor
            .spherical(p.xyz())
            .and_then(|s| sensor.nearest_ray_angles(s.azimuth_deg, s.elevation_deg))
            .ok();
        match ray {
            Some(r) if spoofed.contains_key(&r) => {
                removed.push((i, *p));
                hit_rays.insert(r, ());
            }
            _ => kept.push(*p),
        }
    }
    let injected: Vec<Point> = spoofed.values().map(|(_, p)| *p).collect();
    let target_box = fit_vehicle_box(&injected, template, sensor.origin()).ok_or(Error::EmptyTrace)?;
    let injected_point_count = injected.len();
    kept.extend(injected);
    Ok(InjectionReport {
        cloud: PointCloud::new(kept).with_frame_id(cloud.frame_id.clone()),
        replaced_ray_count: hit_rays.len(),
        injected_point_count,
        target_box,
        removed,
    })
}

/// The full attacker pipeline for one trace: move it to `(azimuth_deg,
/// range)`, snap to rays, prune to the capability, then inject.
pub fn spoof_front_near(
    cloud: &PointCloud,
    sensor: &SensorModel,
    trace: &AttackTrace,
    capability: &AttackCapability,
    template: &VehicleTemplate,
    azimuth_deg: f64,
    range: f64,
) -> Result<InjectionReport> {
    let placed = place_front_near(trace, capability, azimuth_deg, range)?;
    let snapped = calibrate_to_rays(sensor, &placed)?;
    let pruned = prune_to_capability(&snapped, capability);
    inject(cloud, sensor, &pruned, capability, template)
}

/// Scales each point about the sensor origin by its own factor drawn from
/// `U(1 − ε, 1 + ε)`. Returns the perturbed trace and the mean per-point
/// displacement.
pub fn perturb_scale(trace: &AttackTrace, epsilon: f64, seed: u64) -> Result<(AttackTrace, f64)> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!("epsilon {epsilon} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(perturb_scale_with(trace, || {
        if epsilon == 0.0 {
            1.0
        } else {
            rng.gen_range(1.0 - epsilon..=1.0 + epsilon)
        }
    }))
}

/// [`perturb_scale`] with an arbitrary factor source.
pub fn perturb_scale_with(trace: &AttackTrace, mut factor: impl FnMut() -> f64) -> (AttackTrace, f64) {
    let mut total = 0.0;
    let points: Vec<Point> = trace
        .points
        .iter()
        .map(|p| {
            let s = factor();
            let q = Point::new(p.x * s, p.y * s, p.z * s, p.intensity);
            total += (q.xyz() - p.xyz()).norm();
            q
        })
        .collect();
    let mean = if points.is_empty() {
        0.0
    } else {
        total / points.len() as f64
    };
    (trace.with_points(PointCloud::new(points)), mean)
}

/// Index of the 10-point size group `(10k, 10k + 10]` a trace falls in.
pub fn size_group(point_count: usize, width: usize) -> Option<usize> {
    (point_count > 0 && width > 0).then(|| (point_count - 1) / width)
}

/// Picks up to `per_group` traces from each size group (seeded shuffle
/// within the group), groups in ascending order.
pub fn select_per_group(
    traces: &[AttackTrace],
    width: usize,
    max_points: usize,
    per_group: usize,
    seed: u64,
) -> Vec<AttackTrace> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, t) in traces.iter().enumerate() {
        if t.len() > max_points {
            continue;
        }
        if let Some(g) = size_group(t.len(), width) {
            groups.entry(g).or_default().push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (_, mut members) in groups {
        // Fisher–Yates
        for i in (1..members.len()).rev() {
            let j = rng.gen_range(0..=i);
            members.swap(i, j);
        }
        members.truncate(per_group);
        members.sort_unstable();
        out.extend(members.into_iter().map(|i| traces[i].clone()));
    }
    out
}

/// Heading that points a template box's length axis along the line of sight.
pub fn line_of_sight_yaw(p: Vec3) -> f64 {
    wrap_rad(math::atan2(p.y, p.x))
}
