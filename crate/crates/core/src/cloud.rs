//! Points, clouds and the sensor ray lattice.
//!
//! Frame convention: x forward, y left, z up, meters. Angles exposed in
//! degrees; azimuth lives in (−180, 180].

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::math::{self, to_degrees, to_radians, wrap_deg, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn from_vec(v: Vec3, intensity: f64) -> Self {
        Self::new(v.x, v.y, v.z, intensity)
    }

    #[inline]
    pub fn xyz(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn is_valid(&self) -> bool {
        self.xyz().is_finite() && (0.0..=1.0).contains(&self.intensity)
    }

    /// Total order over all four fields, used wherever a deterministic pick
    /// among equal-range candidates is needed.
    pub(crate) fn total_cmp(&self, o: &Point) -> Ordering {
        self.x
            .total_cmp(&o.x)
            .then(self.y.total_cmp(&o.y))
            .then(self.z.total_cmp(&o.z))
            .then(self.intensity.total_cmp(&o.intensity))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self {
            points,
            frame_id: String::new(),
        }
    }

    pub fn with_frame_id(mut self, frame_id: impl Into<String>) -> Self {
        self.frame_id = frame_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vec3::ZERO, |acc, p| acc + p.xyz());
        Some(sum / self.points.len() as f64)
    }
}

impl FromIterator<Point> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

/// Range and angles of a direction, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spherical {
    pub range: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

/// Converts a sensor-frame vector (origin at zero) to range/azimuth/elevation.
pub fn to_spherical(p: Vec3) -> Result<Spherical> {
    let range = p.norm();
    if range == 0.0 || !range.is_finite() {
        return Err(Error::DegeneratePoint);
    }
    Ok(Spherical {
        range,
        azimuth_deg: wrap_deg(to_degrees(math::atan2(p.y, p.x))),
        elevation_deg: to_degrees(math::atan2(p.z, p.norm_xy())),
    })
}

pub fn from_spherical(range: f64, azimuth_deg: f64, elevation_deg: f64) -> Result<Vec3> {
    if !(range > 0.0) {
        return Err(Error::NonPositiveRange(range));
    }
    Ok(unit_direction(azimuth_deg, elevation_deg) * range)
}

pub(crate) fn unit_direction(azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
    let (az, el) = (to_radians(azimuth_deg), to_radians(elevation_deg));
    let ce = math::cos(el);
    Vec3::new(ce * math::cos(az), ce * math::sin(az), math::sin(el))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RayId {
    pub channel: usize,
    pub azimuth_index: usize,
}

impl RayId {
    pub const fn new(channel: usize, azimuth_index: usize) -> Self {
        Self {
            channel,
            azimuth_index,
        }
    }
}

/// A spinning LiDAR: one laser per elevation, fired at evenly spaced azimuths.
///
/// Ray `k` of a channel points at `azimuth_start + k * azimuth_step`. The
/// model is immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    origin: Vec3,
    elevations_deg: Vec<f64>,
    azimuth_step_deg: f64,
    azimuth_start_deg: f64,
    azimuth_end_deg: f64,
    max_range: f64,
    azimuth_count: usize,
}

const LATTICE_EPS: f64 = 1e-9;

impl SensorModel {
    pub fn new(
        origin: Vec3,
        elevations_deg: Vec<f64>,
        azimuth_step_deg: f64,
        azimuth_start_deg: f64,
        azimuth_end_deg: f64,
        max_range: f64,
    ) -> Result<Self> {
        if elevations_deg.is_empty() {
            return Err(Error::InvalidSensor("no channels".into()));
        }
        if elevations_deg.iter().any(|e| !e.is_finite() || e.abs() >= 90.0) {
            return Err(Error::InvalidSensor(
                "elevations must be finite and inside (-90, 90)".into(),
            ));
        }
        if elevations_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSensor(
                "elevations must be strictly increasing".into(),
            ));
        }
        if !(azimuth_step_deg > 0.0) || !azimuth_step_deg.is_finite() {
            return Err(Error::InvalidSensor("azimuth step must be positive".into()));
        }
        let span = azimuth_end_deg - azimuth_start_deg;
        if !(span > 0.0) || span > 360.0 + LATTICE_EPS || !azimuth_start_deg.is_finite() {
            return Err(Error::InvalidSensor(
                "azimuth span must lie in (0, 360] degrees".into(),
            ));
        }
        if !(max_range > 0.0) || !max_range.is_finite() {
            return Err(Error::InvalidSensor("max range must be positive".into()));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidSensor("origin must be finite".into()));
        }
        let azimuth_count = math::ceil(span / azimuth_step_deg - LATTICE_EPS).max(1.0) as usize;
        Ok(Self {
            origin,
            elevations_deg,
            azimuth_step_deg,
            azimuth_start_deg,
            azimuth_end_deg,
            max_range,
            azimuth_count,
        })
    }

    /// Evenly spaced channels between `min_deg` and `max_deg` inclusive.
    pub fn uniform(
        channels: usize,
        min_deg: f64,
        max_deg: f64,
        azimuth_step_deg: f64,
        azimuth_start_deg: f64,
        azimuth_end_deg: f64,
        max_range: f64,
    ) -> Result<Self> {
        let elevations = linspace(min_deg, max_deg, channels);
        Self::new(
            Vec3::ZERO,
            elevations,
            azimuth_step_deg,
            azimuth_start_deg,
            azimuth_end_deg,
            max_range,
        )
    }

    pub fn with_origin(mut self, origin: Vec3) -> Self {
        self.origin = origin;
        self
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }
    pub fn elevations_deg(&self) -> &[f64] {
        &self.elevations_deg
    }
    pub fn azimuth_step_deg(&self) -> f64 {
        self.azimuth_step_deg
    }
    pub fn azimuth_start_deg(&self) -> f64 {
        self.azimuth_start_deg
    }
    pub fn azimuth_end_deg(&self) -> f64 {
        self.azimuth_end_deg
    }
    pub fn max_range(&self) -> f64 {
        self.max_range
    }
    pub fn channels(&self) -> usize {
        self.elevations_deg.len()
    }
    pub fn azimuth_count(&self) -> usize {
        self.azimuth_count
    }
    pub fn ray_count(&self) -> usize {
        self.channels() * self.azimuth_count
    }

    pub fn is_full_circle(&self) -> bool {
        self.azimuth_end_deg - self.azimuth_start_deg >= 360.0 - LATTICE_EPS
    }

    /// Mean spacing between adjacent channels, or the azimuth step for a
    /// single-channel sensor.
    pub fn mean_channel_spacing_deg(&self) -> f64 {
        let n = self.channels();
        if n < 2 {
            self.azimuth_step_deg
        } else {
            (self.elevations_deg[n - 1] - self.elevations_deg[0]) / (n - 1) as f64
        }
    }

    pub fn ray_azimuth_deg(&self, azimuth_index: usize) -> f64 {
        wrap_deg(self.azimuth_start_deg + azimuth_index as f64 * self.azimuth_step_deg)
    }

    pub fn is_valid_ray(&self, id: RayId) -> bool {
        id.channel < self.channels() && id.azimuth_index < self.azimuth_count
    }

    pub fn linear_index(&self, id: RayId) -> usize {
        id.channel * self.azimuth_count + id.azimuth_index
    }

    pub fn ray_from_linear(&self, index: usize) -> RayId {
        RayId::new(index / self.azimuth_count, index % self.azimuth_count)
    }

    pub fn rays(&self) -> impl Iterator<Item = RayId> + '_ {
        (0..self.channels())
            .flat_map(move |c| (0..self.azimuth_count).map(move |k| RayId::new(c, k)))
    }

    pub fn ray_direction(&self, id: RayId) -> Result<Vec3> {
        if !self.is_valid_ray(id) {
            return Err(Error::InvalidRay {
                channel: id.channel,
                azimuth_index: id.azimuth_index,
            });
        }
        Ok(self.ray_direction_unchecked(id))
    }

    pub(crate) fn ray_direction_unchecked(&self, id: RayId) -> Vec3 {
        unit_direction(
            self.ray_azimuth_deg(id.azimuth_index),
            self.elevations_deg[id.channel],
        )
    }

    /// Spherical coordinates of `p` relative to the sensor origin.
    pub fn spherical(&self, p: Vec3) -> Result<Spherical> {
        to_spherical(p - self.origin)
    }

    pub fn point_at(&self, id: RayId, range: f64) -> Result<Vec3> {
        Ok(self.origin + self.ray_direction(id)? * range)
    }

    pub fn nearest_ray(&self, p: Vec3) -> Result<RayId> {
        let s = self.spherical(p)?;
        self.nearest_ray_angles(s.azimuth_deg, s.elevation_deg)
    }

    /// Ray minimising the angle-space distance
    /// `sqrt(Δazimuth² + Δelevation²)` (azimuth difference wrapped), ties to
    /// the lower `(channel, azimuth_index)`.
    pub fn nearest_ray_angles(&self, azimuth_deg: f64, elevation_deg: f64) -> Result<RayId> {
        let out_of_fov = || Error::OutOfFov {
            azimuth_deg,
            elevation_deg,
        };
        if !azimuth_deg.is_finite() || !elevation_deg.is_finite() {
            return Err(out_of_fov());
        }
        let els = &self.elevations_deg;
        let n_ch = els.len();
        let (gap_lo, gap_hi) = if n_ch >= 2 {
            (els[1] - els[0], els[n_ch - 1] - els[n_ch - 2])
        } else {
            (self.azimuth_step_deg, self.azimuth_step_deg)
        };
        if elevation_deg < els[0] - gap_lo || elevation_deg > els[n_ch - 1] + gap_hi {
            return Err(out_of_fov());
        }

        let n_az = self.azimuth_count;
        let step = self.azimuth_step_deg;
        let mut az_candidates = [0usize; 4];
        let mut n_az_candidates = 0;
        if self.is_full_circle() {
            let mut u = wrap_deg(azimuth_deg - self.azimuth_start_deg);
            if u < 0.0 {
                u += 360.0;
            }
            let k0 = math::floor(u / step) as i64;
            for dk in -1..=2 {
                let k = (k0 + dk).rem_euclid(n_az as i64) as usize;
                push_unique(&mut az_candidates, &mut n_az_candidates, k);
            }
        } else {
            let u = wrap_deg(azimuth_deg - self.azimuth_start_deg);
            let last = (n_az - 1) as f64 * step;
            if u < -step || u > last + step {
                return Err(out_of_fov());
            }
            let k0 = math::floor(u / step) as i64;
            for dk in -1..=2 {
                let k = (k0 + dk).clamp(0, n_az as i64 - 1) as usize;
                push_unique(&mut az_candidates, &mut n_az_candidates, k);
            }
        }
        let az_candidates = &mut az_candidates[..n_az_candidates];
        az_candidates.sort_unstable();

        let pos = els.partition_point(|&e| e < elevation_deg);
        let ch_lo = pos.saturating_sub(2);
        let ch_hi = (pos + 1).min(n_ch - 1);

        let mut best: Option<(f64, RayId)> = None;
        for channel in ch_lo..=ch_hi {
            let del = elevation_deg - els[channel];
            for &k in az_candidates.iter() {
                let daz = wrap_deg(azimuth_deg - self.ray_azimuth_deg(k));
                let d2 = daz * daz + del * del;
                if best.is_none_or(|(b, _)| d2 < b) {
                    best = Some((d2, RayId::new(channel, k)));
                }
            }
        }
        // ch_lo..=ch_hi is never empty
        Ok(best.map(|(_, id)| id).unwrap_or(RayId::new(0, 0)))
    }
}

fn push_unique(buf: &mut [usize; 4], len: &mut usize, v: usize) {
    if !buf[..*len].contains(&v) {
        buf[*len] = v;
        *len += 1;
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Per-ray bucketing of a cloud: for each lattice ray, the index of the
/// nearest-range cloud point whose nearest ray it is.
#[derive(Debug, Clone)]
pub struct RayIndex {
    slots: Vec<u32>,
}

const NO_POINT: u32 = u32::MAX;

impl RayIndex {
    pub fn build(sensor: &SensorModel, cloud: &PointCloud) -> Self {
        Self::build_where(sensor, cloud, |_| true)
    }

    /// Index over the points `keep` admits; the others are never looked at.
    pub fn build_where(sensor: &SensorModel, cloud: &PointCloud, keep: impl Fn(&Point) -> bool) -> Self {
        let mut slots = alloc::vec![NO_POINT; sensor.ray_count()];
        let mut ranges = alloc::vec![f64::INFINITY; sensor.ray_count()];
        for (i, p) in cloud.points.iter().enumerate() {
            if !keep(p) {
                continue;
            }
            let Ok(s) = sensor.spherical(p.xyz()) else {
                continue;
            };
            let Ok(id) = sensor.nearest_ray_angles(s.azimuth_deg, s.elevation_deg) else {
                continue;
            };
            let slot = sensor.linear_index(id);
            let replace = match slots[slot] {
                NO_POINT => true,
                j => match s.range.total_cmp(&ranges[slot]) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => p.total_cmp(&cloud.points[j as usize]) == Ordering::Less,
                },
            };
            if replace {
                slots[slot] = i as u32;
                ranges[slot] = s.range;
            }
        }
        Self { slots }
    }

    pub fn point_index(&self, sensor: &SensorModel, id: RayId) -> Option<usize> {
        match self.slots.get(sensor.linear_index(id)) {
            Some(&NO_POINT) | None => None,
            Some(&i) => Some(i as usize),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn spherical_axes() {
        let s = to_spherical(Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!((s.range, s.azimuth_deg, s.elevation_deg), (1.0, 0.0, 0.0));
        let s = to_spherical(Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert_eq!(s.range, 1.0);
        assert!(close(s.azimuth_deg, 90.0, 1e-12));
        let s = to_spherical(Vec3::new(3.0, 4.0, 0.0)).unwrap();
        assert!(close(s.range, 5.0, 1e-12));
        assert!(close(s.azimuth_deg, 53.1301, 1e-4));
        assert_eq!(s.elevation_deg, 0.0);
    }

    #[test]
    fn spherical_rejects_origin() {
        assert_eq!(to_spherical(Vec3::ZERO), Err(Error::DegeneratePoint));
    }

    #[test]
    fn azimuth_branch_cut_is_positive_180() {
        let s = to_spherical(Vec3::new(-1.0, -0.0, 0.0)).unwrap();
        assert_eq!(s.azimuth_deg, 180.0);
    }

    #[test]
    fn from_spherical_examples() {
        let p = from_spherical(1.0, 0.0, 0.0).unwrap();
        assert_eq!(p, Vec3::new(1.0, 0.0, 0.0));
        let p = from_spherical(2.0, 90.0, 0.0).unwrap();
        assert!(close(p.x, 0.0, 1e-12) && close(p.y, 2.0, 1e-12) && p.z == 0.0);
        assert!(matches!(
            from_spherical(0.0, 0.0, 0.0),
            Err(Error::NonPositiveRange(_))
        ));
        assert!(from_spherical(-1.0, 0.0, 0.0).is_err());
    }

    fn small_sensor() -> SensorModel {
        SensorModel::new(
            Vec3::ZERO,
            alloc::vec![-15.0, 0.0, 10.0],
            1.0,
            0.0,
            10.0,
            50.0,
        )
        .unwrap()
    }

    #[test]
    fn ray_direction_examples() {
        let s = small_sensor();
        assert_eq!(s.ray_direction(RayId::new(1, 0)).unwrap(), Vec3::new(1.0, 0.0, 0.0));
        let d = s.ray_direction(RayId::new(0, 0)).unwrap();
        assert!(close(d.x, 0.96593, 1e-5) && d.y == 0.0 && close(d.z, -0.25882, 1e-5));
        assert!(s.ray_direction(RayId::new(3, 0)).is_err());
        assert!(s.ray_direction(RayId::new(0, 10)).is_err());

        let wide = SensorModel::new(Vec3::ZERO, alloc::vec![0.0], 90.0, 0.0, 360.0, 10.0).unwrap();
        let d = wide.ray_direction(RayId::new(0, 1)).unwrap();
        assert!(close(d.x, 0.0, 1e-12) && close(d.y, 1.0, 1e-12));
    }

    #[test]
    fn ray_count_rounds_up() {
        let s = small_sensor();
        assert_eq!(s.azimuth_count(), 10);
        assert_eq!(s.ray_count(), 30);
        let s = SensorModel::new(Vec3::ZERO, alloc::vec![0.0], 0.3, 0.0, 1.0, 10.0).unwrap();
        assert_eq!(s.azimuth_count(), 4);
        let s = SensorModel::uniform(64, -24.9, 2.0, 0.18, -180.0, 180.0, 120.0).unwrap();
        assert_eq!(s.azimuth_count(), 2000);
    }

    #[test]
    fn sensor_validation() {
        assert!(SensorModel::new(Vec3::ZERO, alloc::vec![], 1.0, 0.0, 10.0, 10.0).is_err());
        assert!(SensorModel::new(Vec3::ZERO, alloc::vec![1.0, 0.0], 1.0, 0.0, 10.0, 10.0).is_err());
        assert!(SensorModel::new(Vec3::ZERO, alloc::vec![0.0], 0.0, 0.0, 10.0, 10.0).is_err());
        assert!(SensorModel::new(Vec3::ZERO, alloc::vec![0.0], 1.0, 0.0, 10.0, 0.0).is_err());
        assert!(SensorModel::new(Vec3::ZERO, alloc::vec![0.0], 1.0, 10.0, 0.0, 10.0).is_err());
    }

    #[test]
    fn nearest_ray_on_lattice_and_ties() {
        let s = small_sensor();
        let p = s.point_at(RayId::new(0, 0), 7.0).unwrap();
        assert_eq!(s.nearest_ray(p).unwrap(), RayId::new(0, 0));
        assert_eq!(s.nearest_ray_angles(2.5, 0.0).unwrap(), RayId::new(1, 2));
        assert_eq!(s.nearest_ray_angles(3.0, 5.0).unwrap(), RayId::new(1, 3));
    }

    #[test]
    fn nearest_ray_fov_edges() {
        let s = small_sensor();
        // below lowest channel by more than one spacing
        assert!(matches!(
            s.nearest_ray_angles(1.0, -31.0),
            Err(Error::OutOfFov { .. })
        ));
        assert!(s.nearest_ray_angles(1.0, -29.0).is_ok());
        assert!(s.nearest_ray_angles(1.0, 21.0).is_err());
        assert!(s.nearest_ray_angles(-2.0, 0.0).is_err());
        assert!(s.nearest_ray_angles(11.0, 0.0).is_err());
        assert!(s.nearest_ray(Vec3::ZERO).is_err());
    }

    #[test]
    fn nearest_ray_wraps_full_circle() {
        let s = SensorModel::new(Vec3::ZERO, alloc::vec![0.0], 1.0, -180.0, 180.0, 10.0).unwrap();
        // ray 0 sits at 180°, ray 359 at 179°
        assert_eq!(s.nearest_ray_angles(179.9, 0.0).unwrap(), RayId::new(0, 0));
        assert_eq!(s.nearest_ray_angles(-179.9, 0.0).unwrap(), RayId::new(0, 0));
        assert_eq!(s.nearest_ray_angles(179.2, 0.0).unwrap(), RayId::new(0, 359));
    }

    #[test]
    fn ray_index_keeps_nearest() {
        let s = small_sensor();
        let far = s.point_at(RayId::new(1, 2), 20.0).unwrap();
        let near = s.point_at(RayId::new(1, 2), 6.0).unwrap();
        let cloud = PointCloud::new(alloc::vec![Point::from_vec(far, 0.1), Point::from_vec(near, 0.2)]);
        let idx = RayIndex::build(&s, &cloud);
        assert_eq!(idx.point_index(&s, RayId::new(1, 2)), Some(1));
        assert_eq!(idx.point_index(&s, RayId::new(1, 3)), None);
    }
}
