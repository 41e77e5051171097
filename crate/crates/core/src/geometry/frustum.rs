use alloc::vec::Vec;

use crate::cloud::{Point, PointCloud, RayId, RayIndex, SensorModel};
use crate::math::{self, to_degrees, wrap_deg};
use crate::{Error, Result};

use super::{ray_box_intersect, Box3D};

#[derive(Debug, Clone, PartialEq)]
pub struct FrustumEntry {
    pub ray: RayId,
    /// Parametric interval (meters along the ray) spent inside the box.
    pub t_enter: f64,
    pub t_exit: f64,
    pub hit: Option<Point>,
    pub hit_range: Option<f64>,
}

/// Every lattice ray that passes through a box, with the cloud's return on
/// that ray if there is one. Entries are sorted by `RayId`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frustum {
    pub box_ref: Box3D,
    pub entries: Vec<FrustumEntry>,
}

impl Frustum {
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn returns(&self) -> impl Iterator<Item = &FrustumEntry> {
        self.entries.iter().filter(|e| e.hit.is_some())
    }
}

pub fn extract_frustum(sensor: &SensorModel, cloud: &PointCloud, b: &Box3D) -> Result<Frustum> {
    let index = box_ray_index(sensor, cloud, b);
    extract_frustum_indexed(sensor, cloud, &index, b)
}

/// Ray index that is exact on every ray meeting `b` but only buckets the
/// points inside the box's azimuth wedge, widened by a few firing steps.
/// A point maps to a column at most one step away from its own azimuth,
/// so nothing outside the wedge can land on a candidate ray.
pub fn box_ray_index(sensor: &SensorModel, cloud: &PointCloud, b: &Box3D) -> RayIndex {
    let Some((az_c, rel_lo, rel_hi)) = azimuth_window(sensor, b) else {
        return RayIndex::build(sensor, cloud);
    };
    let margin = 4.0 * sensor.azimuth_step_deg();
    if rel_hi - rel_lo + 2.0 * margin >= 180.0 {
        return RayIndex::build(sensor, cloud);
    }
    let lo = math::to_radians(az_c + rel_lo - margin);
    let hi = math::to_radians(az_c + rel_hi + margin);
    let (lo_x, lo_y) = (math::cos(lo), math::sin(lo));
    let (hi_x, hi_y) = (math::cos(hi), math::sin(hi));
    let origin = sensor.origin();
    RayIndex::build_where(sensor, cloud, |p| {
        let (x, y) = (p.x - origin.x, p.y - origin.y);
        (x == 0.0 && y == 0.0) || (lo_x * y - lo_y * x >= 0.0 && x * hi_y - y * hi_x >= 0.0)
    })
}

/// Azimuth of the box center and the footprint's angular extent around it,
/// in degrees. `None` when the sensor sits inside the footprint or the
/// footprint spans half the horizon.
fn azimuth_window(sensor: &SensorModel, b: &Box3D) -> Option<(f64, f64, f64)> {
    let origin = sensor.origin();
    let rel_center = b.center - origin;
    if rel_center.norm_xy() == 0.0 {
        return None;
    }
    let footprint = b.bev_corners().map(|(x, y)| (x - origin.x, y - origin.y));
    distance_to_convex_polygon(&footprint)?;
    let az_c = to_degrees(math::atan2(rel_center.y, rel_center.x));
    let (mut rel_lo, mut rel_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &footprint {
        let rel = wrap_deg(to_degrees(math::atan2(y, x)) - az_c);
        rel_lo = rel_lo.min(rel);
        rel_hi = rel_hi.max(rel);
    }
    (rel_hi - rel_lo < 180.0).then_some((az_c, rel_lo, rel_hi))
}

/// Same as [`extract_frustum`] with a prebuilt ray index over `cloud`, so a
/// batch of boxes shares one bucketing pass.
pub fn extract_frustum_indexed(
    sensor: &SensorModel,
    cloud: &PointCloud,
    index: &RayIndex,
    b: &Box3D,
) -> Result<Frustum> {
    let origin = sensor.origin();
    let mut entries = Vec::new();
    for ray in candidate_rays(sensor, b) {
        let dir = sensor.ray_direction_unchecked(ray);
        let Some((t_enter, t_exit)) = ray_box_intersect(origin, dir, b) else {
            continue;
        };
        if t_enter >= sensor.max_range() {
            continue;
        }
        let hit = index.point_index(sensor, ray).map(|i| cloud.points[i]);
        let hit_range = hit.map(|p| (p.xyz() - origin).norm());
        entries.push(FrustumEntry {
            ray,
            t_enter,
            t_exit,
            hit,
            hit_range,
        });
    }
    if entries.is_empty() {
        return Err(Error::EmptyFrustum);
    }
    entries.sort_by_key(|e| e.ray);
    Ok(Frustum {
        box_ref: *b,
        entries,
    })
}

/// Conservative superset of the rays that can meet the box, from the box's
/// angular extent. Falls back to the whole lattice when the sensor sits
/// inside the footprint or the box spans half the horizon.
fn candidate_rays(sensor: &SensorModel, b: &Box3D) -> Vec<RayId> {
    let origin = sensor.origin();
    let all = || sensor.rays().collect::<Vec<_>>();
    let rel_center = b.center - origin;
    if rel_center.norm_xy() == 0.0 {
        return all();
    }
    let footprint = b.bev_corners().map(|(x, y)| (x - origin.x, y - origin.y));
    let Some(rho_min) = distance_to_convex_polygon(&footprint) else {
        return all();
    };
    let az_c = to_degrees(math::atan2(rel_center.y, rel_center.x));
    let (mut rel_lo, mut rel_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut rho_max = 0.0f64;
    for &(x, y) in &footprint {
        let rel = wrap_deg(to_degrees(math::atan2(y, x)) - az_c);
        rel_lo = rel_lo.min(rel);
        rel_hi = rel_hi.max(rel);
        rho_max = rho_max.max(math::hypot(x, y));
    }
    if rel_hi - rel_lo >= 180.0 {
        return all();
    }
    let (z_lo, z_hi) = b.z_range();
    let (z_lo, z_hi) = (z_lo - origin.z, z_hi - origin.z);
    let el_hi = to_degrees(math::atan2(z_hi, if z_hi >= 0.0 { rho_min } else { rho_max }));
    let el_lo = to_degrees(math::atan2(z_lo, if z_lo <= 0.0 { rho_min } else { rho_max }));
    const MARGIN_DEG: f64 = 1e-6;
    let channels: Vec<usize> = sensor
        .elevations_deg()
        .iter()
        .enumerate()
        .filter(|(_, &e)| e >= el_lo - MARGIN_DEG && e <= el_hi + MARGIN_DEG)
        .map(|(i, _)| i)
        .collect();
    if channels.is_empty() {
        return Vec::new();
    }

    let step = sensor.azimuth_step_deg();
    let n_az = sensor.azimuth_count() as i64;
    let full = sensor.is_full_circle();
    let mut u_lo = wrap_deg(az_c + rel_lo - sensor.azimuth_start_deg());
    if full && u_lo < 0.0 {
        u_lo += 360.0;
    }
    let k_lo = math::floor(u_lo / step) as i64 - 1;
    let k_hi = math::ceil((u_lo + (rel_hi - rel_lo)) / step) as i64 + 1;
    let mut az: Vec<usize> = Vec::new();
    for k in k_lo..=k_hi {
        let k = if full {
            k.rem_euclid(n_az)
        } else if (0..n_az).contains(&k) {
            k
        } else {
            continue;
        };
        az.push(k as usize);
    }
    az.sort_unstable();
    az.dedup();

    let mut out = Vec::with_capacity(channels.len() * az.len());
    for &c in &channels {
        for &k in &az {
            out.push(RayId::new(c, k));
        }
    }
    out
}

/// Distance from the origin to a convex polygon; `None` if the origin is
/// inside (or on) it.
fn distance_to_convex_polygon(poly: &[(f64, f64); 4]) -> Option<f64> {
    let mut inside = true;
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let (ax, ay) = poly[i];
        let (bx, by) = poly[(i + 1) % 4];
        let (ex, ey) = (bx - ax, by - ay);
        // counter-clockwise polygon: origin is left of every edge when inside
        if ex * (-ay) - ey * (-ax) <= 0.0 {
            inside = false;
        }
        let len2 = ex * ex + ey * ey;
        let t = if len2 > 0.0 {
            ((-ax * ex - ay * ey) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (ax + t * ex, ay + t * ey);
        best = best.min(math::hypot(px, py));
    }
    (!inside).then_some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use alloc::vec;

    fn sensor() -> SensorModel {
        SensorModel::new(Vec3::ZERO, vec![-2.0, 0.0, 2.0, 4.0], 1.0, -30.0, 30.0, 100.0).unwrap()
    }

    #[test]
    fn lattice_counting() {
        // Box at 10 m spanning azimuth (-1.5°, 1.5°) -> rays -1,0,1 ; elevation
        // (-1°, 3°) -> channels 0° and 2°.
        let s = sensor();
        let r = 10.0;
        let top = 10.0 * math::tan_deg(3.0);
        let bottom = 10.0 * math::tan_deg(-1.0);
        let b = Box3D::new(
            Vec3::new(r, 0.0, (top + bottom) / 2.0),
            0.01,
            2.0 * r * math::tan_deg(1.5),
            top - bottom,
            0.0,
        )
        .unwrap();
        let f = extract_frustum(&s, &PointCloud::default(), &b).unwrap();
        assert_eq!(f.len(), 6);
        assert!(f.entries.iter().all(|e| e.hit.is_none()));
    }

    #[test]
    fn behind_sensor_is_empty() {
        let s = sensor();
        let b = Box3D::new(Vec3::new(-10.0, 0.0, 0.0), 4.0, 2.0, 2.0, 0.0).unwrap();
        assert_eq!(
            extract_frustum(&s, &PointCloud::default(), &b),
            Err(Error::EmptyFrustum)
        );
    }

    #[test]
    fn box_index_agrees_with_full_index() {
        let s = SensorModel::uniform(16, -15.0, 5.0, 0.5, -180.0, 180.0, 80.0).unwrap();
        // a deterministic scatter all around the sensor
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let pts: Vec<Point> = (0..20000)
            .map(|_| Point::new(next() * 60.0 - 30.0, next() * 60.0 - 30.0, next() * 4.0 - 3.0, 0.5))
            .collect();
        let cloud = PointCloud::new(pts);
        let full = RayIndex::build(&s, &cloud);
        for (x, y, yaw) in [(8.0, 0.0, 0.0), (-6.0, 5.0, 1.0), (0.5, -9.0, 2.0), (-12.0, -0.1, 0.3), (1.0, 0.0, 0.0)] {
            let b = Box3D::new(Vec3::new(x, y, -1.0), 4.0, 1.8, 1.6, yaw).unwrap();
            let a = extract_frustum_indexed(&s, &cloud, &full, &b).unwrap();
            assert_eq!(extract_frustum(&s, &cloud, &b).unwrap(), a);
        }
    }

    #[test]
    fn attaches_nearest_return() {
        let s = sensor();
        let b = Box3D::new(Vec3::new(10.0, 0.0, 0.0), 2.0, 2.0, 2.0, 0.0).unwrap();
        let ray = RayId::new(1, 30);
        let p = s.point_at(ray, 10.0).unwrap();
        let q = s.point_at(ray, 25.0).unwrap();
        let cloud = PointCloud::new(vec![Point::from_vec(q, 0.5), Point::from_vec(p, 0.5)]);
        let f = extract_frustum(&s, &cloud, &b).unwrap();
        let e = f.entries.iter().find(|e| e.ray == ray).unwrap();
        assert!((e.hit_range.unwrap() - 10.0).abs() < 1e-9);
        assert_eq!(f.returns().count(), 1);
    }
}
