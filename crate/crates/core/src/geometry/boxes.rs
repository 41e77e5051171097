use alloc::format;

use crate::math::{self, wrap_rad, Vec3};
use crate::{Error, Result};

/// Tolerance under which a point on a box face still counts as inside.
pub const BOUNDARY_EPS: f64 = 1e-9;

/// Oriented box in the sensor frame: geometric center, `length` along the
/// heading at yaw 0, `width` across, `height` along z, yaw about +z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub center: Vec3,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

impl Box3D {
    /// Validates dims and wraps yaw into (−π, π].
    pub fn new(center: Vec3, length: f64, width: f64, height: f64, yaw: f64) -> Result<Self> {
        if !center.is_finite() || !yaw.is_finite() {
            return Err(Error::InvalidBox("non-finite center or yaw".into()));
        }
        for (name, v) in [("length", length), ("width", width), ("height", height)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidBox(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            center,
            length,
            width,
            height,
            yaw: wrap_rad(yaw),
        })
    }

    pub fn dims(&self) -> Vec3 {
        Vec3::new(self.length, self.width, self.height)
    }

    pub fn half_extents(&self) -> Vec3 {
        self.dims() * 0.5
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    /// Expresses `p` in the yaw-aligned frame centered on the box.
    #[inline]
    pub fn to_local(&self, p: Vec3) -> Vec3 {
        (p - self.center).rotate_z(-self.yaw)
    }

    #[inline]
    pub fn to_local_dir(&self, d: Vec3) -> Vec3 {
        d.rotate_z(-self.yaw)
    }

    pub fn from_local(&self, p: Vec3) -> Vec3 {
        p.rotate_z(self.yaw) + self.center
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let l = self.to_local(p);
        let h = self.half_extents();
        l.x.abs() <= h.x + BOUNDARY_EPS
            && l.y.abs() <= h.y + BOUNDARY_EPS
            && l.z.abs() <= h.z + BOUNDARY_EPS
    }

    /// Same box grown by `margin` on every face.
    pub fn dilated(&self, margin: f64) -> Box3D {
        Box3D {
            length: self.length + 2.0 * margin,
            width: self.width + 2.0 * margin,
            height: self.height + 2.0 * margin,
            ..*self
        }
    }

    /// BEV footprint corners, counter-clockwise.
    pub fn bev_corners(&self) -> [(f64, f64); 4] {
        let (s, c) = (math::sin(self.yaw), math::cos(self.yaw));
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        let local = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)];
        local.map(|(x, y)| {
            (
                self.center.x + c * x - s * y,
                self.center.y + s * x + c * y,
            )
        })
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let bev = self.bev_corners();
        let (z0, z1) = self.z_range();
        let mut out = [Vec3::ZERO; 8];
        for (i, &(x, y)) in bev.iter().enumerate() {
            out[i] = Vec3::new(x, y, z0);
            out[i + 4] = Vec3::new(x, y, z1);
        }
        out
    }

    pub fn z_range(&self) -> (f64, f64) {
        (
            self.center.z - self.height / 2.0,
            self.center.z + self.height / 2.0,
        )
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn aabb(&self) -> (Vec3, Vec3) {
        let c = self.corners();
        c.iter()
            .skip(1)
            .fold((c[0], c[0]), |(lo, hi), &p| (lo.min_by_axis(p), hi.max_by_axis(p)))
    }
}

pub fn point_in_box(p: Vec3, b: &Box3D) -> bool {
    b.contains(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::PI;

    #[test]
    fn center_and_boundary_inside() {
        let b = Box3D::new(Vec3::new(3.0, -2.0, 0.5), 4.0, 2.0, 1.5, 0.7).unwrap();
        assert!(point_in_box(b.center, &b));
        let face = b.center + Vec3::new(2.0, 0.0, 0.0).rotate_z(0.7);
        assert!(point_in_box(face, &b));
        let outside = b.center + Vec3::new(2.01, 0.0, 0.0).rotate_z(0.7);
        assert!(!point_in_box(outside, &b));
        for corner in b.corners() {
            assert!(b.contains(corner));
        }
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(Box3D::new(Vec3::ZERO, 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(Box3D::new(Vec3::ZERO, 1.0, -1.0, 1.0, 0.0).is_err());
        assert!(Box3D::new(Vec3::ZERO, 1.0, 1.0, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn yaw_is_wrapped() {
        let b = Box3D::new(Vec3::ZERO, 1.0, 1.0, 1.0, 3.0 * PI / 2.0).unwrap();
        assert!((b.yaw + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn aabb_of_rotated_square() {
        let b = Box3D::new(Vec3::ZERO, 2.0, 2.0, 2.0, PI / 4.0).unwrap();
        let (lo, hi) = b.aabb();
        let r = 2f64.sqrt();
        assert!((hi.x - r).abs() < 1e-12 && (lo.y + r).abs() < 1e-12);
        assert_eq!((lo.z, hi.z), (-1.0, 1.0));
    }
}
