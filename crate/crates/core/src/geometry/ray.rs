use crate::math::Vec3;

use super::Box3D;

/// Slab test in the box frame. Returns `(t_enter, t_exit)` with
/// `0 <= t_enter < t_exit`; grazing contact of zero length is a miss.
pub fn ray_box_intersect(origin: Vec3, dir: Vec3, b: &Box3D) -> Option<(f64, f64)> {
    let o = b.to_local(origin);
    let d = b.to_local_dir(dir);
    let h = b.half_extents();
    slab(o, d, -h, h)
}

/// Slab test against an axis-aligned box given by its corners.
pub fn ray_aabb_intersect(origin: Vec3, dir: Vec3, lo: Vec3, hi: Vec3) -> Option<(f64, f64)> {
    slab(origin, dir, lo, hi)
}

#[inline]
fn slab(o: Vec3, d: Vec3, lo: Vec3, hi: Vec3) -> Option<(f64, f64)> {
    let mut t_enter = 0.0f64;
    let mut t_exit = f64::INFINITY;
    for axis in 0..3 {
        let (oi, di, l, h) = (o[axis], d[axis], lo[axis], hi[axis]);
        if di == 0.0 {
            // parallel: must sit strictly between the planes
            if oi <= l || oi >= h {
                return None;
            }
            continue;
        }
        let inv = 1.0 / di;
        let (mut t0, mut t1) = ((l - oi) * inv, (h - oi) * inv);
        if t0 > t1 {
            core::mem::swap(&mut t0, &mut t1);
        }
        t_enter = t_enter.max(t0);
        t_exit = t_exit.min(t1);
        if t_exit <= t_enter {
            return None;
        }
    }
    Some((t_enter, t_exit))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
}

impl Triangle {
    pub const fn new(a: Vec3, b: Vec3, c: Vec3) -> Self {
        Self { a, b, c }
    }

    pub fn normal(&self) -> Vec3 {
        (self.b - self.a).cross(self.c - self.a)
    }

    pub fn area(&self) -> f64 {
        0.5 * self.normal().norm()
    }
}

/// Möller–Trumbore. Edge and vertex hits count; only `t > 0` is reported.
pub fn ray_triangle_intersect(origin: Vec3, dir: Vec3, tri: &Triangle) -> Option<f64> {
    let e1 = tri.b - tri.a;
    let e2 = tri.c - tri.a;
    let p = dir.cross(e2);
    let det = e1.dot(p);
    let scale = e1.norm() * e2.norm();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri.a;
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > 0.0).then_some(t)
}
