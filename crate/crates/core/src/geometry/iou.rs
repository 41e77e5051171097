use alloc::vec::Vec;

use super::Box3D;

const SLIVER_AREA: f64 = 1e-12;

/// Area of the intersection of two boxes' BEV footprints
/// (Sutherland–Hodgman clipping of one rectangle by the other).
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    let subject: Vec<(f64, f64)> = a.bev_corners().to_vec();
    let clip = b.bev_corners();
    let mut poly = subject;
    for i in 0..4 {
        if poly.is_empty() {
            break;
        }
        let e0 = clip[i];
        let e1 = clip[(i + 1) % 4];
        poly = clip_half_plane(&poly, e0, e1);
    }
    let area = shoelace(&poly).abs();
    if area < SLIVER_AREA {
        0.0
    } else {
        area
    }
}

/// Keeps the part of `poly` to the left of the directed edge `e0 → e1`.
fn clip_half_plane(poly: &[(f64, f64)], e0: (f64, f64), e1: (f64, f64)) -> Vec<(f64, f64)> {
    let side = |p: (f64, f64)| (e1.0 - e0.0) * (p.1 - e0.1) - (e1.1 - e0.1) * (p.0 - e0.0);
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let cur = poly[i];
        let prev = poly[(i + poly.len() - 1) % poly.len()];
        let (sc, sp) = (side(cur), side(prev));
        if sc >= 0.0 {
            if sp < 0.0 {
                out.push(intersect(prev, cur, sp, sc));
            }
            out.push(cur);
        } else if sp >= 0.0 {
            out.push(intersect(prev, cur, sp, sc));
        }
    }
    out
}

fn intersect(p: (f64, f64), q: (f64, f64), sp: f64, sq: f64) -> (f64, f64) {
    let t = sp / (sp - sq);
    (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
}

fn shoelace(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        s += x0 * y1 - x1 * y0;
    }
    0.5 * s
}

fn same_box(a: &Box3D, b: &Box3D) -> bool {
    if a.center != b.center || a.height != b.height {
        return false;
    }
    let d = crate::math::wrap_rad(a.yaw - b.yaw);
    let half_turn = (d.abs() - crate::math::PI).abs() < 1e-12;
    let aligned = d.abs() < 1e-12;
    (a.length == b.length && a.width == b.width) && (aligned || half_turn)
}

/// Rotated 3D IoU: BEV polygon overlap times z overlap, over the union volume.
pub fn iou3d(a: &Box3D, b: &Box3D) -> f64 {
    if same_box(a, b) {
        return 1.0;
    }
    let (az0, az1) = a.z_range();
    let (bz0, bz1) = b.z_range();
    let dz = az1.min(bz1) - az0.max(bz0);
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}
