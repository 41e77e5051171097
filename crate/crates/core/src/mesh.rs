//! Triangle meshes and rigid poses on the ground plane.

use alloc::format;
use alloc::vec::Vec;

use crate::geometry::{Box3D, Triangle};
use crate::math::{wrap_rad, Vec3};
use crate::{Error, Result};

const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Checks indices and drops zero-area triangles.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(v) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not finite")));
        }
        for (i, t) in triangles.iter().enumerate() {
            if let Some(&bad) = t.iter().find(|&&k| k >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {i} references vertex {bad} of {}",
                    vertices.len()
                )));
            }
        }
        let triangles = triangles
            .into_iter()
            .filter(|t| {
                Triangle::new(vertices[t[0]], vertices[t[1]], vertices[t[2]]).area()
                    > DEGENERATE_AREA
            })
            .collect();
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn triangle(&self, i: usize) -> Triangle {
        let [a, b, c] = self.triangles[i];
        Triangle::new(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Axis-aligned bounds in the mesh frame.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.triangles.iter().flatten().map(|&i| self.vertices[i]);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| {
            (lo.min_by_axis(v), hi.max_by_axis(v))
        }))
    }

    pub fn posed_triangles(&self, pose: &Pose) -> Vec<Triangle> {
        (0..self.triangles.len())
            .map(|i| {
                let t = self.triangle(i);
                Triangle::new(pose.apply(t.a), pose.apply(t.b), pose.apply(t.c))
            })
            .collect()
    }

    /// Oriented box of the mesh-frame bounds carried through `pose`.
    pub fn posed_box(&self, pose: &Pose) -> Option<Box3D> {
        let (lo, hi) = self.bounds()?;
        let center_local = (lo + hi) * 0.5;
        let ext = hi - lo;
        Box3D::new(pose.apply(center_local), ext.x, ext.y, ext.z, pose.yaw).ok()
    }

    /// Appends another mesh (vertex indices are shifted).
    pub fn merge(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(
            other
                .triangles
                .iter()
                .map(|t| [t[0] + base, t[1] + base, t[2] + base]),
        );
    }

    /// Axis-aligned cuboid with outward-facing triangles.
    pub fn cuboid(lo: Vec3, hi: Vec3) -> Self {
        let profile = [(lo.x, lo.z), (hi.x, lo.z), (hi.x, hi.z), (lo.x, hi.z)];
        Self::prism_xz(&profile, lo.y, hi.y)
    }

    /// Extrudes a convex counter-clockwise (x, z) profile between `y0` and `y1`.
    pub fn prism_xz(profile: &[(f64, f64)], y0: f64, y1: f64) -> Self {
        let n = profile.len();
        let mut vertices = Vec::with_capacity(2 * n);
        for &(x, z) in profile {
            vertices.push(Vec3::new(x, y0, z));
        }
        for &(x, z) in profile {
            vertices.push(Vec3::new(x, y1, z));
        }
        let mut triangles = Vec::new();
        for i in 1..n - 1 {
            triangles.push([0, i, i + 1]);
            triangles.push([n, n + i + 1, n + i]);
        }
        for i in 0..n {
            let j = (i + 1) % n;
            triangles.push([i, n + i, j]);
            triangles.push([j, n + i, n + j]);
        }
        Self {
            vertices,
            triangles,
        }
    }

    /// Low-poly sedan, about 4.0 × 1.6 × 1.5 m. Frame: x forward, origin at
    /// the bottom center, z = 0 on the ground.
    pub fn sedan() -> Self {
        let mut mesh = Self::cuboid(Vec3::new(-2.0, -0.8, 0.3), Vec3::new(2.0, 0.8, 0.95));
        let cabin = [(-1.5, 0.95), (1.0, 0.95), (0.3, 1.5), (-1.1, 1.5)];
        mesh.merge(&Self::prism_xz(&cabin, -0.72, 0.72));
        for (x, y) in [(1.3, 0.6), (1.3, -0.8), (-1.3, 0.6), (-1.3, -0.8)] {
            mesh.merge(&Self::cuboid(
                Vec3::new(x - 0.32, y, 0.0),
                Vec3::new(x + 0.32, y + 0.2, 0.3),
            ));
        }
        mesh
    }

    /// Flat vertical wall facing −x, `width` along y and `height` along z,
    /// with its base at z = 0 (used as a parametric occluder).
    pub fn wall(width: f64, height: f64) -> Self {
        Self::cuboid(
            Vec3::new(-0.05, -width / 2.0, 0.0),
            Vec3::new(0.05, width / 2.0, height),
        )
    }
}

/// Translation of the mesh origin plus yaw about +z.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub translation: Vec3,
    pub yaw: f64,
}

impl Pose {
    pub fn new(translation: Vec3, yaw: f64) -> Self {
        Self {
            translation,
            yaw: wrap_rad(yaw),
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        p.rotate_z(self.yaw) + self.translation
    }
}
