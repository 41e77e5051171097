//! Ray-casting LiDAR simulator over triangle meshes.
//!
//! Every lattice ray returns at most one point: the nearest positive hit
//! among the target, the occluders and (optionally) the ground plane. The
//! nearest-hit rule gives both occlusion by other objects and self-occlusion
//! of the target's far side.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::attack::{relative_azimuths, AttackTrace, TraceSource};
use crate::cloud::{Point, PointCloud, RayId, SensorModel};
use crate::geometry::{ray_aabb_intersect, ray_triangle_intersect, Box3D, Triangle};
use crate::math::{wrap_deg, Vec3};
use crate::mesh::{Pose, TriangleMesh};

pub const MESH_INTENSITY: f64 = 0.5;
pub const GROUND_INTENSITY: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedMesh {
    pub mesh: TriangleMesh,
    pub pose: Pose,
}

impl PlacedMesh {
    pub fn new(mesh: TriangleMesh, pose: Pose) -> Self {
        Self { mesh, pose }
    }

    pub fn bounding_box(&self) -> Option<Box3D> {
        self.mesh.posed_box(&self.pose)
    }
}

/// Azimuth band `[start, end]` (degrees, sensor frame) in which the target
/// is treated as hidden.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AzimuthMask {
    pub start_deg: f64,
    pub end_deg: f64,
}

impl AzimuthMask {
    pub fn contains(&self, azimuth_deg: f64) -> bool {
        let width = wrap_deg(self.end_deg - self.start_deg);
        let width = if width < 0.0 { width + 360.0 } else { width };
        let mut rel = wrap_deg(azimuth_deg - self.start_deg);
        if rel < 0.0 {
            rel += 360.0;
        }
        rel <= width
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub target: Option<PlacedMesh>,
    pub occluders: Vec<PlacedMesh>,
    pub ground_z: Option<f64>,
    /// Target hits inside any band are discarded (the ray returns nothing).
    pub target_masks: Vec<AzimuthMask>,
    pub range_noise: Option<RangeNoise>,
}

/// Zero-mean Gaussian range error added to every return, drawn in ray order
/// from a seeded generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeNoise {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SourceTag {
    Target,
    Occluder,
    Ground,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RenderResult {
    pub cloud: PointCloud,
    pub rays: Vec<RayId>,
    pub tags: Vec<SourceTag>,
}

impl RenderResult {
    pub fn target_points(&self) -> PointCloud {
        self.points_tagged(SourceTag::Target)
    }

    pub fn points_tagged(&self, tag: SourceTag) -> PointCloud {
        self.cloud
            .points
            .iter()
            .zip(&self.tags)
            .filter(|(_, &t)| t == tag)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn count(&self, tag: SourceTag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }
}

struct WorldMesh {
    triangles: Vec<Triangle>,
    lo: Vec3,
    hi: Vec3,
    tag: SourceTag,
}

impl WorldMesh {
    fn new(placed: &PlacedMesh, tag: SourceTag) -> Option<Self> {
        let triangles = placed.mesh.posed_triangles(&placed.pose);
        let first = triangles.first()?;
        let (lo, hi) = triangles.iter().fold((first.a, first.a), |(lo, hi), t| {
            (
                lo.min_by_axis(t.a).min_by_axis(t.b).min_by_axis(t.c),
                hi.max_by_axis(t.a).max_by_axis(t.b).max_by_axis(t.c),
            )
        });
        // pad so that rays grazing a flat face still reach the triangle test
        let pad = Vec3::new(1e-6, 1e-6, 1e-6);
        Some(Self {
            triangles,
            lo: lo - pad,
            hi: hi + pad,
            tag,
        })
    }

    fn nearest_hit(&self, origin: Vec3, dir: Vec3, t_max: f64) -> Option<f64> {
        let (t0, _) = ray_aabb_intersect(origin, dir, self.lo, self.hi)?;
        if t0 >= t_max {
            return None;
        }
        self.triangles
            .iter()
            .filter_map(|t| ray_triangle_intersect(origin, dir, t))
            .filter(|&t| t < t_max)
            .min_by(f64::total_cmp)
    }
}

/// Casts every lattice ray of `sensor` into `scene`. Output is in `RayId`
/// order.
pub fn render(sensor: &SensorModel, scene: &Scene) -> RenderResult {
    let origin = sensor.origin();
    let mut meshes: Vec<WorldMesh> = Vec::new();
    if let Some(t) = &scene.target {
        meshes.extend(WorldMesh::new(t, SourceTag::Target));
    }
    for o in &scene.occluders {
        meshes.extend(WorldMesh::new(o, SourceTag::Occluder));
    }

    let mut noise = scene.range_noise.and_then(|n| {
        let normal = Normal::new(0.0, n.sigma).ok()?;
        Some((normal, ChaCha8Rng::seed_from_u64(n.seed)))
    });
    let mut out = RenderResult::default();
    for ray in sensor.rays() {
        let dir = sensor.ray_direction_unchecked(ray);
        let mut best: Option<(f64, SourceTag)> = None;
        let limit = sensor.max_range();
        for m in &meshes {
            let t_max = best.map_or(limit, |(t, _)| t);
            if let Some(t) = m.nearest_hit(origin, dir, t_max) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, m.tag));
                }
            }
        }
        if let Some(gz) = scene.ground_z {
            if dir.z < 0.0 && origin.z > gz {
                let t = (gz - origin.z) / dir.z;
                let t_max = best.map_or(limit, |(t, _)| t);
                if t > 0.0 && t < t_max {
                    best = Some((t, SourceTag::Ground));
                }
            }
        }
        let Some((mut t, tag)) = best else { continue };
        if t > limit {
            continue;
        }
        if tag == SourceTag::Target
            && scene
                .target_masks
                .iter()
                .any(|m| m.contains(sensor.ray_azimuth_deg(ray.azimuth_index)))
        {
            continue;
        }
        if let Some((normal, rng)) = noise.as_mut() {
            t = (t + normal.sample(rng)).max(1e-3);
        }
        let intensity = match tag {
            SourceTag::Ground => GROUND_INTENSITY,
            _ => MESH_INTENSITY,
        };
        out.cloud.points.push(Point::from_vec(origin + dir * t, intensity));
        out.rays.push(ray);
        out.tags.push(tag);
    }
    out
}

/// Where the target sits for one member of a trace family: horizontal range
/// and azimuth of the mesh origin, plus the vehicle heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posture {
    pub range: f64,
    pub azimuth_deg: f64,
    pub yaw: f64,
}

impl Posture {
    pub fn pose(&self, ground_z: f64) -> Pose {
        let d = crate::cloud::unit_direction(self.azimuth_deg, 0.0) * self.range;
        Pose::new(Vec3::new(d.x, d.y, ground_z), self.yaw)
    }
}

/// How the target is thinned for one family member.
#[derive(Debug, Clone, PartialEq)]
pub enum OcclusionPattern {
    None,
    /// Keep only the target returns whose azimuth, measured from the target's
    /// own left edge, falls in `[offset, offset + width]` of its angular span
    /// (fractions in [0, 1]).
    VisibleBand { offset: f64, width: f64 },
    /// Physical occluder placed relative to the sensor.
    Occluder(PlacedMesh),
    /// Independent random dropout; each target return survives with
    /// probability `keep`.
    Dropout { keep: f64 },
}

/// Renders `mesh` at every posture under every occlusion pattern and packages
/// the target points as traces. Deterministic in `(inputs, seed)`.
pub fn render_trace_family(
    sensor: &SensorModel,
    mesh: &TriangleMesh,
    ground_z: f64,
    postures: &[Posture],
    patterns: &[OcclusionPattern],
    seed: u64,
) -> Vec<AttackTrace> {
    let mut family = Vec::new();
    for (pi, posture) in postures.iter().enumerate() {
        let target = PlacedMesh::new(mesh.clone(), posture.pose(ground_z));
        let base_scene = Scene {
            target: Some(target.clone()),
            ..Scene::default()
        };
        let full = render(sensor, &base_scene).target_points();
        let rel = relative_azimuths(&full.points);
        let lo = rel.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (oi, pattern) in patterns.iter().enumerate() {
            let points = match pattern {
                OcclusionPattern::None => full.clone(),
                OcclusionPattern::VisibleBand { offset, width } => {
                    let a = lo + (hi - lo) * offset.clamp(0.0, 1.0);
                    let b = lo + (hi - lo) * (offset + width).clamp(0.0, 1.0);
                    full.iter()
                        .zip(&rel)
                        .filter(|(_, &r)| r >= a && r <= b)
                        .map(|(p, _)| *p)
                        .collect()
                }
                OcclusionPattern::Occluder(occ) => {
                    let scene = Scene {
                        occluders: alloc::vec![occ.clone()],
                        ..base_scene.clone()
                    };
                    render(sensor, &scene).target_points()
                }
                OcclusionPattern::Dropout { keep } => {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        seed ^ ((pi as u64) << 32) ^ (oi as u64).wrapping_mul(0x9E37_79B9),
                    );
                    full.iter()
                        .filter(|_| rng.gen::<f64>() < *keep)
                        .copied()
                        .collect()
                }
            };
            if points.is_empty() {
                continue;
            }
            family.push(AttackTrace::new(
                points,
                TraceSource::Rendered,
                posture.range,
            ));
        }
    }
    family
}
