//! Scene description for `carlo render`.
//!
//! ```toml
//! seed = 1
//! ground = true
//! ground_z = -1.73
//! [target]
//! mesh = "sedan"          # or "wall:W:H", "box:L:W:H", or an OBJ path
//! x = 6.0
//! y = 0.0
//! yaw = 0.0
//! [[occluders]]
//! mesh = "wall:2:2"
//! x = 4.0
//! y = 1.0
//! [[masks]]
//! start_deg = -2.0
//! end_deg = 2.0
//! [family]                # optional: sweep postures and occlusion patterns
//! ranges = [10.0, 20.0]
//! azimuths_deg = [0.0]
//! yaws = [0.0, 1.57]
//! bands = [[0.0, 0.5]]
//! dropouts = [0.3]
//! ```
//! Mesh paths are relative to the scene file.

use std::path::Path;

use carlo_core::math::Vec3;
use carlo_core::mesh::{Pose, TriangleMesh};
use carlo_core::renderer::{AzimuthMask, OcclusionPattern, PlacedMesh, Posture, RangeNoise, Scene};
use serde::{Deserialize, Serialize};

use crate::error::{read_text, DataError, DataResult};
use crate::obj::read_obj_mesh;

fn default_ground_z() -> f64 {
    -1.73
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshPlacement {
    pub mesh: String,
    pub x: f64,
    pub y: f64,
    /// Height of the mesh origin; defaults to the ground height.
    #[serde(default)]
    pub z: Option<f64>,
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    pub start_deg: f64,
    pub end_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub ranges: Vec<f64>,
    #[serde(default)]
    pub azimuths_deg: Vec<f64>,
    #[serde(default)]
    pub yaws: Vec<f64>,
    /// Include the unoccluded rendering of every posture.
    #[serde(default = "default_true")]
    pub full: bool,
    /// Visible azimuth bands `[offset, width]` as fractions of the target span.
    #[serde(default)]
    pub bands: Vec<[f64; 2]>,
    /// Keep probabilities for random dropout.
    #[serde(default)]
    pub dropouts: Vec<f64>,
    #[serde(default)]
    pub occluders: Vec<MeshPlacement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ground: bool,
    #[serde(default = "default_ground_z")]
    pub ground_z: f64,
    #[serde(default)]
    pub range_noise_m: f64,
    pub target: Option<MeshPlacement>,
    #[serde(default)]
    pub occluders: Vec<MeshPlacement>,
    #[serde(default)]
    pub masks: Vec<MaskSpec>,
    pub family: Option<FamilySpec>,
}

/// Postures and patterns for a trace family sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyPlan {
    pub mesh: TriangleMesh,
    pub postures: Vec<Posture>,
    pub patterns: Vec<OcclusionPattern>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScene {
    pub file: SceneFile,
    pub scene: Scene,
    pub family: Option<FamilyPlan>,
}

fn dims(spec: &str, parts: &[&str], n: usize) -> DataResult<Vec<f64>> {
    let v: Vec<f64> = parts.iter().filter_map(|p| p.parse().ok()).filter(|x: &f64| *x > 0.0).collect();
    if v.len() != n || parts.len() != n {
        return Err(DataError::invalid(format!("mesh {spec:?}: expected {n} positive sizes")));
    }
    Ok(v)
}

/// Built-in shape or OBJ file.
pub fn resolve_mesh(spec: &str, base: &Path) -> DataResult<TriangleMesh> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts[0] {
        "sedan" => Ok(TriangleMesh::sedan()),
        "wall" => {
            let d = dims(spec, &parts[1..], 2)?;
            Ok(TriangleMesh::wall(d[0], d[1]))
        }
        "box" => {
            let d = dims(spec, &parts[1..], 3)?;
            Ok(TriangleMesh::cuboid(
                Vec3::new(-d[0] / 2.0, -d[1] / 2.0, 0.0),
                Vec3::new(d[0] / 2.0, d[1] / 2.0, d[2]),
            ))
        }
        _ => read_obj_mesh(&read_text(&base.join(spec))?),
    }
}

fn place(p: &MeshPlacement, ground_z: f64, base: &Path) -> DataResult<PlacedMesh> {
    let t = Vec3::new(p.x, p.y, p.z.unwrap_or(ground_z));
    if !t.is_finite() || !p.yaw.is_finite() {
        return Err(DataError::invalid("mesh pose must be finite"));
    }
    Ok(PlacedMesh::new(resolve_mesh(&p.mesh, base)?, Pose::new(t, p.yaw)))
}

pub fn parse_scene(text: &str, base: &Path) -> DataResult<LoadedScene> {
    let file: SceneFile = toml::from_str(text).map_err(|e| DataError::invalid(format!("scene: {e}")))?;
    if !(file.range_noise_m >= 0.0) || !file.ground_z.is_finite() {
        return Err(DataError::invalid("scene: range_noise_m must be >= 0 and ground_z finite"));
    }
    let target = file.target.as_ref().map(|t| place(t, file.ground_z, base)).transpose()?;
    let occluders = file
        .occluders
        .iter()
        .map(|o| place(o, file.ground_z, base))
        .collect::<DataResult<Vec<_>>>()?;
    let scene = Scene {
        target,
        occluders,
        ground_z: file.ground.then_some(file.ground_z),
        target_masks: file
            .masks
            .iter()
            .map(|m| AzimuthMask {
                start_deg: m.start_deg,
                end_deg: m.end_deg,
            })
            .collect(),
        range_noise: (file.range_noise_m > 0.0).then_some(RangeNoise {
            sigma: file.range_noise_m,
            seed: file.seed,
        }),
    };
    let family = match &file.family {
        None => None,
        Some(f) => {
            let t = file
                .target
                .as_ref()
                .ok_or_else(|| DataError::invalid("scene: a family sweep needs a [target] mesh"))?;
            let mesh = resolve_mesh(&t.mesh, base)?;
            let azimuths = if f.azimuths_deg.is_empty() { vec![0.0] } else { f.azimuths_deg.clone() };
            let yaws = if f.yaws.is_empty() { vec![0.0] } else { f.yaws.clone() };
            let mut postures = Vec::new();
            for &range in &f.ranges {
                for &azimuth_deg in &azimuths {
                    for &yaw in &yaws {
                        postures.push(Posture { range, azimuth_deg, yaw });
                    }
                }
            }
            let mut patterns = Vec::new();
            if f.full {
                patterns.push(OcclusionPattern::None);
            }
            patterns.extend(f.bands.iter().map(|&[offset, width]| OcclusionPattern::VisibleBand { offset, width }));
            patterns.extend(f.dropouts.iter().map(|&keep| OcclusionPattern::Dropout { keep }));
            for o in &f.occluders {
                patterns.push(OcclusionPattern::Occluder(place(o, file.ground_z, base)?));
            }
            Some(FamilyPlan { mesh, postures, patterns })
        }
    };
    Ok(LoadedScene { file, scene, family })
}

pub fn load_scene(path: &Path) -> DataResult<LoadedScene> {
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scene(&read_text(path)?, base)
}
