//! Seeded synthetic driving scenes: a ground plane plus sedans parked around
//! the sensor, rendered into a cloud with KITTI-style labels.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attack::VehicleLabel;
use crate::cloud::{PointCloud, SensorModel};
use crate::math::{self, to_radians, Vec3, PI};
use crate::mesh::{Pose, TriangleMesh};
use crate::renderer::{render, PlacedMesh, RangeNoise, Scene, SourceTag};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub ground_z: f64,
    pub vehicles: (usize, usize),
    /// Horizontal range band for vehicle centers.
    pub range: (f64, f64),
    /// Azimuth band (degrees) vehicles are placed in.
    pub azimuth_deg: (f64, f64),
    /// Vehicles are kept out of the box `0 <= x <= clear_x`, `|y| <= clear_y`
    /// so the front-near zone stays free for injections.
    pub clear_x: f64,
    pub clear_y: f64,
    /// Minimum center spacing between vehicles.
    pub spacing: f64,
    /// Standard deviation of the range error (meters); 0 renders exactly.
    pub range_noise_m: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            ground_z: -1.73,
            vehicles: (3, 8),
            range: (10.0, 45.0),
            azimuth_deg: (-60.0, 60.0),
            clear_x: 12.0,
            clear_y: 4.0,
            spacing: 5.5,
            range_noise_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub cloud: PointCloud,
    pub labels: Vec<VehicleLabel>,
    /// Points each vehicle returns in the full scene.
    pub visible_points: Vec<usize>,
}

/// Scene layout only (no rendering).
pub fn synthetic_scene(config: &SynthConfig, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(config.vehicles.0..=config.vehicles.1);
    let mut placed: Vec<PlacedMesh> = Vec::new();
    let mut centers: Vec<Vec3> = Vec::new();
    let mut attempts = 0;
    while placed.len() < n && attempts < 200 * n.max(1) {
        attempts += 1;
        let r = rng.gen_range(config.range.0..=config.range.1);
        let az = to_radians(rng.gen_range(config.azimuth_deg.0..=config.azimuth_deg.1));
        let c = Vec3::new(r * math::cos(az), r * math::sin(az), config.ground_z);
        if c.x >= -3.0 && c.x <= config.clear_x + 2.5 && c.y.abs() <= config.clear_y + 2.5 {
            continue;
        }
        if centers.iter().any(|o| math::hypot(o.x - c.x, o.y - c.y) < config.spacing) {
            continue;
        }
        // mostly road-aligned, sometimes turned
        let yaw = if rng.gen_bool(0.7) {
            rng.gen_range(-0.2..0.2) + if rng.gen_bool(0.5) { 0.0 } else { PI }
        } else {
            rng.gen_range(-PI..PI)
        };
        centers.push(c);
        placed.push(PlacedMesh::new(TriangleMesh::sedan(), Pose::new(c, yaw)));
    }
    Scene {
        target: None,
        occluders: placed,
        ground_z: Some(config.ground_z),
        target_masks: Vec::new(),
        range_noise: (config.range_noise_m > 0.0).then_some(RangeNoise {
            sigma: config.range_noise_m,
            seed: seed ^ 0x5EED_0F_A015E,
        }),
    }
}

/// Renders a scene and labels every vehicle that returned at least one
/// point. The occlusion level compares each vehicle's returns with what it
/// returns when rendered alone: ≥ 80% visible → 0, ≥ 40% → 1, else 2.
pub fn synthetic_frame(sensor: &SensorModel, config: &SynthConfig, seed: u64, frame_id: impl Into<String>) -> SynthFrame {
    let scene = synthetic_scene(config, seed);
    let full = render(sensor, &scene);
    let mut labels = Vec::new();
    let mut visible_points = Vec::new();
    for car in &scene.occluders {
        let Some(bbox) = car.bounding_box() else { continue };
        let alone = render(
            sensor,
            &Scene {
                target: Some(car.clone()),
                ..Scene::default()
            },
        )
        .count(SourceTag::Target);
        // returns of this car in the full scene: points inside its box
        let grown = bbox.dilated(0.1);
        let seen = full
            .cloud
            .iter()
            .zip(&full.tags)
            .filter(|(p, &t)| t == SourceTag::Occluder && grown.contains(p.xyz()))
            .count();
        if seen == 0 || alone == 0 {
            continue;
        }
        let frac = seen as f64 / alone as f64;
        let occluded = if frac >= 0.8 {
            0
        } else if frac >= 0.4 {
            1
        } else {
            2
        };
        labels.push(VehicleLabel {
            object_type: "Car".into(),
            truncated: 0.0,
            occluded,
            bbox,
        });
        visible_points.push(seen);
    }
    SynthFrame {
        cloud: full.cloud.with_frame_id(frame_id),
        labels,
        visible_points,
    }
}
