//! Seeded synthetic benchmarks: background frames, valid front-near
//! vehicles, rendered trace families and spoofed scenes. Shared by the
//! `campaign` and `carlo-fit` subcommands and by the acceptance suite.

use std::f64::consts::PI;

use carlo_core::attack::{
    prune_to_capability, select_per_group, spoof_front_near, AttackCapability, AttackTrace, InjectionReport,
    VehicleTemplate,
};
use carlo_core::carlo::ScoredScene;
use carlo_core::cloud::{PointCloud, SensorModel};
use carlo_core::geometry::Box3D;
use carlo_core::harness::{proxy_detect, Detection, ProxyDetectorConfig, SuccessRule};
use carlo_core::math::{cos, sin, to_radians, Vec3};
use carlo_core::mesh::{Pose, TriangleMesh};
use carlo_core::renderer::{render, render_trace_family, OcclusionPattern, PlacedMesh, Posture, Scene, SourceTag};
use carlo_core::synth::{synthetic_scene, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::DataResult;

/// Which box a calibration sample is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxSource {
    /// Ground-truth box of the valid vehicle, expected box of the spoof.
    Label,
    /// The proxy detector's box at that location (samples without one are
    /// dropped).
    Detector,
}

/// A real vehicle parked in the front-near zone of a background frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidScene {
    pub cloud: PointCloud,
    pub label: Box3D,
    pub visible_points: usize,
}

#[derive(Debug, Clone)]
pub struct Bench {
    pub sensor: SensorModel,
    pub synth: SynthConfig,
    /// Render the ground plane in every scene.
    pub ground: bool,
    pub capability: AttackCapability,
    pub template: VehicleTemplate,
    pub detector: ProxyDetectorConfig,
    pub rule: SuccessRule,
    pub seed: u64,
}

const STREAM_BACKGROUND: u64 = 1;
const STREAM_VALID: u64 = 2;
const STREAM_FAMILY: u64 = 3;
const STREAM_DENSE: u64 = 4;
const STREAM_SPOOF: u64 = 5;

/// SplitMix64 over `(seed, stream, index)`.
pub fn mix_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Frame id used for synthetic frame `i`.
pub fn frame_id(i: usize) -> String {
    format!("{i:06}")
}

impl Bench {
    pub fn from_config(cfg: &RunConfig) -> DataResult<Self> {
        Ok(Self {
            sensor: cfg.sensor_model()?,
            synth: cfg.synth(),
            ground: true,
            capability: cfg.capability(),
            template: cfg.template(),
            detector: cfg.detector(),
            rule: cfg.rule().map_err(crate::error::DataError::Invalid)?,
            seed: cfg.seed,
        })
    }

    fn scene(&self, seed: u64) -> Scene {
        let mut s = synthetic_scene(&self.synth, seed);
        if !self.ground {
            s.ground_z = None;
        }
        s
    }

    /// Background frame `i`: parked cars around a clear front-near zone.
    pub fn background(&self, i: usize) -> PointCloud {
        let scene = self.scene(mix_seed(self.seed, STREAM_BACKGROUND, i as u64));
        render(&self.sensor, &scene).cloud.with_frame_id(frame_id(i))
    }

    pub fn backgrounds(&self, n: usize) -> Vec<PointCloud> {
        (0..n).into_par_iter().map(|i| self.background(i)).collect()
    }

    /// Background `i` plus a sedan whose center lies in the capability's
    /// distance band within ±10° of straight ahead.
    pub fn valid_scene(&self, i: usize) -> ValidScene {
        let seed = mix_seed(self.seed, STREAM_VALID, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = self.capability.target_distance;
        let r = rng.gen_range(lo..=hi);
        let az = to_radians(rng.gen_range(-10.0..=10.0));
        let yaw = if rng.gen_bool(0.8) {
            rng.gen_range(-0.2..0.2) + if rng.gen_bool(0.5) { 0.0 } else { PI }
        } else {
            rng.gen_range(-PI..PI)
        };
        let car = PlacedMesh::new(
            TriangleMesh::sedan(),
            Pose::new(Vec3::new(r * cos(az), r * sin(az), self.synth.ground_z), yaw),
        );
        let label = car.bounding_box().expect("sedan has a box");
        let mut scene = self.scene(seed);
        scene.target = Some(car);
        let out = render(&self.sensor, &scene);
        ValidScene {
            visible_points: out.count(SourceTag::Target),
            cloud: out.cloud.with_frame_id(format!("valid-{i:06}")),
            label,
        }
    }

    /// Traces rendered at front-near postures under visible-band, dropout
    /// and no occlusion, each pruned to the capability at its source.
    pub fn rendered_family(&self) -> Vec<AttackTrace> {
        let mut postures = Vec::new();
        let (lo, hi) = self.capability.target_distance;
        for k in 0..3 {
            let range = lo + (hi - lo) * (k as f64 + 0.5) / 3.0;
            for az in [-4.0, 0.0, 4.0] {
                for yaw in [0.0, 0.5, PI / 2.0, 2.6] {
                    postures.push(Posture { range, azimuth_deg: az, yaw });
                }
            }
        }
        let mut patterns = vec![OcclusionPattern::None];
        for w in [0.08, 0.15, 0.25] {
            for off in [0.0, 0.35, 0.7] {
                patterns.push(OcclusionPattern::VisibleBand { offset: off, width: w });
            }
        }
        for keep in [0.01, 0.02, 0.035, 0.05, 0.07, 0.1, 0.14, 0.2, 0.3, 0.45] {
            patterns.push(OcclusionPattern::Dropout { keep });
        }
        let seed = mix_seed(self.seed, STREAM_FAMILY, 0);
        let mesh = TriangleMesh::sedan();
        postures
            .par_iter()
            .enumerate()
            .flat_map_iter(|(i, p)| {
                render_trace_family(
                    &self.sensor,
                    &mesh,
                    self.synth.ground_z,
                    std::slice::from_ref(p),
                    &patterns,
                    mix_seed(seed, i as u64, 0),
                )
            })
            .map(|t| prune_to_capability(&t, &self.capability))
            .filter(|t| !t.is_empty())
            .collect()
    }

    /// Up to `per_group` family members from every 10-point size group.
    pub fn rendered_library(&self, per_group: usize) -> Vec<AttackTrace> {
        select_per_group(
            &self.rendered_family(),
            10,
            self.capability.max_points,
            per_group,
            mix_seed(self.seed, STREAM_FAMILY, 1),
        )
    }

    /// Unpruned renderings of whole sedans near the sensor; the attack
    /// pipeline cuts each one down to exactly the capability.
    pub fn dense_traces(&self, n: usize) -> Vec<AttackTrace> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, STREAM_DENSE, i as u64));
                let posture = Posture {
                    range: rng.gen_range(6.0..=10.0),
                    azimuth_deg: rng.gen_range(-30.0..=30.0),
                    yaw: rng.gen_range(-PI..PI),
                };
                let fam = render_trace_family(
                    &self.sensor,
                    &TriangleMesh::sedan(),
                    self.synth.ground_z,
                    &[posture],
                    &[OcclusionPattern::None],
                    0,
                );
                fam.into_iter().next().expect("a sedan at 6-10 m is visible")
            })
            .collect()
    }

    /// Injects `trace` straight ahead into `frame` at a range drawn for
    /// `(stream index i)`.
    pub fn spoof_into(&self, frame: &PointCloud, trace: &AttackTrace, i: usize) -> carlo_core::Result<InjectionReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, STREAM_SPOOF, i as u64));
        let (lo, hi) = self.capability.target_distance;
        let range = rng.gen_range(lo..=hi);
        spoof_front_near(frame, &self.sensor, trace, &self.capability, &self.template, 0.0, range)
    }

    /// Detection nearest to `target` in BEV within 2 m.
    pub fn matching_detection(&self, cloud: &PointCloud, target: &Box3D) -> Option<Detection> {
        proxy_detect(cloud, &self.detector)
            .into_iter()
            .map(|d| {
                let dx = d.bbox.center.x - target.center.x;
                let dy = d.bbox.center.y - target.center.y;
                (dx * dx + dy * dy, d)
            })
            .filter(|(d2, _)| *d2 <= 4.0)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, d)| d)
    }

    fn scored(&self, cloud: PointCloud, label: Box3D, boxes: BoxSource) -> Option<ScoredScene> {
        let b = match boxes {
            BoxSource::Label => label,
            BoxSource::Detector => self.matching_detection(&cloud, &label)?.bbox,
        };
        Some(ScoredScene { cloud, boxes: vec![b] })
    }

    pub fn valid_set(&self, n: usize, boxes: BoxSource) -> Vec<ScoredScene> {
        (0..n)
            .into_par_iter()
            .filter_map(|i| {
                let v = self.valid_scene(i);
                self.scored(v.cloud, v.label, boxes)
            })
            .collect()
    }

    /// Spoofed scene `i`: trace `i mod len` injected into background `i`.
    pub fn spoofed_set(&self, traces: &[AttackTrace], n: usize, boxes: BoxSource) -> Vec<ScoredScene> {
        if traces.is_empty() {
            return Vec::new();
        }
        (0..n)
            .into_par_iter()
            .filter_map(|i| {
                let frame = self.background(i);
                let rep = self.spoof_into(&frame, &traces[i % traces.len()], i).ok()?;
                self.scored(rep.cloud, rep.target_box, boxes)
            })
            .collect()
    }
}
