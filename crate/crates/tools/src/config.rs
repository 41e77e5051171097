//! Sensor presets and the run configuration shared by every subcommand.
//! Values merge as defaults, then the `--config` file, then flags.

use std::path::{Path, PathBuf};

use carlo_core::attack::{AttackCapability, VehicleTemplate};
use carlo_core::carlo::CarloConfig;
use carlo_core::cloud::SensorModel;
use carlo_core::harness::{ProxyDetectorConfig, SuccessMode, SuccessRule};
use carlo_core::math::Vec3;
use carlo_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::{read_text, DataError, DataResult};
use crate::provenance::Provenance;

/// Sensor description as stored in preset files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub channels: usize,
    pub elevations_deg: Vec<f64>,
    pub azimuth_step_deg: f64,
    pub azimuth_span_deg: f64,
    pub max_range_m: f64,
    /// First firing azimuth. Defaults to −180° for a full sweep and to
    /// −span/2 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub azimuth_start_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[f64; 3]>,
}

pub const PRESETS: [(&str, &str); 2] = [
    ("hdl64", include_str!("../presets/hdl64.toml")),
    ("vlp16", include_str!("../presets/vlp16.toml")),
];

impl SensorConfig {
    pub fn parse(text: &str) -> DataResult<Self> {
        toml::from_str(text).map_err(|e| DataError::invalid(format!("sensor config: {e}")))
    }

    pub fn preset(name: &str) -> Option<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::parse(text).expect("bundled preset parses"))
    }

    /// A bundled preset name or a path to a sensor file.
    pub fn resolve(spec: &str) -> DataResult<Self> {
        match Self::preset(spec) {
            Some(s) => Ok(s),
            None => Self::parse(&read_text(Path::new(spec))?),
        }
    }

    pub fn model(&self) -> DataResult<SensorModel> {
        if self.channels != self.elevations_deg.len() {
            return Err(DataError::invalid(format!(
                "sensor config: channels = {} but {} elevations listed",
                self.channels,
                self.elevations_deg.len()
            )));
        }
        let start = self.azimuth_start_deg.unwrap_or(if self.azimuth_span_deg >= 360.0 {
            -180.0
        } else {
            -self.azimuth_span_deg / 2.0
        });
        let origin = self.origin.map(Vec3::from_array).unwrap_or(Vec3::ZERO);
        Ok(SensorModel::new(
            origin,
            self.elevations_deg.clone(),
            self.azimuth_step_deg,
            start,
            start + self.azimuth_span_deg,
            self.max_range_m,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapabilityConfig {
    pub max_points: usize,
    pub azimuth_window_deg: f64,
    pub target_distance_m: [f64; 2],
}

impl Default for CapabilityConfig {
    fn default() -> Self {
        let c = AttackCapability::default();
        Self {
            max_points: c.max_points,
            azimuth_window_deg: c.azimuth_window_deg,
            target_distance_m: [c.target_distance.0, c.target_distance.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateConfig {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub ground_z: f64,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        let t = VehicleTemplate::default();
        Self {
            length: t.length,
            width: t.width,
            height: t.height,
            ground_z: t.ground_z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub bev_cell: f64,
    pub min_points: usize,
    pub n_sat: f64,
    pub ground_margin: f64,
    pub band_top: f64,
    pub max_length: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        let d = ProxyDetectorConfig::default();
        Self {
            bev_cell: d.bev_cell,
            min_points: d.min_points,
            n_sat: d.n_sat,
            ground_margin: d.ground_margin,
            band_top: d.band_top,
            max_length: d.max_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseConfig {
    pub cell_size: f64,
    pub epsilon: f64,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        let c = CarloConfig::default();
        Self {
            cell_size: c.cell_size,
            epsilon: c.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    /// `center` (BEV center distance in meters) or `iou` (3D IoU).
    pub mode: String,
    pub value: f64,
    pub score_threshold: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            mode: "center".into(),
            value: 1.0,
            score_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneGenConfig {
    pub vehicles_min: usize,
    pub vehicles_max: usize,
    pub range_noise_m: f64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            vehicles_min: 3,
            vehicles_max: 8,
            range_noise_m: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled preset name or path to a sensor file.
    pub sensor: String,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub capability: CapabilityConfig,
    pub template: TemplateConfig,
    pub detector: DetectorConfig,
    pub carlo: DefenseConfig,
    pub rule: RuleConfig,
    pub synth: SceneGenConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sensor: "hdl64".into(),
            seed: 0,
            jobs: 0,
            out: None,
            capability: CapabilityConfig::default(),
            template: TemplateConfig::default(),
            detector: DetectorConfig::default(),
            carlo: DefenseConfig::default(),
            rule: RuleConfig::default(),
            synth: SceneGenConfig::default(),
        }
    }
}

/// Command-line values that override the configuration file.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub sensor: Option<String>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("config: {e}"))
    }

    pub fn merged(file: Option<&str>, flags: &FlagOverrides) -> Result<Self, String> {
        let mut cfg = match file {
            Some(text) => Self::parse(text)?,
            None => Self::default(),
        };
        if let Some(s) = &flags.sensor {
            cfg.sensor = s.clone();
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(j) = flags.jobs {
            cfg.jobs = j;
        }
        if let Some(o) = &flags.out {
            cfg.out = Some(o.clone());
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), String> {
        self.capability().validate().map_err(|e| e.to_string())?;
        self.rule()?.validate().map_err(|e| e.to_string())?;
        self.carlo_base().map_err(|e| e.to_string())?;
        let d = &self.detector;
        if !(d.bev_cell > 0.0 && d.n_sat > 0.0 && d.band_top > d.ground_margin && d.max_length > 0.0) {
            return Err("detector: cell, n_sat and max_length must be positive and band_top above ground_margin".into());
        }
        let t = &self.template;
        if !(t.length > 0.0 && t.width > 0.0 && t.height > 0.0 && t.ground_z.is_finite()) {
            return Err("template: dimensions must be positive".into());
        }
        if self.synth.vehicles_min > self.synth.vehicles_max || !(self.synth.range_noise_m >= 0.0) {
            return Err("synth: need vehicles_min <= vehicles_max and range_noise_m >= 0".into());
        }
        Ok(())
    }

    /// Hash input: everything that can change results. Output location and
    /// thread count are left out.
    pub fn canonical_text(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.jobs = 0;
        toml::to_string(&c).expect("config serializes")
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::new(self.seed, &self.canonical_text())
    }

    pub fn sensor_model(&self) -> DataResult<SensorModel> {
        SensorConfig::resolve(&self.sensor)?.model()
    }

    pub fn capability(&self) -> AttackCapability {
        let c = &self.capability;
        AttackCapability {
            max_points: c.max_points,
            azimuth_window_deg: c.azimuth_window_deg,
            target_distance: (c.target_distance_m[0], c.target_distance_m[1]),
        }
    }

    pub fn template(&self) -> VehicleTemplate {
        let t = &self.template;
        VehicleTemplate {
            length: t.length,
            width: t.width,
            height: t.height,
            ground_z: t.ground_z,
        }
    }

    pub fn detector(&self) -> ProxyDetectorConfig {
        let d = &self.detector;
        ProxyDetectorConfig {
            bev_cell: d.bev_cell,
            min_points: d.min_points,
            n_sat: d.n_sat,
            ground_margin: d.ground_margin,
            band_top: d.band_top,
            max_length: d.max_length,
            template: self.template(),
        }
    }

    /// Uncalibrated defense settings (cell size and margin only).
    pub fn carlo_base(&self) -> carlo_core::Result<CarloConfig> {
        let c = CarloConfig {
            cell_size: self.carlo.cell_size,
            epsilon: self.carlo.epsilon,
            ..CarloConfig::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn rule(&self) -> Result<SuccessRule, String> {
        let mode = match self.rule.mode.as_str() {
            "center" => SuccessMode::CenterDistance(self.rule.value),
            "iou" => SuccessMode::Iou(self.rule.value),
            other => return Err(format!("rule.mode must be `center` or `iou`, got {other:?}")),
        };
        Ok(SuccessRule {
            mode,
            score_threshold: self.rule.score_threshold,
        })
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            ground_z: self.template.ground_z,
            vehicles: (self.synth.vehicles_min, self.synth.vehicles_max),
            range_noise_m: self.synth.range_noise_m,
            ..SynthConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build() {
        let s = SensorConfig::preset("hdl64").unwrap().model().unwrap();
        assert_eq!(s.channels(), 64);
        assert_eq!(s.azimuth_count(), 2000);
        assert_eq!(s.elevations_deg()[0], -24.9);
        let v = SensorConfig::preset("vlp16").unwrap().model().unwrap();
        assert_eq!(v.ray_count(), 16 * 1800);
    }

    #[test]
    fn merge_order() {
        let flags = FlagOverrides {
            seed: Some(9),
            ..Default::default()
        };
        let c = RunConfig::merged(Some("seed = 3\nsensor = \"vlp16\"\n[capability]\nmax_points = 100\n"), &flags).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.sensor, "vlp16");
        assert_eq!(c.capability.max_points, 100);
        assert_eq!(c.capability.azimuth_window_deg, 10.0);
        assert!(RunConfig::merged(Some("bogus = 1\n"), &flags).is_err());
        assert!(RunConfig::merged(Some("[capability]\nmax_points = 0\n"), &flags).is_err());
    }

    #[test]
    fn hash_ignores_jobs_and_out() {
        let a = RunConfig::default();
        let b = RunConfig {
            jobs: 7,
            out: Some("x".into()),
            ..RunConfig::default()
        };
        assert_eq!(a.provenance(), b.provenance());
        let c = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_ne!(a.provenance().config_hash, c.provenance().config_hash);
    }
}
