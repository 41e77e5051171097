//! Persisted CARLO calibration.

use carlo_core::carlo::{Calibration, CarloConfig, RatioDistributions, LOWER_PERCENTILE, UPPER_PERCENTILE};
use serde::{Deserialize, Serialize};

use crate::error::{read_text, DataError, DataResult};
use crate::provenance::Provenance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCounts {
    pub f_valid: usize,
    pub f_spoofed: usize,
    pub g_valid: usize,
    pub g_spoofed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationProfile {
    pub cell_size: f64,
    /// Lower percentile of spoofed f.
    pub a: f64,
    /// Upper percentile of valid f.
    pub b: f64,
    pub a_prime: f64,
    pub b_prime: f64,
    pub epsilon: f64,
    pub lpd_low: f64,
    pub lpd_high: f64,
    pub fsd_threshold: f64,
    pub upper_percentile: f64,
    pub lower_percentile: f64,
    pub fsd_separated: bool,
    pub lpd_overlap: bool,
    pub samples: SampleCounts,
    pub valid_set_sha256: String,
    pub spoofed_set_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl CalibrationProfile {
    pub fn new(
        cal: &Calibration,
        d: &RatioDistributions,
        valid_set_sha256: String,
        spoofed_set_sha256: String,
        provenance: Option<Provenance>,
    ) -> Self {
        Self {
            cell_size: cal.config.cell_size,
            a: cal.a,
            b: cal.b,
            a_prime: cal.a_prime,
            b_prime: cal.b_prime,
            epsilon: cal.config.epsilon,
            lpd_low: cal.config.lpd_low,
            lpd_high: cal.config.lpd_high,
            fsd_threshold: cal.config.fsd_threshold,
            upper_percentile: UPPER_PERCENTILE,
            lower_percentile: LOWER_PERCENTILE,
            fsd_separated: cal.fsd_separated,
            lpd_overlap: cal.lpd_overlap,
            samples: SampleCounts {
                f_valid: d.f_valid.len(),
                f_spoofed: d.f_spoofed.len(),
                g_valid: d.g_valid.len(),
                g_spoofed: d.g_spoofed.len(),
            },
            valid_set_sha256,
            spoofed_set_sha256,
            provenance,
        }
    }

    pub fn carlo_config(&self) -> DataResult<CarloConfig> {
        let c = CarloConfig {
            cell_size: self.cell_size,
            lpd_low: self.lpd_low,
            lpd_high: self.lpd_high,
            fsd_threshold: self.fsd_threshold,
            epsilon: self.epsilon,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn parse(text: &str) -> DataResult<Self> {
        let p: Self = toml::from_str(text).map_err(|e| DataError::invalid(format!("profile: {e}")))?;
        p.carlo_config()?;
        Ok(p)
    }

    pub fn load(path: &std::path::Path) -> DataResult<Self> {
        Self::parse(&read_text(path)?).map_err(|e| DataError::invalid(format!("{}: {e}", path.display())))
    }
}
