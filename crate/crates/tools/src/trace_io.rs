//! Attack traces on disk: a velodyne-format `.bin` plus a `.meta.toml`
//! sidecar with the source kind, point count, azimuth extent and original
//! range.

use std::path::{Path, PathBuf};

use carlo_core::attack::{AttackTrace, TraceSource};
use serde::{Deserialize, Serialize};

use crate::error::{read_text, write_bytes, DataError, DataResult};
use crate::provenance::Provenance;
use crate::velodyne::{load_velodyne, save_velodyne};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetaFile {
    pub source: String,
    pub point_count: usize,
    pub azimuth_extent_deg: f64,
    pub source_range_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

pub fn sidecar_path(bin: &Path) -> PathBuf {
    let stem = bin.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    bin.with_file_name(format!("{stem}.meta.toml"))
}

pub fn save_trace(bin: &Path, trace: &AttackTrace, prov: Option<&Provenance>) -> DataResult<()> {
    save_velodyne(bin, &trace.points)?;
    let meta = TraceMetaFile {
        source: trace.meta.source.as_str().to_string(),
        point_count: trace.meta.point_count,
        azimuth_extent_deg: trace.meta.azimuth_extent_deg,
        source_range_m: trace.meta.source_range,
        provenance: prov.cloned(),
    };
    let text = toml::to_string(&meta).map_err(|e| DataError::invalid(e.to_string()))?;
    write_bytes(&sidecar_path(bin), text.as_bytes())
}

/// Loads a trace. The azimuth extent is recomputed from the stored points
/// (they were narrowed to `f32`); the point count must match the sidecar.
pub fn load_trace(bin: &Path) -> DataResult<AttackTrace> {
    let points = load_velodyne(bin)?;
    let meta_path = sidecar_path(bin);
    let meta: TraceMetaFile = toml::from_str(&read_text(&meta_path)?)
        .map_err(|e| DataError::invalid(format!("{}: {e}", meta_path.display())))?;
    let source = TraceSource::parse(&meta.source)
        .ok_or_else(|| DataError::invalid(format!("{}: unknown source {:?}", meta_path.display(), meta.source)))?;
    if meta.point_count != points.len() {
        return Err(DataError::invalid(format!(
            "{}: sidecar says {} points, scan has {}",
            meta_path.display(),
            meta.point_count,
            points.len()
        )));
    }
    if !meta.source_range_m.is_finite() {
        return Err(DataError::invalid(format!("{}: non-finite source range", meta_path.display())));
    }
    Ok(AttackTrace::new(points, source, meta.source_range_m))
}

/// Every `*.bin` with a sidecar under `dir`, recursively, in path order.
pub fn find_traces(dir: &Path) -> DataResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|source| DataError::Io { path: d.clone(), source })?;
        for e in entries {
            let p = e.map_err(|source| DataError::Io { path: d.clone(), source })?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "bin") && sidecar_path(&p).exists() {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}
