//! KITTI object layout: `velodyne/<id>.bin`, `label_2/<id>.txt`,
//! `calib/<id>.txt`.

use std::path::{Path, PathBuf};

use carlo_core::attack::{LabeledFrame, VehicleLabel};
use carlo_core::cloud::PointCloud;

use crate::error::{read_text, write_bytes, DataError, DataResult};
use crate::kitti::{label_to_lidar_box, parse_calib_file, parse_label_file, write_calib_file, write_label_file, Calibration, LabelRecord};
use crate::velodyne::{load_velodyne, save_velodyne};

#[derive(Debug, Clone)]
pub struct KittiDataset {
    pub root: PathBuf,
    pub ids: Vec<String>,
}

/// Sorted stems of files with extension `ext` directly in `dir`.
pub fn list_ids(dir: &Path, ext: &str) -> DataResult<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut ids = Vec::new();
    for e in entries {
        let p = e
            .map_err(|source| DataError::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .path();
        if p.extension().is_some_and(|x| x == ext) {
            if let Some(stem) = p.file_stem() {
                ids.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

impl KittiDataset {
    pub fn open(root: &Path) -> DataResult<Self> {
        Ok(Self {
            root: root.to_path_buf(),
            ids: list_ids(&root.join("velodyne"), "bin")?,
        })
    }

    pub fn velodyne_path(&self, id: &str) -> PathBuf {
        self.root.join("velodyne").join(format!("{id}.bin"))
    }

    pub fn cloud(&self, id: &str) -> DataResult<PointCloud> {
        load_velodyne(&self.velodyne_path(id))
    }

    pub fn labels(&self, id: &str) -> DataResult<Vec<LabelRecord>> {
        let p = self.root.join("label_2").join(format!("{id}.txt"));
        parse_label_file(&read_text(&p)?).map_err(|e| DataError::invalid(format!("{}: {e}", p.display())))
    }

    pub fn calib(&self, id: &str) -> DataResult<Calibration> {
        let p = self.root.join("calib").join(format!("{id}.txt"));
        parse_calib_file(&read_text(&p)?).map_err(|e| DataError::invalid(format!("{}: {e}", p.display())))
    }

    /// Labels in the LiDAR frame, DontCare rows dropped.
    pub fn labeled_frame(&self, id: &str) -> DataResult<LabeledFrame> {
        let calib = self.calib(id)?;
        let labels = self
            .labels(id)?
            .iter()
            .filter(|r| !r.is_dont_care())
            .map(|r| {
                Ok(VehicleLabel {
                    object_type: r.object_type.clone(),
                    truncated: r.truncated,
                    occluded: r.occluded.max(0) as u8,
                    bbox: label_to_lidar_box(r, &calib).map_err(|e| DataError::invalid(format!("{id}: {e}")))?,
                })
            })
            .collect::<DataResult<Vec<_>>>()?;
        Ok(LabeledFrame {
            frame_id: id.to_string(),
            labels,
        })
    }
}

pub fn write_frame(root: &Path, id: &str, cloud: &PointCloud, labels: &[LabelRecord], calib: &Calibration) -> DataResult<()> {
    save_velodyne(&root.join("velodyne").join(format!("{id}.bin")), cloud)?;
    write_bytes(&root.join("label_2").join(format!("{id}.txt")), write_label_file(labels).as_bytes())?;
    write_bytes(&root.join("calib").join(format!("{id}.txt")), write_calib_file(calib).as_bytes())
}
