//! KITTI velodyne scans: little-endian `f32` quadruples `(x, y, z, r)`, no
//! header. Values widen to `f64` in memory and narrow back exactly, so a
//! read/write cycle reproduces the input bytes.

use std::path::Path;

use carlo_core::cloud::{Point, PointCloud};

use crate::error::{read_bytes, write_bytes, DataError, DataResult};

const RECORD: usize = 16;

pub fn read_velodyne_bin(bytes: &[u8]) -> DataResult<PointCloud> {
    if bytes.len() % RECORD != 0 {
        return Err(DataError::Malformed {
            kind: "velodyne scan",
            offset: bytes.len() - bytes.len() % RECORD,
            msg: format!("trailing partial record of {} bytes", bytes.len() % RECORD),
        });
    }
    let mut points = Vec::with_capacity(bytes.len() / RECORD);
    for (i, rec) in bytes.chunks_exact(RECORD).enumerate() {
        let mut v = [0f64; 4];
        for (k, field) in rec.chunks_exact(4).enumerate() {
            let x = f32::from_le_bytes(field.try_into().expect("4-byte chunk"));
            if !x.is_finite() {
                return Err(DataError::Malformed {
                    kind: "velodyne scan",
                    offset: i * RECORD + 4 * k,
                    msg: format!("non-finite value {x}"),
                });
            }
            v[k] = x as f64;
        }
        points.push(Point::new(v[0], v[1], v[2], v[3]));
    }
    Ok(PointCloud::new(points))
}

/// Coordinates are narrowed to `f32`.
pub fn write_velodyne_bin(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * RECORD);
    for p in cloud.iter() {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Reads a scan; the frame id is the file stem.
pub fn load_velodyne(path: &Path) -> DataResult<PointCloud> {
    let cloud = read_velodyne_bin(&read_bytes(path)?)?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(cloud.with_frame_id(id))
}

pub fn save_velodyne(path: &Path, cloud: &PointCloud) -> DataResult<()> {
    write_bytes(path, &write_velodyne_bin(cloud))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record() {
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let c = read_velodyne_bin(&bytes).unwrap();
        assert_eq!(c.points, vec![Point::new(1.0, 2.0, 3.0, 0.5)]);
        assert_eq!(write_velodyne_bin(&c), bytes);
    }

    #[test]
    fn empty_and_partial() {
        assert!(read_velodyne_bin(&[]).unwrap().is_empty());
        assert!(write_velodyne_bin(&PointCloud::default()).is_empty());
        match read_velodyne_bin(&[0u8; 20]) {
            Err(DataError::Malformed { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_finite_offset() {
        let mut bytes = vec![0u8; 32];
        bytes[24..28].copy_from_slice(&f32::NAN.to_le_bytes());
        match read_velodyne_bin(&bytes) {
            Err(DataError::Malformed { offset, .. }) => assert_eq!(offset, 24),
            other => panic!("{other:?}"),
        }
    }
}
