//! KITTI object labels and calibration files, and the mapping between
//! camera-frame labels and LiDAR-frame boxes.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use carlo_core::geometry::Box3D;
use carlo_core::math::{wrap_rad, Vec3};

use crate::error::{DataError, DataResult};

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub object_type: String,
    pub truncated: f64,
    /// 0..=3 for real objects; DontCare rows carry -1.
    pub occluded: i8,
    pub alpha: f64,
    pub bbox2d: [f64; 4],
    /// Height, width, length in meters.
    pub dims_hwl: [f64; 3],
    /// Bottom center in the rectified camera frame.
    pub location_cam: [f64; 3],
    pub rotation_y: f64,
}

impl LabelRecord {
    pub fn is_dont_care(&self) -> bool {
        self.object_type == "DontCare"
    }
}

fn num(tok: &str, line: usize, field: &str) -> DataResult<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| DataError::parse("label", line, format!("field {field}: cannot parse {tok:?}")))?;
    if !v.is_finite() {
        return Err(DataError::parse("label", line, format!("field {field}: non-finite")));
    }
    Ok(v)
}

/// One record per non-blank line. A 16th column (detector score) is
/// accepted and dropped.
pub fn parse_label_file(text: &str) -> DataResult<Vec<LabelRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let tok: Vec<&str> = raw.split_whitespace().collect();
        if tok.is_empty() {
            continue;
        }
        if tok.len() != 15 && tok.len() != 16 {
            return Err(DataError::parse("label", line, format!("expected 15 or 16 fields, found {}", tok.len())));
        }
        let f = |k: usize, name: &str| num(tok[k], line, name);
        let occ = f(2, "occluded")?;
        if occ.fract() != 0.0 || !(-1.0..=3.0).contains(&occ) {
            return Err(DataError::parse("label", line, format!("occluded must be an integer in 0..=3, got {occ}")));
        }
        let rec = LabelRecord {
            object_type: tok[0].to_string(),
            truncated: f(1, "truncated")?,
            occluded: occ as i8,
            alpha: f(3, "alpha")?,
            bbox2d: [f(4, "bbox")?, f(5, "bbox")?, f(6, "bbox")?, f(7, "bbox")?],
            dims_hwl: [f(8, "height")?, f(9, "width")?, f(10, "length")?],
            location_cam: [f(11, "x")?, f(12, "y")?, f(13, "z")?],
            rotation_y: f(14, "rotation_y")?,
        };
        if !rec.is_dont_care() {
            if rec.occluded < 0 {
                return Err(DataError::parse("label", line, "occluded must be in 0..=3"));
            }
            if rec.dims_hwl.iter().any(|&d| d < 0.0) {
                return Err(DataError::parse("label", line, "dimensions must be non-negative"));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_label_file(records: &[LabelRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = write!(s, "{} {} {} {}", r.object_type, r.truncated, r.occluded, r.alpha);
        for v in r.bbox2d.iter().chain(&r.dims_hwl).chain(&r.location_cam) {
            let _ = write!(s, " {v}");
        }
        let _ = writeln!(s, " {}", r.rotation_y);
    }
    s
}

type Mat3 = [[f64; 3]; 3];

fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

fn inverse(m: &Mat3) -> Option<Mat3> {
    let c = |r: usize, k: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (k1, k2) = ((k + 1) % 3, (k + 2) % 3);
        m[r1][k1] * m[r2][k2] - m[r1][k2] * m[r2][k1]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    if !det.is_finite() || det.abs() < 1e-12 {
        return None;
    }
    Some(std::array::from_fn(|i| std::array::from_fn(|j| c(j, i) / det)))
}

fn orthonormal(m: &Mat3, tol: f64) -> bool {
    (0..3).all(|i| {
        (0..3).all(|j| {
            let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
            (dot - if i == j { 1.0 } else { 0.0 }).abs() <= tol
        })
    })
}

/// Rectification and LiDAR-to-camera transform of one frame. Projection
/// matrices and other keys are carried through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub r0_rect: Mat3,
    /// Row-major 3×4 `[R | t]`.
    pub tr_velo_to_cam: [[f64; 4]; 3],
    /// Every other key in file order (P0..P3, Tr_imu_to_velo, …).
    pub extra: Vec<(String, Vec<f64>)>,
}

pub const ORTHONORMAL_TOL: f64 = 1e-3;

impl Calibration {
    /// The usual KITTI axis permutation (camera x right, y down, z forward)
    /// with no offset, identity rectification and typical projections.
    pub fn axis_permutation() -> Self {
        let p = vec![721.5377, 0.0, 609.5593, 0.0, 0.0, 721.5377, 172.854, 0.0, 0.0, 0.0, 1.0, 0.0];
        Self {
            r0_rect: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            tr_velo_to_cam: [[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [1.0, 0.0, 0.0, 0.0]],
            extra: (0..4).map(|i| (format!("P{i}"), p.clone())).collect(),
        }
    }

    fn velo_rotation(&self) -> Mat3 {
        std::array::from_fn(|i| std::array::from_fn(|j| self.tr_velo_to_cam[i][j]))
    }

    fn velo_translation(&self) -> [f64; 3] {
        std::array::from_fn(|i| self.tr_velo_to_cam[i][3])
    }

    pub fn validate(&self) -> DataResult<()> {
        if !orthonormal(&self.r0_rect, ORTHONORMAL_TOL) {
            return Err(DataError::invalid("R0_rect is not orthonormal within 1e-3"));
        }
        if !orthonormal(&self.velo_rotation(), ORTHONORMAL_TOL) {
            return Err(DataError::invalid("Tr_velo_to_cam rotation is not orthonormal within 1e-3"));
        }
        Ok(())
    }

    /// LiDAR point to rectified camera coordinates.
    pub fn velo_to_cam(&self, p: Vec3) -> [f64; 3] {
        let r = mat_vec(&self.velo_rotation(), p.to_array());
        let t = self.velo_translation();
        mat_vec(&self.r0_rect, [r[0] + t[0], r[1] + t[1], r[2] + t[2]])
    }

    pub fn cam_to_velo(&self, c: [f64; 3]) -> DataResult<Vec3> {
        let singular = || DataError::invalid("singular calibration");
        let r0_inv = inverse(&self.r0_rect).ok_or_else(singular)?;
        let rv_inv = inverse(&self.velo_rotation()).ok_or_else(singular)?;
        let u = mat_vec(&r0_inv, c);
        let t = self.velo_translation();
        Ok(Vec3::from_array(mat_vec(&rv_inv, [u[0] - t[0], u[1] - t[1], u[2] - t[2]])))
    }
}

pub fn parse_calib_file(text: &str) -> DataResult<Calibration> {
    let mut r0 = None;
    let mut tr = None;
    let mut extra = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (key, rest) = raw
            .split_once(':')
            .ok_or_else(|| DataError::parse("calib", line, "expected `KEY: values`"))?;
        let key = key.trim();
        let vals = rest
            .split_whitespace()
            .map(|t| match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(DataError::parse("calib", line, format!("{key}: cannot parse {t:?}"))),
            })
            .collect::<DataResult<Vec<f64>>>()?;
        let want = |n: usize| {
            if vals.len() == n {
                Ok(())
            } else {
                Err(DataError::parse("calib", line, format!("{key}: expected {n} values, found {}", vals.len())))
            }
        };
        match key {
            "R0_rect" | "R_rect" => {
                want(9)?;
                r0 = Some(std::array::from_fn(|r| std::array::from_fn(|c| vals[3 * r + c])));
            }
            "Tr_velo_to_cam" | "Tr_velo_cam" => {
                want(12)?;
                tr = Some(std::array::from_fn(|r| std::array::from_fn(|c| vals[4 * r + c])));
            }
            "P0" | "P1" | "P2" | "P3" => {
                want(12)?;
                extra.push((key.to_string(), vals));
            }
            _ => extra.push((key.to_string(), vals)),
        }
    }
    let calib = Calibration {
        r0_rect: r0.ok_or_else(|| DataError::invalid("calib: missing R0_rect"))?,
        tr_velo_to_cam: tr.ok_or_else(|| DataError::invalid("calib: missing Tr_velo_to_cam"))?,
        extra,
    };
    calib.validate()?;
    Ok(calib)
}

pub fn write_calib_file(c: &Calibration) -> String {
    let mut s = String::new();
    let row = |s: &mut String, key: &str, vals: &mut dyn Iterator<Item = f64>| {
        let _ = write!(s, "{key}:");
        for v in vals {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    };
    let (projections, others): (Vec<_>, Vec<_>) = c.extra.iter().partition(|(k, _)| k.starts_with('P'));
    for (k, v) in &projections {
        row(&mut s, k, &mut v.iter().copied());
    }
    row(&mut s, "R0_rect", &mut c.r0_rect.iter().flatten().copied());
    row(&mut s, "Tr_velo_to_cam", &mut c.tr_velo_to_cam.iter().flatten().copied());
    for (k, v) in &others {
        row(&mut s, k, &mut v.iter().copied());
    }
    s
}

/// Camera-frame label to LiDAR-frame box: the bottom center is mapped back
/// through rectification and the extrinsics, lifted by half the height, and
/// the heading becomes `−rotation_y − π/2`.
pub fn label_to_lidar_box(rec: &LabelRecord, calib: &Calibration) -> DataResult<Box3D> {
    let [h, w, l] = rec.dims_hwl;
    let bottom = calib.cam_to_velo(rec.location_cam)?;
    let center = bottom + Vec3::new(0.0, 0.0, h / 2.0);
    Ok(Box3D::new(center, l, w, h, wrap_rad(-rec.rotation_y - FRAC_PI_2))?)
}

/// Inverse of [`label_to_lidar_box`]. The 2D box is not projected and is
/// written as zeros.
pub fn lidar_box_to_label(
    b: &Box3D,
    object_type: &str,
    truncated: f64,
    occluded: i8,
    calib: &Calibration,
) -> LabelRecord {
    let bottom = b.center - Vec3::new(0.0, 0.0, b.height / 2.0);
    let loc = calib.velo_to_cam(bottom);
    let ry = wrap_rad(-b.yaw - FRAC_PI_2);
    let alpha = wrap_rad(ry - loc[0].atan2(loc[2]));
    LabelRecord {
        object_type: object_type.to_string(),
        truncated,
        occluded,
        alpha,
        bbox2d: [0.0; 4],
        dims_hwl: [b.height, b.width, b.length],
        location_cam: loc,
        rotation_y: if ry == -PI { PI } else { ry },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAR: &str = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.5 1.6 3.9 1.00 1.60 10.0 -1.59\n";

    #[test]
    fn canonical_line() {
        let r = &parse_label_file(CAR).unwrap()[0];
        assert_eq!(r.object_type, "Car");
        assert_eq!(r.dims_hwl, [1.5, 1.6, 3.9]);
        assert_eq!(r.location_cam, [1.0, 1.6, 10.0]);
        assert_eq!(parse_label_file(&write_label_file(std::slice::from_ref(r))).unwrap()[0], *r);
    }

    #[test]
    fn score_column_and_dont_care() {
        let text = format!(
            "{} 0.93\nDontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n",
            CAR.trim_end()
        );
        let v = parse_label_file(&text).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v[1].is_dont_care());
        assert!(parse_label_file("").unwrap().is_empty());
    }

    #[test]
    fn wrong_field_count_has_line() {
        let text = format!("{CAR}Car 0 0 0 1 2 3\n");
        match parse_label_file(&text) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn origin_label_lifts_by_half_height() {
        let rec = LabelRecord {
            object_type: "Car".into(),
            truncated: 0.0,
            occluded: 0,
            alpha: 0.0,
            bbox2d: [0.0; 4],
            dims_hwl: [1.5, 1.6, 3.9],
            location_cam: [0.0, 0.0, 0.0],
            rotation_y: -FRAC_PI_2,
        };
        let b = label_to_lidar_box(&rec, &Calibration::axis_permutation()).unwrap();
        assert_eq!(b.center, Vec3::new(0.0, 0.0, 0.75));
        assert_eq!((b.length, b.width, b.height), (3.9, 1.6, 1.5));
        assert!(b.yaw.abs() < 1e-12);
    }

    #[test]
    fn calib_round_trip_and_checks() {
        let c = Calibration::axis_permutation();
        assert_eq!(parse_calib_file(&write_calib_file(&c)).unwrap(), c);
        let bad = write_calib_file(&c).replace("R0_rect: 1 0 0", "R0_rect: 2 0 0");
        assert!(parse_calib_file(&bad).is_err());
        assert!(parse_calib_file("P0: 1 2 3\n").is_err());
    }
}
