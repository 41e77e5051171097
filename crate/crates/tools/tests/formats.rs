use carlo_core::attack::{AttackTrace, TraceSource};
use carlo_core::cloud::{Point, PointCloud};
use carlo_core::geometry::Box3D;
use carlo_core::harness::Detection;
use carlo_core::math::Vec3;
use carlo_core::mesh::TriangleMesh;
use carlo_tools::dump::{read_detection_dump, write_detection_dump, DumpRow};
use carlo_tools::fv_io::read_score_raster;
use carlo_tools::kitti::{
    label_to_lidar_box, lidar_box_to_label, parse_calib_file, parse_label_file, write_calib_file, write_label_file,
    Calibration,
};
use carlo_tools::obj::{read_obj_mesh, write_obj_mesh};
use carlo_tools::profile::CalibrationProfile;
use carlo_tools::provenance::Provenance;
use carlo_tools::trace_io::{load_trace, save_trace, sidecar_path};
use carlo_tools::velodyne::{read_velodyne_bin, write_velodyne_bin};
use proptest::prelude::*;

fn finite_f32() -> impl Strategy<Value = f32> {
    prop::num::f32::NORMAL | prop::num::f32::ZERO | prop::num::f32::SUBNORMAL
}

fn dump_row() -> impl Strategy<Value = DumpRow> {
    (
        "[0-9a-z_]{1,10}",
        (-80.0f64..80.0, -80.0f64..80.0, -3.0f64..3.0),
        (0.1f64..10.0, 0.1f64..5.0, 0.1f64..4.0),
        -3.14f64..3.14,
        0.0f64..=1.0,
    )
        .prop_map(|(id, (x, y, z), (l, w, h), yaw, score)| DumpRow {
            frame_id: id,
            detection: Detection {
                bbox: Box3D::new(Vec3::new(x, y, z), l, w, h, yaw).unwrap(),
                score,
            },
        })
}

proptest! {
    #[test]
    fn velodyne_bytes_round_trip(vals in prop::collection::vec(finite_f32(), 0..400)) {
        let n = vals.len() / 4 * 4;
        let bytes: Vec<u8> = vals[..n].iter().flat_map(|v| v.to_le_bytes()).collect();
        let cloud = read_velodyne_bin(&bytes).unwrap();
        prop_assert_eq!(cloud.len(), n / 4);
        prop_assert_eq!(write_velodyne_bin(&cloud), bytes);
    }

    #[test]
    fn velodyne_reader_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let r = read_velodyne_bin(&bytes);
        if bytes.len() % 16 != 0 {
            prop_assert!(r.is_err());
        }
    }

    #[test]
    fn dump_rewrite_is_byte_stable(rows in prop::collection::vec(dump_row(), 0..30)) {
        let first = write_detection_dump(&rows, None);
        let parsed = read_detection_dump(&first).unwrap();
        prop_assert_eq!(parsed.len(), rows.len());
        prop_assert_eq!(write_detection_dump(&parsed, None), first);
    }

    #[test]
    fn text_readers_never_panic(text in "(?s).{0,400}") {
        let _ = read_detection_dump(&text);
        let _ = parse_label_file(&text);
        let _ = parse_calib_file(&text);
        let _ = read_obj_mesh(&text);
        let _ = read_score_raster(&text);
        let _ = CalibrationProfile::parse(&text);
    }

    #[test]
    fn mangled_dumps_fail_cleanly(rows in prop::collection::vec(dump_row(), 1..10), cut in 0usize..2000, junk in "[,a-z0-9.\\-]{0,8}") {
        let text = write_detection_dump(&rows, None);
        let cut = cut.min(text.len());
        let mut t = text[..cut].to_string();
        t.push_str(&junk);
        t.push_str(&text[cut..]);
        let _ = read_detection_dump(&t);
    }

    #[test]
    fn label_box_conversion_round_trips(x in 2.0f64..60.0, y in -20.0f64..20.0, yaw in -3.1f64..3.1) {
        let calib = Calibration::axis_permutation();
        let b = Box3D::new(Vec3::new(x, y, -0.9), 4.1, 1.7, 1.5, yaw).unwrap();
        let rec = lidar_box_to_label(&b, "Car", 0.0, 0, &calib);
        let back = label_to_lidar_box(&rec, &calib).unwrap();
        prop_assert!((back.center - b.center).norm() < 1e-9);
        let dyaw = carlo_core::math::wrap_rad(back.yaw - b.yaw);
        prop_assert!(dyaw.abs() < 1e-9);
    }
}

#[test]
fn velodyne_partial_record_reports_offset() {
    let err = read_velodyne_bin(&[0u8; 20]).unwrap_err().to_string();
    assert!(err.contains("16"), "{err}");
}

#[test]
fn velodyne_rejects_nan() {
    let mut bytes = vec![0u8; 16];
    bytes[4..8].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(read_velodyne_bin(&bytes).is_err());
}

#[test]
fn kitti_label_with_score_and_dont_care() {
    let text = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59 0.93\n\
                DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n";
    let recs = parse_label_file(text).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs[1].is_dont_care());
    let again = parse_label_file(&write_label_file(&recs)).unwrap();
    assert_eq!(again, recs);
}

#[test]
fn kitti_label_box_convention() {
    // a car straight ahead in the camera frame, facing along camera x
    let calib = Calibration::axis_permutation();
    let text = "Car 0 0 0 0 0 0 0 1.5 1.6 3.9 0.0 1.0 20.0 0.0\n";
    let rec = &parse_label_file(text).unwrap()[0];
    let b = label_to_lidar_box(rec, &calib).unwrap();
    // yaw = -ry - pi/2, centre lifted by h/2 from the bottom face
    assert!((b.yaw + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    let bottom = calib.cam_to_velo([0.0, 1.0, 20.0]).unwrap();
    assert!((b.center.z - (bottom.z + 0.75)).abs() < 1e-9);
    assert!((b.center.x - bottom.x).abs() < 1e-9);
}

#[test]
fn calib_file_round_trip() {
    let text = "P0: 7.215377e+02 0 6.095593e+02 0 0 7.215377e+02 1.728540e+02 0 0 0 1 0\n\
                P1: 1 0 0 0 0 1 0 0 0 0 1 0\n\
                P2: 1 0 0 0 0 1 0 0 0 0 1 0\n\
                P3: 1 0 0 0 0 1 0 0 0 0 1 0\n\
                R0_rect: 9.999239e-01 9.837760e-03 -7.445048e-03 -9.869795e-03 9.999421e-01 -4.278459e-03 7.402527e-03 4.351614e-03 9.999631e-01\n\
                Tr_velo_to_cam: 7.533745e-03 -9.999714e-01 -6.166020e-04 -4.069766e-03 1.480249e-02 7.280733e-04 -9.998902e-01 -7.631618e-02 9.998621e-01 7.523790e-03 1.480755e-02 -2.717806e-01\n";
    let c = parse_calib_file(text).unwrap();
    c.validate().unwrap();
    let again = parse_calib_file(&write_calib_file(&c)).unwrap();
    assert_eq!(again, c);
    let p = Vec3::new(10.0, -2.0, 0.5);
    let back = c.cam_to_velo(c.velo_to_cam(p)).unwrap();
    assert!((back - p).norm() < 1e-9);
    assert!(parse_calib_file("P0: 1 2 3\n").is_err());
}

#[test]
fn obj_quads_and_negative_indices() {
    let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\nf 1/1/1 2//2 3\n";
    let m = read_obj_mesh(text).unwrap();
    assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3], [0, 1, 2]]);
    let sedan = TriangleMesh::sedan();
    let back = read_obj_mesh(&write_obj_mesh(&sedan)).unwrap();
    assert_eq!(back.triangles, sedan.triangles);
    assert_eq!(back.vertices.len(), sedan.vertices.len());
    let err = read_obj_mesh("v 0 0 0\nf 1 2 3\n").unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn trace_sidecar_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pts: PointCloud = (0..50).map(|i| Point::new(6.0, i as f64 * 0.02, -1.0, 0.25)).collect();
    let t = AttackTrace::new(pts, TraceSource::Distant, 33.5);
    let path = dir.path().join("lib/a.bin");
    save_trace(&path, &t, Some(&Provenance::new(3, "x"))).unwrap();
    assert!(sidecar_path(&path).exists());
    let back = load_trace(&path).unwrap();
    assert_eq!(back.len(), 50);
    assert_eq!(back.meta.source, TraceSource::Distant);
    assert_eq!(back.meta.source_range, 33.5);
    // a sidecar that disagrees with the binary is a data error
    std::fs::write(&path, write_velodyne_bin(&back.points.points[..10].iter().copied().collect())).unwrap();
    assert!(load_trace(&path).is_err());
}

#[test]
fn score_raster_shape_checks() {
    let r = read_score_raster("# s\n0.1,0.2\n0.3,0.4\n").unwrap();
    assert_eq!((r.rows, r.cols), (2, 2));
    assert!(read_score_raster("0.1,0.2\n0.3\n").is_err());
    assert!(read_score_raster("0.1,abc\n").is_err());
}
