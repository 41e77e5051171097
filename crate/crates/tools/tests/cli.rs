//! End-to-end runs of the `carlo` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use carlo_core::attack::{AttackTrace, TraceSource};
use carlo_core::cloud::{Point, PointCloud, RayId, SensorModel};
use carlo_core::geometry::{extract_frustum, Box3D};
use carlo_core::harness::Detection;
use carlo_core::math::Vec3;
use carlo_tools::config::SensorConfig;
use carlo_tools::dump::{read_detection_dump, write_detection_dump, DumpRow};
use carlo_tools::trace_io::{load_trace, save_trace};
use carlo_tools::velodyne::{load_velodyne, save_velodyne};

fn carlo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carlo")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn error_line(o: &Output) -> String {
    stderr(o)
        .lines()
        .find(|l| l.starts_with("carlo-error "))
        .unwrap_or_else(|| panic!("no error line in {:?}", stderr(o)))
        .to_string()
}

fn hdl64() -> SensorModel {
    SensorConfig::preset("hdl64").unwrap().model().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    let o = carlo(&["bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(error_line(&o).contains("kind=usage"));

    // no output directory anywhere
    let o = carlo(&["synth", "--frames", "1"]);
    assert_eq!(o.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = carlo(&["synth", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(error_line(&o).contains("code=1"));

    let o = carlo(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn data_errors_exit_two_with_a_parseable_line() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("d.csv");
    std::fs::write(&dump, "frame_id,x,y,z,l,w,h,yaw,score\n000000,1,2,3,4,5,6,0,1.5\n").unwrap();
    let o = carlo(&["carlo-check", "--frames", s(dir.path()), "--detections", s(&dump), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let line = error_line(&o);
    assert!(line.starts_with("carlo-error code=2 kind=data message=\""), "{line}");

    let o = carlo(&["fv", "--frame", s(&dir.path().join("missing.bin")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\nsensor = \"vlp16\"\n").unwrap();
    let out = dir.path().join("o");
    let o = carlo(&["synth", "--frames", "1", "--config", s(&cfg), "--seed", "7", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = std::fs::read_to_string(out.join("run.toml")).unwrap();
    assert!(run.contains("seed = 7"), "{run}");
    assert!(run.contains("sensor = \"vlp16\""), "{run}");
}

/// A box straight ahead and a cloud whose frustum returns sit nine in ten
/// behind the box, one in ten inside it.
fn penetration_fixture(dir: &Path) -> (PathBuf, PathBuf, f64) {
    let sensor = hdl64();
    let b = Box3D::new(Vec3::new(12.0, 0.0, -0.95), 3.9, 1.6, 1.56, 0.0).unwrap();
    let frustum = extract_frustum(&sensor, &PointCloud::default(), &b).unwrap();
    let pts: PointCloud = frustum
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let t = if i % 10 == 0 { (e.t_enter + e.t_exit) / 2.0 } else { e.t_exit + 3.0 };
            Point::from_vec(sensor.point_at(e.ray, t).unwrap(), 0.4)
        })
        .collect();
    let behind = frustum.entries.len() - frustum.entries.len().div_ceil(10);
    let g = behind as f64 / frustum.entries.len() as f64;
    save_velodyne(&dir.join("frames/000000.bin"), &pts).unwrap();
    let dump = dir.join("dets.csv");
    let rows = [DumpRow {
        frame_id: "000000".into(),
        detection: Detection { bbox: b, score: 0.9 },
    }];
    std::fs::write(&dump, write_detection_dump(&rows, None)).unwrap();
    (dir.join("frames"), dump, g)
}

const PROFILE: &str = r#"cell_size = 0.25
a = 0.8
b = 0.3
a_prime = 0.65
b_prime = 0.55
epsilon = 0.05
lpd_low = 0.6
lpd_high = 0.6
fsd_threshold = 0.55
upper_percentile = 99.5
lower_percentile = 0.5
fsd_separated = true
lpd_overlap = true
valid_set_sha256 = "0"
spoofed_set_sha256 = "0"

[samples]
f_valid = 1
f_spoofed = 1
g_valid = 1
g_spoofed = 1
"#;

#[test]
fn check_flags_penetrated_box_at_the_lpd_stage() {
    let dir = tempfile::tempdir().unwrap();
    let (frames, dump, g) = penetration_fixture(dir.path());
    assert!((g - 0.9).abs() < 0.01);
    let profile = dir.path().join("profile.toml");
    std::fs::write(&profile, PROFILE).unwrap();
    let out = dir.path().join("out");
    let o = carlo(&[
        "carlo-check",
        "--frames",
        s(&frames),
        "--detections",
        s(&dump),
        "--profile",
        s(&profile),
        "--out",
        s(&out),
        "--no-timing",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("verdicts.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# tool=carlo/"));
    assert_eq!(lines.next().unwrap(), "frame_id,box_index,label,stage,f,g,ms");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..4], &["000000", "0", "Spoofed", "LPD"]);
    assert_eq!(row[4], "");
    assert!((row[5].parse::<f64>().unwrap() - g).abs() < 1e-9);
}

/// 300 returns on distinct rays of one sensor patch, about 7 m out.
fn dense_trace(sensor: &SensorModel) -> AttackTrace {
    let k0 = sensor.azimuth_count() / 2 - 15;
    let pts: PointCloud = (20..40)
        .flat_map(|ch| (0..15).map(move |k| RayId::new(ch, k0 + k)))
        .map(|ray| Point::from_vec(sensor.point_at(ray, 7.0).unwrap(), 0.5))
        .collect();
    AttackTrace::new(pts, TraceSource::Rendered, 7.0)
}

#[test]
fn inject_cuts_a_300_point_trace_to_200() {
    let dir = tempfile::tempdir().unwrap();
    let sensor = hdl64();
    let trace = dense_trace(&sensor);
    assert_eq!(trace.len(), 300);
    save_trace(&dir.path().join("t.bin"), &trace, None).unwrap();
    save_velodyne(&dir.path().join("ds/velodyne/000000.bin"), &PointCloud::default()).unwrap();
    let range = trace.points.centroid().unwrap().norm_xy();
    let manifest = dir.path().join("inj.toml");
    std::fs::write(
        &manifest,
        format!("dataset = \"ds\"\n[[injection]]\nframe = \"000000\"\ntrace = \"t.bin\"\nrange_m = {range}\n"),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = carlo(&["inject", "--manifest", s(&manifest), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(load_trace(&out.join("traces/000000_000.bin")).unwrap().len(), 200);
    assert_eq!(load_velodyne(&out.join("velodyne/000000_000.bin")).unwrap().len(), 200);
    let targets = read_detection_dump(&std::fs::read_to_string(out.join("targets.csv")).unwrap()).unwrap();
    assert_eq!(targets.len(), 1);
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn campaign_reruns_are_byte_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("c.toml");
    std::fs::write(
        &manifest,
        "pairing = \"all\"\n[frames]\nsynthetic = 2\n[traces]\nkind = \"dense\"\ncount = 2\n",
    )
    .unwrap();
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let o = carlo(&["campaign", "--manifest", s(&manifest), "--sensor", "vlp16", "--jobs", jobs, "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a", "1"), run("b", "3"));
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), fb.len());
    assert!(fa.len() >= 5);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(&a).unwrap(), y.strip_prefix(&b).unwrap());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
        if x.extension().is_some_and(|e| e == "csv") {
            assert!(std::fs::read_to_string(x).unwrap().starts_with("# tool=carlo/"));
        }
    }
}

#[test]
fn eval_reports_ap_and_attack_rates() {
    let dir = tempfile::tempdir().unwrap();
    let car = |x: f64| Box3D::new(Vec3::new(x, 0.0, -0.9), 3.9, 1.6, 1.5, 0.0).unwrap();
    let truth = [DumpRow {
        frame_id: "a".into(),
        detection: Detection { bbox: car(20.0), score: 1.0 },
    }];
    let dets = [
        DumpRow {
            frame_id: "a".into(),
            detection: Detection { bbox: car(20.1), score: 0.8 },
        },
        DumpRow {
            frame_id: "a".into(),
            detection: Detection { bbox: car(6.0), score: 0.7 },
        },
    ];
    let targets = [DumpRow {
        frame_id: "a".into(),
        detection: Detection { bbox: car(6.2), score: 1.0 },
    }];
    for (name, rows) in [("t.csv", &truth[..]), ("d.csv", &dets[..]), ("g.csv", &targets[..])] {
        std::fs::write(dir.path().join(name), write_detection_dump(rows, None)).unwrap();
    }
    let p = |n: &str| dir.path().join(n);
    let out = p("out");
    let o = carlo(&[
        "eval",
        "--detections",
        s(&p("d.csv")),
        "--labels",
        s(&p("t.csv")),
        "--targets",
        s(&p("g.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("ap=1\n"), "{stdout}");
    assert!(stdout.contains("asr=1\n"), "{stdout}");
    // the only recall level threshold is 0.8, above the spoof's 0.7
    assert!(stdout.contains("a2sr=0\n"), "{stdout}");
}

#[test]
fn fv_exports_rasters() {
    let dir = tempfile::tempdir().unwrap();
    let sensor = hdl64();
    let cloud = dense_trace(&sensor).points;
    let frame = dir.path().join("f.bin");
    save_velodyne(&frame, &cloud).unwrap();
    let out = dir.path().join("out");
    let o = carlo(&["fv", "--frame", s(&frame), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let count = std::fs::read_to_string(out.join("fv_count.csv")).unwrap();
    let total: u64 = count
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| l.split(',').map(|v| v.parse::<u64>().unwrap()))
        .sum();
    assert_eq!(total, 300);
    let pgm = std::fs::read(out.join("fv.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));
    let header_end = pgm.windows(5).position(|w| w == b"\n255\n").unwrap() + 5;
    assert_eq!(pgm.len() - header_end, sensor.ray_count());
}
