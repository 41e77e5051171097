//! Kernels checked against slow, independent reimplementations.

use std::collections::BTreeSet;

use carlo_core::attack::{perturb_scale, AttackTrace, TraceSource};
use carlo_core::carlo::{fsd_ratio, lpd_ratio, CarloConfig};
use carlo_core::cloud::{Point, PointCloud, RayId, SensorModel};
use carlo_core::geometry::{bresenham3d, extract_frustum, iou3d, Box3D, VoxelGrid};
use carlo_core::harness::{a2sr, average_precision, recall_curve, Detection};
use carlo_core::math::{to_radians, wrap_deg, Vec3};
use carlo_core::mesh::{Pose, TriangleMesh};
use carlo_core::renderer::{render, PlacedMesh, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Length of `start + t·d`, t ∈ [0, 1], inside the closed box `[lo, hi]`.
fn clipped_length(start: Vec3, d: Vec3, lo: Vec3, hi: Vec3) -> f64 {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for a in 0..3 {
        if d[a] == 0.0 {
            if start[a] < lo[a] || start[a] > hi[a] {
                return 0.0;
            }
            continue;
        }
        let (u, v) = ((lo[a] - start[a]) / d[a], (hi[a] - start[a]) / d[a]);
        t0 = t0.max(u.min(v));
        t1 = t1.min(u.max(v));
    }
    ((t1 - t0) * d.norm()).max(0.0)
}

/// Every cell whose traversed length exceeds 1e-9, found by sampling the
/// segment densely and measuring each nearby cell exactly. Cells with a
/// length below `degenerate` are returned separately.
fn traversal_oracle(grid: &VoxelGrid, start: Vec3, end: Vec3, degenerate: f64) -> (BTreeSet<[usize; 3]>, BTreeSet<[usize; 3]>) {
    let d = end - start;
    let n = ((d.norm() / grid.cell_size()) * 20.0).ceil() as usize + 2;
    let dims = grid.dims();
    let mut near = BTreeSet::new();
    for i in 0..=n {
        let p = start + d * (i as f64 / n as f64);
        let q = (p - grid.min_corner()) / grid.cell_size();
        let base = [q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64];
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let c = [base[0] + dx, base[1] + dy, base[2] + dz];
                    if (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < dims[a]) {
                        near.insert([c[0] as usize, c[1] as usize, c[2] as usize]);
                    }
                }
            }
        }
    }
    let (mut solid, mut thin) = (BTreeSet::new(), BTreeSet::new());
    for c in near {
        let (lo, hi) = grid.cell_bounds(c);
        let len = clipped_length(start, d, lo, hi);
        if len > degenerate {
            solid.insert(c);
        } else if len > 0.0 {
            thin.insert(c);
        }
    }
    (solid, thin)
}

#[test]
fn voxel_traversal_matches_exact_clipping() {
    let grid = VoxelGrid::new(Vec3::ZERO, 1.0, [24, 24, 24]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    for _ in 0..1500 {
        let mut p = || Vec3::new(rng.gen_range(-4.0..28.0), rng.gen_range(-4.0..28.0), rng.gen_range(-4.0..28.0));
        let (a, b) = (p(), p());
        let got: BTreeSet<_> = bresenham3d(&grid, a, b).into_iter().collect();
        let (solid, thin) = traversal_oracle(&grid, a, b, 1e-9);
        for c in got.symmetric_difference(&solid) {
            if !thin.contains(c) {
                mismatches += 1;
            }
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn voxel_traversal_on_lattice_aligned_segments() {
    // exact diagonals through corners: no cell touched only at an edge
    let grid = VoxelGrid::new(Vec3::ZERO, 1.0, [8, 8, 8]).unwrap();
    let cells = bresenham3d(&grid, Vec3::new(0.5, 0.5, 0.5), Vec3::new(7.5, 7.5, 7.5));
    assert_eq!(cells, (0..8).map(|i| [i, i, i]).collect::<Vec<_>>());
    let along = bresenham3d(&grid, Vec3::new(0.0, 2.5, 2.5), Vec3::new(8.0, 2.5, 2.5));
    assert_eq!(along.len(), 8);
}

/// Intersection volume by sampling the BEV plane on a regular lattice.
fn raster_iou(a: &Box3D, b: &Box3D, h: f64) -> f64 {
    let (alo, ahi) = a.aabb();
    let (blo, bhi) = b.aabb();
    let (x0, x1) = (alo.x.max(blo.x), ahi.x.min(bhi.x));
    let (y0, y1) = (alo.y.max(blo.y), ahi.y.min(bhi.y));
    let zo = (ahi.z.min(bhi.z) - alo.z.max(blo.z)).max(0.0);
    let mut hits = 0usize;
    if x1 > x0 && y1 > y0 && zo > 0.0 {
        let zmid = (alo.z.max(blo.z) + ahi.z.min(bhi.z)) / 2.0;
        let nx = ((x1 - x0) / h).ceil() as usize;
        let ny = ((y1 - y0) / h).ceil() as usize;
        for i in 0..nx {
            for j in 0..ny {
                let p = Vec3::new(x0 + (i as f64 + 0.5) * h, y0 + (j as f64 + 0.5) * h, zmid);
                if a.contains(p) && b.contains(p) {
                    hits += 1;
                }
            }
        }
    }
    let inter = hits as f64 * h * h * zo;
    inter / (a.volume() + b.volume() - inter)
}

fn random_box(rng: &mut ChaCha8Rng, spread: f64) -> Box3D {
    Box3D::new(
        Vec3::new(rng.gen_range(-spread..spread), rng.gen_range(-spread..spread), rng.gen_range(-0.5..0.5)),
        rng.gen_range(0.5..4.5),
        rng.gen_range(0.5..2.5),
        rng.gen_range(0.5..2.0),
        rng.gen_range(-3.2..3.2),
    )
    .unwrap()
}

#[test]
fn iou_matches_raster_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..150 {
        let a = random_box(&mut rng, 1.5);
        let b = random_box(&mut rng, 1.5);
        let got = iou3d(&a, &b);
        let want = raster_iou(&a, &b, 0.02);
        assert!((got - want).abs() <= 0.02, "iou {got} vs raster {want} for {a:?} {b:?}");
    }
}

#[test]
fn iou_closed_forms() {
    let u = Box3D::new(Vec3::ZERO, 1.0, 1.0, 1.0, 0.0).unwrap();
    assert_eq!(iou3d(&u, &u), 1.0);
    let shifted = Box3D::new(Vec3::new(0.5, 0.0, 0.0), 1.0, 1.0, 1.0, 0.0).unwrap();
    assert!((iou3d(&u, &shifted) - 1.0 / 3.0).abs() < 1e-9);
    let far = Box3D::new(Vec3::new(5.0, 0.0, 0.0), 1.0, 1.0, 1.0, 0.0).unwrap();
    assert_eq!(iou3d(&u, &far), 0.0);
}

/// Exhaustive nearest ray in wrapped angle space.
fn nearest_ray_brute(sensor: &SensorModel, az: f64, el: f64) -> RayId {
    let mut best = (f64::INFINITY, RayId::new(0, 0));
    for ray in sensor.rays() {
        let daz = wrap_deg(az - sensor.ray_azimuth_deg(ray.azimuth_index));
        let del = el - sensor.elevations_deg()[ray.channel];
        let d2 = daz * daz + del * del;
        if d2 < best.0 {
            best = (d2, ray);
        }
    }
    best.1
}

#[test]
fn nearest_ray_matches_exhaustive_search() {
    let full = SensorModel::uniform(16, -15.0, 15.0, 1.0, -180.0, 180.0, 100.0).unwrap();
    let partial = SensorModel::uniform(8, -10.0, 4.0, 0.7, -45.0, 45.0, 100.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for sensor in [&full, &partial] {
        let (a0, a1) = (sensor.azimuth_start_deg(), sensor.azimuth_end_deg());
        let els = sensor.elevations_deg();
        for _ in 0..3000 {
            let az = rng.gen_range(a0..a1);
            let el = rng.gen_range(els[0]..els[els.len() - 1]);
            let p = Vec3::new(
                el.to_radians().cos() * az.to_radians().cos(),
                el.to_radians().cos() * az.to_radians().sin(),
                el.to_radians().sin(),
            ) * rng.gen_range(1.0..50.0);
            let s = sensor.spherical(p).unwrap();
            assert_eq!(
                sensor.nearest_ray(p).unwrap(),
                nearest_ray_brute(sensor, s.azimuth_deg, s.elevation_deg),
                "az {az} el {el}"
            );
        }
    }
}

#[test]
fn wall_render_count_matches_ray_plane_oracle() {
    let sensor = SensorModel::uniform(32, -12.0, 12.0, 0.4, -30.0, 30.0, 80.0).unwrap();
    let (d, w, h, z0) = (10.0, 4.0, 2.0, -1.0);
    // the wall's near face is at x = d - 0.05
    let scene = Scene {
        target: Some(PlacedMesh::new(TriangleMesh::wall(w, h), Pose::new(Vec3::new(d, 0.0, z0), 0.0))),
        ..Scene::default()
    };
    let r = render(&sensor, &scene);
    let face = d - 0.05;
    let mut expected = 0;
    for ray in sensor.rays() {
        let dir = sensor.ray_direction(ray).unwrap();
        if dir.x <= 0.0 {
            continue;
        }
        let t = face / dir.x;
        let (y, z) = (t * dir.y, t * dir.z);
        // skip rays within a micrometer of an edge
        let margin = 1e-6;
        let inside = y.abs() < w / 2.0 - margin && z > z0 + margin && z < z0 + h - margin;
        let outside = y.abs() > w / 2.0 + margin || z < z0 - margin || z > z0 + h + margin;
        assert!(inside || outside, "ray {ray:?} grazes the wall edge");
        if inside {
            expected += 1;
            let k = r.rays.iter().position(|&q| q == ray).expect("ray returned");
            let p = r.cloud.points[k].xyz();
            assert!((p.x - face).abs() < 1e-9);
        }
    }
    assert_eq!(r.cloud.len(), expected);
}

/// f by brute force: a cell is free when any frustum segment has positive
/// length inside it.
fn fsd_oracle(sensor: &SensorModel, cloud: &PointCloud, b: &Box3D, cell: f64) -> f64 {
    let f = extract_frustum(sensor, cloud, b).unwrap();
    let grid = VoxelGrid::covering(b, cell).unwrap();
    let cells: Vec<_> = grid.cells().filter(|&c| b.contains(grid.cell_center(c))).collect();
    let segs: Vec<(Vec3, Vec3)> = f
        .entries
        .iter()
        .map(|e| {
            let end = match e.hit {
                Some(p) => p.xyz(),
                None => sensor.ray_direction(e.ray).unwrap() * sensor.max_range(),
            };
            (sensor.origin(), end)
        })
        .collect();
    let free = cells
        .iter()
        .filter(|&&c| {
            let (lo, hi) = grid.cell_bounds(c);
            segs.iter().any(|&(s, e)| clipped_length(s, e - s, lo, hi) > 1e-9)
        })
        .count();
    free as f64 / cells.len() as f64
}

#[test]
fn fsd_matches_cell_clipping_oracle() {
    let sensor = SensorModel::uniform(32, -16.0, 4.0, 0.3, -40.0, 40.0, 60.0).unwrap();
    let car = Pose::new(Vec3::new(9.0, 0.5, -1.73), 0.3);
    let scene = Scene {
        target: Some(PlacedMesh::new(TriangleMesh::sedan(), car)),
        ground_z: Some(-1.73),
        ..Scene::default()
    };
    let cloud = render(&sensor, &scene).cloud;
    let b = Box3D::new(Vec3::new(9.0, 0.5, -1.73 + 0.78), 4.0, 1.7, 1.56, 0.3).unwrap();
    let cfg = CarloConfig::default();
    let f = fsd_ratio(&sensor, &extract_frustum(&sensor, &cloud, &b).unwrap(), &cfg).unwrap();
    assert!((f - fsd_oracle(&sensor, &cloud, &b, cfg.cell_size)).abs() < 1e-12);

    // a sparse shell at the same place: rays pass through the interior
    let sparse: PointCloud = cloud.points.iter().copied().step_by(7).collect();
    let f2 = fsd_ratio(&sensor, &extract_frustum(&sensor, &sparse, &b).unwrap(), &cfg).unwrap();
    assert!((f2 - fsd_oracle(&sensor, &sparse, &b, cfg.cell_size)).abs() < 1e-12);
    assert!(f2 > f);
}

#[test]
fn lpd_counts_returns_behind_the_box() {
    let sensor = SensorModel::uniform(16, -8.0, 8.0, 0.5, -20.0, 20.0, 80.0).unwrap();
    let b = Box3D::new(Vec3::new(10.0, 0.0, 0.0), 2.0, 2.0, 2.0, 0.0).unwrap();
    // a wall behind the box and nothing in front: every return penetrates
    let wall = Scene {
        target: Some(PlacedMesh::new(TriangleMesh::wall(20.0, 20.0), Pose::new(Vec3::new(20.0, 0.0, -10.0), 0.0))),
        ..Scene::default()
    };
    let cloud = render(&sensor, &wall).cloud;
    let f = extract_frustum(&sensor, &cloud, &b).unwrap();
    assert_eq!(lpd_ratio(&f).unwrap(), 1.0);
    let front = Scene {
        target: Some(PlacedMesh::new(TriangleMesh::wall(20.0, 20.0), Pose::new(Vec3::new(5.0, 0.0, -10.0), 0.0))),
        ..Scene::default()
    };
    let cloud = render(&sensor, &front).cloud;
    assert_eq!(lpd_ratio(&extract_frustum(&sensor, &cloud, &b).unwrap()).unwrap(), 0.0);
}

#[test]
fn ranking_metrics_match_threshold_sweeps() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        let mut truth = Vec::new();
        let mut dets = Vec::new();
        for _ in 0..5 {
            let gts: Vec<Box3D> = (0..rng.gen_range(0..4))
                .map(|k| Box3D::new(Vec3::new(10.0 * k as f64, 0.0, 0.0), 4.0, 1.6, 1.5, 0.0).unwrap())
                .collect();
            let mut ds = Vec::new();
            for g in &gts {
                if rng.gen_bool(0.8) {
                    let jitter = Vec3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.3..0.3), 0.0);
                    ds.push(Detection {
                        bbox: Box3D::new(g.center + jitter, 4.0, 1.6, 1.5, 0.0).unwrap(),
                        score: rng.gen_range(0.0..1.0),
                    });
                }
            }
            for _ in 0..rng.gen_range(0..3) {
                ds.push(Detection {
                    bbox: Box3D::new(Vec3::new(rng.gen_range(-50.0..-5.0), 5.0, 0.0), 4.0, 1.6, 1.5, 0.0).unwrap(),
                    score: rng.gen_range(0.0..1.0),
                });
            }
            truth.push(gts);
            dets.push(ds);
        }
        let n_gt: usize = truth.iter().map(Vec::len).sum();
        if n_gt == 0 {
            continue;
        }
        let iou = 0.5;
        let mut thresholds: Vec<f64> = dets.iter().flatten().map(|d| d.score).collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));

        // precision and recall keeping only detections scoring >= t
        let pr_at = |t: f64| {
            let (mut tp, mut kept) = (0usize, 0usize);
            for (ds, gts) in dets.iter().zip(&truth) {
                let mut ds: Vec<&Detection> = ds.iter().filter(|d| d.score >= t).collect();
                ds.sort_by(|a, b| b.score.total_cmp(&a.score));
                let mut used = vec![false; gts.len()];
                for d in ds {
                    kept += 1;
                    let best = (0..gts.len())
                        .filter(|&j| !used[j] && iou3d(&d.bbox, &gts[j]) >= iou)
                        .max_by(|&x, &y| iou3d(&d.bbox, &gts[x]).total_cmp(&iou3d(&d.bbox, &gts[y])));
                    if let Some(j) = best {
                        used[j] = true;
                        tp += 1;
                    }
                }
            }
            (tp as f64 / kept.max(1) as f64, tp as f64 / n_gt as f64)
        };
        let sweep: Vec<(f64, f64, f64)> = thresholds.iter().map(|&t| {
            let (p, r) = pr_at(t);
            (t, p, r)
        }).collect();

        let levels: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let ap_brute = levels
            .iter()
            .map(|&r| sweep.iter().filter(|s| s.2 >= r - 1e-12).map(|s| s.1).fold(0.0, f64::max))
            .sum::<f64>()
            / 11.0;
        assert!((average_precision(&dets, &truth, iou) - ap_brute).abs() < 1e-9);

        let scores: Vec<Option<f64>> = (0..6).map(|_| rng.gen_bool(0.8).then(|| rng.gen_range(0.0..1.0))).collect();
        let a2sr_brute = levels
            .iter()
            .map(|&r| {
                let t = sweep.iter().filter(|s| s.2 >= r - 1e-12).map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
                if t.is_finite() {
                    scores.iter().filter(|s| s.is_some_and(|s| s >= t)).count() as f64 / scores.len() as f64
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / 11.0;
        let curve = recall_curve(&dets, &truth, iou);
        assert!((a2sr(&scores, &curve).unwrap() - a2sr_brute).abs() < 1e-9);
    }
}

#[test]
fn uniform_scale_perturbation_has_expected_mean_displacement() {
    let r = 20.0;
    let eps = 0.04;
    let pts: PointCloud = (0..4000)
        .map(|i| {
            let az = to_radians(-5.0 + 10.0 * i as f64 / 4000.0);
            Point::new(r * az.cos(), r * az.sin(), 0.0, 0.5)
        })
        .collect();
    let trace = AttackTrace::new(pts, TraceSource::Rendered, r);
    let (_, mean) = perturb_scale(&trace, eps, 9).unwrap();
    let want = r * eps / 2.0;
    assert!((mean - want).abs() / want < 0.05, "mean {mean} want {want}");
}
