use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use crate::attack::{fit_vehicle_box, VehicleTemplate};
use crate::cloud::{Point, PointCloud};
use crate::geometry::Box3D;
use crate::math::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: Box3D,
    pub score: f64,
}

/// Density-clustering stand-in for a learned detector. It looks only at
/// where points are, never at what the lasers could have seen, so any dense
/// enough blob becomes a car.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyDetectorConfig {
    pub bev_cell: f64,
    pub min_points: usize,
    /// Point count at which the score saturates at 1.
    pub n_sat: f64,
    /// Points lower than `template.ground_z + ground_margin` are dropped.
    pub ground_margin: f64,
    /// Points higher than `template.ground_z + band_top` are dropped.
    pub band_top: f64,
    /// Clusters whose fitted box is longer than this are not vehicles.
    pub max_length: f64,
    pub template: VehicleTemplate,
}

impl Default for ProxyDetectorConfig {
    fn default() -> Self {
        Self {
            bev_cell: 0.4,
            min_points: 5,
            n_sat: 100.0,
            ground_margin: 0.2,
            band_top: 3.0,
            max_length: 8.0,
            template: VehicleTemplate::default(),
        }
    }
}

/// Ground strip → BEV occupancy → 8-connected clusters → box fit. Output
/// order follows the smallest cell of each cluster.
pub fn proxy_detect(cloud: &PointCloud, config: &ProxyDetectorConfig) -> Vec<Detection> {
    let z_lo = config.template.ground_z + config.ground_margin;
    let z_hi = config.template.ground_z + config.band_top;
    let mut cells: BTreeMap<(i64, i64), Vec<Point>> = BTreeMap::new();
    for p in cloud.iter() {
        if !(p.z >= z_lo && p.z <= z_hi) || !p.is_valid() {
            continue;
        }
        let key = (
            math::floor(p.x / config.bev_cell) as i64,
            math::floor(p.y / config.bev_cell) as i64,
        );
        cells.entry(key).or_default().push(*p);
    }

    let mut seen: BTreeSet<(i64, i64)> = BTreeSet::new();
    let mut out = Vec::new();
    for &start in cells.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut members = Vec::new();
        let mut queue = VecDeque::from([start]);
        while let Some((cx, cy)) = queue.pop_front() {
            members.extend_from_slice(&cells[&(cx, cy)]);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let n = (cx + dx, cy + dy);
                    if cells.contains_key(&n) && seen.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
        }
        if members.len() < config.min_points {
            continue;
        }
        let Some(bbox) = fit_vehicle_box(&members, &config.template, Vec3::ZERO) else {
            continue;
        };
        if bbox.length > config.max_length {
            continue;
        }
        out.push(Detection {
            bbox,
            score: (members.len() as f64 / config.n_sat).min(1.0),
        });
    }
    out
}
