//! Front-view (range image) projection.
//!
//! Pixel indices are measured from a configured angular origin so they start
//! at zero. Azimuth offsets wrap into `[0°, 360°)`; points whose indices fall
//! outside the lattice are left out of the image.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec::Vec;

use crate::cloud::{to_spherical, Point, PointCloud, SensorModel};
use crate::math;
use crate::{Error, Result};

/// Guards floor() against angles that sit exactly on a pixel edge but come
/// out a hair low after the division.
const EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FvConfig {
    pub azimuth_step_deg: f64,
    pub elevation_step_deg: f64,
    pub azimuth_origin_deg: f64,
    pub elevation_origin_deg: f64,
    pub rows: usize,
    pub cols: usize,
}

impl FvConfig {
    /// Lattice covering `[az0, az0 + az_span) × [el0, el0 + el_span)`.
    pub fn new(
        azimuth_step_deg: f64,
        elevation_step_deg: f64,
        azimuth_origin_deg: f64,
        elevation_origin_deg: f64,
        azimuth_span_deg: f64,
        elevation_span_deg: f64,
    ) -> Result<Self> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(azimuth_step_deg) && ok(elevation_step_deg) && ok(azimuth_span_deg) && ok(elevation_span_deg))
            || azimuth_span_deg > 360.0
        {
            return Err(Error::InvalidConfig("FV steps and spans must be positive".into()));
        }
        Ok(Self {
            azimuth_step_deg,
            elevation_step_deg,
            azimuth_origin_deg,
            elevation_origin_deg,
            rows: math::ceil(elevation_span_deg / elevation_step_deg - EDGE_EPS) as usize,
            cols: math::ceil(azimuth_span_deg / azimuth_step_deg - EDGE_EPS) as usize,
        })
    }

    /// One pixel per lattice ray: columns centered on the firing azimuths,
    /// rows on the channels (exact for evenly spaced channels).
    pub fn from_sensor(sensor: &SensorModel) -> Self {
        let d_az = sensor.azimuth_step_deg();
        let d_el = sensor.mean_channel_spacing_deg();
        let el_min = sensor.elevations_deg()[0];
        Self {
            azimuth_step_deg: d_az,
            elevation_step_deg: d_el,
            azimuth_origin_deg: sensor.azimuth_start_deg() - d_az / 2.0,
            elevation_origin_deg: el_min - d_el / 2.0,
            rows: sensor.channels(),
            cols: sensor.azimuth_count(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// In-lattice pixel of `p`.
    pub fn pixel(&self, p: &Point) -> Option<(usize, usize)> {
        let (r, c) = fv_project(p, self)?;
        (r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols)
            .then_some((r as usize, c as usize))
    }
}

/// Raw `(r, c)` of a point, before any bounds check. `None` only for the
/// origin.
pub fn fv_project(p: &Point, config: &FvConfig) -> Option<(i64, i64)> {
    let s = to_spherical(p.xyz()).ok()?;
    let mut rel_az = s.azimuth_deg - config.azimuth_origin_deg;
    rel_az -= 360.0 * math::floor(rel_az / 360.0);
    let c = math::floor(rel_az / config.azimuth_step_deg + EDGE_EPS) as i64;
    let rel_el = s.elevation_deg - config.elevation_origin_deg;
    let r = math::floor(rel_el / config.elevation_step_deg + EDGE_EPS) as i64;
    Some((r, c))
}

/// Per-pixel nearest range, that point's intensity, and hit count.
#[derive(Debug, Clone, PartialEq)]
pub struct FvImage {
    pub config: FvConfig,
    /// `f64::INFINITY` marks an empty pixel.
    pub range: Vec<f64>,
    pub intensity: Vec<f64>,
    pub count: Vec<u32>,
}

impl FvImage {
    pub fn empty(config: FvConfig) -> Self {
        let n = config.len();
        Self {
            config,
            range: alloc::vec![f64::INFINITY; n],
            intensity: alloc::vec![0.0; n],
            count: alloc::vec![0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.config.rows
    }

    pub fn cols(&self) -> usize {
        self.config.cols
    }

    pub fn index(&self, r: usize, c: usize) -> usize {
        r * self.config.cols + c
    }

    pub fn is_occupied(&self, r: usize, c: usize) -> bool {
        self.count[self.index(r, c)] > 0
    }

    pub fn total_count(&self) -> u64 {
        self.count.iter().map(|&c| c as u64).sum()
    }

    pub fn occupied_pixels(&self) -> Vec<(usize, usize)> {
        (0..self.rows())
            .flat_map(|r| (0..self.cols()).map(move |c| (r, c)))
            .filter(|&(r, c)| self.is_occupied(r, c))
            .collect()
    }
}

/// Bins every in-lattice point. Ties in range keep the lower intensity so
/// the image does not depend on point order.
pub fn build_fv_image(cloud: &PointCloud, config: &FvConfig) -> FvImage {
    let mut img = FvImage::empty(*config);
    for p in cloud.iter() {
        let Some((r, c)) = config.pixel(p) else { continue };
        let i = img.index(r, c);
        let range = p.xyz().norm();
        img.count[i] += 1;
        if range < img.range[i] || (range == img.range[i] && p.intensity < img.intensity[i]) {
            img.range[i] = range;
            img.intensity[i] = p.intensity;
        }
    }
    img
}

/// `1 − largest 8-connected component / occupied pixels`. Duplicate pixels
/// count once.
pub fn scatter_score(pixels: &[(usize, usize)]) -> Result<f64> {
    let set: BTreeSet<(usize, usize)> = pixels.iter().copied().collect();
    if set.is_empty() {
        return Err(Error::EmptyInput("pixel set"));
    }
    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut largest = 0usize;
    for &start in &set {
        if !seen.insert(start) {
            continue;
        }
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        while let Some((r, c)) = queue.pop_front() {
            size += 1;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 {
                        continue;
                    }
                    let n = (nr as usize, nc as usize);
                    if set.contains(&n) && seen.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
        }
        largest = largest.max(size);
    }
    Ok(1.0 - largest as f64 / set.len() as f64)
}

/// Per-pixel scores on an FV lattice, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRaster {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl ScoreRaster {
    pub fn uniform(rows: usize, cols: usize, v: f64) -> Self {
        Self {
            rows,
            cols,
            values: alloc::vec![v; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }
}

/// A cloud with one extra score per point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredCloud {
    pub cloud: PointCloud,
    pub scores: Vec<f64>,
}

/// Attaches each point's pixel score. Points outside the lattice get 0.
pub fn augment_with_scores(cloud: &PointCloud, config: &FvConfig, scores: &ScoreRaster) -> Result<ScoredCloud> {
    if scores.rows != config.rows || scores.cols != config.cols || scores.values.len() != config.len() {
        return Err(Error::DimensionMismatch {
            expected_rows: config.rows,
            expected_cols: config.cols,
            rows: scores.rows,
            cols: scores.cols,
        });
    }
    let values = cloud
        .iter()
        .map(|p| config.pixel(p).map_or(0.0, |(r, c)| scores.get(r, c)))
        .collect();
    Ok(ScoredCloud {
        cloud: cloud.clone(),
        scores: values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cfg() -> FvConfig {
        FvConfig {
            azimuth_step_deg: 0.2,
            elevation_step_deg: 0.4,
            azimuth_origin_deg: 0.0,
            elevation_origin_deg: 0.0,
            rows: 300,
            cols: 1800,
        }
    }

    #[test]
    fn hand_examples() {
        let p = |x, y, z| Point::new(x, y, z, 0.0);
        assert_eq!(fv_project(&p(1.0, 0.0, 0.0), &cfg()), Some((0, 0)));
        assert_eq!(fv_project(&p(0.0, 1.0, 0.0), &cfg()).unwrap().1, 450);
        assert_eq!(fv_project(&p(1.0, 1.0, 1.0), &cfg()), Some((88, 225)));
        assert_eq!(fv_project(&p(0.0, 0.0, 0.0), &cfg()), None);
    }

    #[test]
    fn image_basics() {
        let c = cfg();
        let img = build_fv_image(&PointCloud::default(), &c);
        assert_eq!(img.total_count(), 0);
        let cloud = PointCloud::new(vec![
            Point::new(10.0, 1.0, 0.5, 0.2),
            Point::new(5.0, 0.5, 0.25, 0.7),
            Point::new(1.0, 1.0, 1.0, 0.1),
        ]);
        let img = build_fv_image(&cloud, &c);
        assert_eq!(img.total_count(), 3);
        let (r, cc) = c.pixel(&cloud.points[0]).unwrap();
        let i = img.index(r, cc);
        assert_eq!(img.count[i], 2);
        assert_eq!(img.range[i], cloud.points[1].xyz().norm());
        assert_eq!(img.intensity[i], 0.7);
    }

    #[test]
    fn scatter_examples() {
        let block: Vec<_> = (0..5).flat_map(|r| (0..5).map(move |c| (r, c))).collect();
        assert_eq!(scatter_score(&block).unwrap(), 0.0);
        let isolated: Vec<_> = (0..5).flat_map(|r| (0..5).map(move |c| (2 * r, 2 * c))).collect();
        assert!((scatter_score(&isolated).unwrap() - 0.96).abs() < 1e-12);
        assert!(scatter_score(&[]).is_err());
    }

    #[test]
    fn augment_uniform_and_mismatch() {
        let c = cfg();
        let cloud = PointCloud::new(vec![Point::new(3.0, 1.0, 0.5, 0.2)]);
        let out = augment_with_scores(&cloud, &c, &ScoreRaster::uniform(c.rows, c.cols, 1.0)).unwrap();
        assert_eq!(out.scores, vec![1.0]);
        assert_eq!(out.cloud, cloud);
        assert!(augment_with_scores(&PointCloud::default(), &c, &ScoreRaster::uniform(c.rows, c.cols, 1.0))
            .unwrap()
            .scores
            .is_empty());
        assert!(matches!(
            augment_with_scores(&cloud, &c, &ScoreRaster::uniform(2, 2, 1.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sensor_lattice_maps_rays_to_distinct_pixels() {
        let s = SensorModel::uniform(16, -15.0, 15.0, 0.2, -180.0, 180.0, 100.0).unwrap();
        let c = FvConfig::from_sensor(&s);
        let mut seen = BTreeSet::new();
        for ray in s.rays() {
            let p = Point::from_vec(s.point_at(ray, 10.0).unwrap(), 0.0);
            let px = c.pixel(&p).unwrap();
            assert_eq!(px, (ray.channel, ray.azimuth_index));
            assert!(seen.insert(px));
        }
    }
}
