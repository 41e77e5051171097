use alloc::vec;
use alloc::vec::Vec;

use crate::math::{self, Vec3};
use crate::{Error, Result};

use super::Box3D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellState {
    Free,
    Occluded,
}

/// Regular grid of cubic cells; every cell starts `Occluded`.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    min_corner: Vec3,
    cell_size: f64,
    dims: [usize; 3],
    cells: Vec<CellState>,
}

impl VoxelGrid {
    pub fn new(min_corner: Vec3, cell_size: f64, dims: [usize; 3]) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::InvalidConfig("cell size must be positive".into()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidConfig("grid dims must be positive".into()));
        }
        Ok(Self {
            min_corner,
            cell_size,
            dims,
            cells: vec![CellState::Occluded; dims[0] * dims[1] * dims[2]],
        })
    }

    /// Smallest grid anchored at the box's axis-aligned lower corner that
    /// covers the whole box.
    pub fn covering(b: &Box3D, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) {
            return Err(Error::InvalidConfig("cell size must be positive".into()));
        }
        let (lo, hi) = b.aabb();
        let ext = hi - lo;
        let n = |e: f64| (math::ceil(e / cell_size - 1e-9).max(1.0)) as usize;
        Self::new(lo, cell_size, [n(ext.x), n(ext.y), n(ext.z)])
    }

    pub fn min_corner(&self) -> Vec3 {
        self.min_corner
    }
    pub fn max_corner(&self) -> Vec3 {
        self.min_corner
            + Vec3::new(
                self.dims[0] as f64,
                self.dims[1] as f64,
                self.dims[2] as f64,
            ) * self.cell_size
    }
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
    pub fn len(&self) -> usize {
        self.cells.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    pub fn state(&self, c: [usize; 3]) -> CellState {
        self.cells[self.flat(c)]
    }

    pub fn set(&mut self, c: [usize; 3], s: CellState) {
        let i = self.flat(c);
        self.cells[i] = s;
    }

    pub fn cell_center(&self, c: [usize; 3]) -> Vec3 {
        self.min_corner
            + Vec3::new(
                c[0] as f64 + 0.5,
                c[1] as f64 + 0.5,
                c[2] as f64 + 0.5,
            ) * self.cell_size
    }

    pub fn cell_bounds(&self, c: [usize; 3]) -> (Vec3, Vec3) {
        let lo = self.min_corner
            + Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64) * self.cell_size;
        (lo, lo + Vec3::new(1.0, 1.0, 1.0) * self.cell_size)
    }

    /// Cell containing `p`, if inside the grid (upper faces inclusive).
    pub fn cell_of(&self, p: Vec3) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for axis in 0..3 {
            let q = (p[axis] - self.min_corner[axis]) / self.cell_size;
            if !(q >= 0.0) || q > self.dims[axis] as f64 {
                return None;
            }
            out[axis] = (math::floor(q) as usize).min(self.dims[axis] - 1);
        }
        Some(out)
    }

    pub fn cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, nz] = self.dims;
        (0..nz).flat_map(move |z| (0..ny).flat_map(move |y| (0..nx).map(move |x| [x, y, z])))
    }

    /// Marks every cell the segment passes through as free.
    pub fn mark_free(&mut self, start: Vec3, end: Vec3) {
        for c in bresenham3d(self, start, end) {
            self.set(c, CellState::Free);
        }
    }
}

/// Cells traversed by the segment `start → end`, in order, after clipping the
/// segment to the grid.
///
/// Exact voxel stepping on the segment parameter: each step moves to the
/// neighbour across the nearest cell boundary. When the segment crosses an
/// edge or corner exactly, all tied axes advance together, so the chain is
/// 26-connected and contains no cells touched only at a face or edge.
pub fn bresenham3d(grid: &VoxelGrid, start: Vec3, end: Vec3) -> Vec<[usize; 3]> {
    let lo = grid.min_corner();
    let hi = grid.max_corner();
    let d = end - start;

    if d == Vec3::ZERO {
        return grid.cell_of(start).map(|c| vec![c]).unwrap_or_default();
    }

    // clip to the grid, t in [0, 1]
    let (t0, t1) = match clip_segment(start, d, lo, hi) {
        Some(r) => r,
        None => return Vec::new(),
    };
    // touching the grid in a single point crosses no cell
    if t0 >= t1 {
        return Vec::new();
    }
    // the clipped entry can land a rounding error outside the grid face
    let entry = (start + d * t0).max_by_axis(lo).min_by_axis(hi);
    let Some(mut cell) = grid.cell_of(entry) else {
        return Vec::new();
    };

    let size = grid.cell_size();
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for axis in 0..3 {
        let di = d[axis];
        if di > 0.0 {
            step[axis] = 1;
            let boundary = lo[axis] + (cell[axis] + 1) as f64 * size;
            t_max[axis] = (boundary - start[axis]) / di;
            t_delta[axis] = size / di;
        } else if di < 0.0 {
            step[axis] = -1;
            let boundary = lo[axis] + cell[axis] as f64 * size;
            t_max[axis] = (boundary - start[axis]) / di;
            t_delta[axis] = -size / di;
        }
    }

    let mut out = Vec::new();
    let limit = grid.dims().iter().sum::<usize>() + 3;
    loop {
        out.push(cell);
        let t_next = t_max[0].min(t_max[1]).min(t_max[2]);
        if !(t_next < t1) || out.len() > limit {
            break;
        }
        let mut inside = true;
        for axis in 0..3 {
            if t_max[axis] == t_next {
                let next = cell[axis] as i64 + step[axis];
                if next < 0 || next >= grid.dims()[axis] as i64 {
                    inside = false;
                } else {
                    cell[axis] = next as usize;
                }
                t_max[axis] += t_delta[axis];
            }
        }
        if !inside {
            break;
        }
    }
    out
}

fn clip_segment(start: Vec3, d: Vec3, lo: Vec3, hi: Vec3) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for axis in 0..3 {
        let (s, di) = (start[axis], d[axis]);
        if di == 0.0 {
            if s < lo[axis] || s > hi[axis] {
                return None;
            }
            continue;
        }
        let (mut a, mut b) = ((lo[axis] - s) / di, (hi[axis] - s) / di);
        if a > b {
            core::mem::swap(&mut a, &mut b);
        }
        t0 = t0.max(a);
        t1 = t1.min(b);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}
