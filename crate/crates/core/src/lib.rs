//! Geometry and detection kernels for LiDAR spoofing research.
//!
//! The crate is `no_std` (it only needs `alloc`). Everything that touches a
//! filesystem, a clock or a command line lives in `carlo-tools`.
//!
//! Layout:
//! - [`cloud`]: points, clouds, the sensor ray lattice.
//! - [`geometry`]: oriented boxes, ray casting, voxel traversal, frustums, IoU.
//! - [`mesh`] and [`renderer`]: a ray-casting LiDAR simulator over triangle meshes.
//! - [`attack`]: spoof trace construction, placement, pruning and injection.
//! - [`carlo`]: laser penetration and free-space checks plus the hierarchical verdict.
//! - [`fv`]: front-view range images and the scatter heuristic.
//! - [`harness`]: the proxy detector, success judging and ASR/A²SR/AP metrics.
//! - [`synth`]: seeded synthetic scenes for experiments.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attack;
pub mod carlo;
pub mod cloud;
mod error;
pub mod fv;
pub mod geometry;
pub mod harness;
pub mod math;
pub mod mesh;
pub mod renderer;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
