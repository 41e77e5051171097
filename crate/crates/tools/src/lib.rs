//! File formats, synthetic benchmarks and the command line around
//! `carlo-core`.
//!
//! Readers never panic on bad input; they return [`DataError`] with a byte
//! offset or line number. Text outputs start with a `#` provenance comment
//! (tool version, seed, configuration hash) that every reader here skips.

pub mod app;
pub mod bench;
pub mod clock;
pub mod config;
pub mod dataset;
pub mod dump;
mod error;
pub mod fv_io;
pub mod kitti;
pub mod obj;
pub mod profile;
pub mod provenance;
pub mod scene_file;
pub mod tables;
pub mod trace_io;
pub mod velodyne;

pub use error::{DataError, DataResult};
