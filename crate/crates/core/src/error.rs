use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate point at the sensor origin")]
    DegeneratePoint,
    #[error("range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("point outside the sensor field of view (azimuth {azimuth_deg:.4}°, elevation {elevation_deg:.4}°)")]
    OutOfFov { azimuth_deg: f64, elevation_deg: f64 },
    #[error("ray id (channel {channel}, azimuth index {azimuth_index}) outside the sensor lattice")]
    InvalidRay { channel: usize, azimuth_index: usize },
    #[error("invalid sensor model: {0}")]
    InvalidSensor(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("no lattice ray intersects the box")]
    EmptyFrustum,
    #[error("box covers no voxel cells at cell size {cell_size}")]
    DegenerateBox { cell_size: f64 },
    #[error("frustum has no returned points")]
    EmptyEvidence,
    #[error("no points inside the box")]
    EmptyTrace,
    #[error("trace centroid lies at the sensor origin; azimuth undefined")]
    DegenerateAzimuth,
    #[error("placement unreachable: {0}")]
    UnreachablePlacement(String),
    #[error("all trace points fall outside the sensor field of view")]
    AllOutOfFov,
    #[error("trace violates capability: {0}")]
    CapabilityViolation(String),
    #[error("ratio distributions are not separable: a = {a:.4} <= b = {b:.4}")]
    NonSeparable { a: f64, b: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    DimensionMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
}
