//! Geometric kernels shared by the renderer, the attack pipeline and CARLO.

mod boxes;
mod frustum;
mod iou;
mod ray;
mod voxel;

pub use boxes::{point_in_box, Box3D, BOUNDARY_EPS};
pub use frustum::{box_ray_index, extract_frustum, extract_frustum_indexed, Frustum, FrustumEntry};
pub use iou::{bev_intersection_area, iou3d};
pub use ray::{ray_aabb_intersect, ray_box_intersect, ray_triangle_intersect, Triangle};
pub use voxel::{bresenham3d, CellState, VoxelGrid};
