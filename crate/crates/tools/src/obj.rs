//! Wavefront OBJ subset: `v x y z` and `f` lines. Faces may be polygons
//! (fan-triangulated from their first vertex), may use `i/t/n` references,
//! and may index backwards with negative numbers. Everything else is
//! skipped.

use std::fmt::Write as _;

use carlo_core::math::Vec3;
use carlo_core::mesh::TriangleMesh;

use crate::error::{DataError, DataResult};

pub fn read_obj_mesh(text: &str) -> DataResult<TriangleMesh> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut tok = raw.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    let t = tok.next().ok_or_else(|| DataError::parse("obj", line, "vertex needs 3 coordinates"))?;
                    *c = t
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| DataError::parse("obj", line, format!("bad coordinate {t:?}")))?;
                }
                vertices.push(Vec3::from_array(xyz));
            }
            Some("f") => {
                let idx = tok
                    .map(|t| resolve(t, vertices.len(), line))
                    .collect::<DataResult<Vec<usize>>>()?;
                if idx.len() < 3 {
                    return Err(DataError::parse("obj", line, "face needs at least 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(TriangleMesh::new(vertices, triangles)?)
}

fn resolve(token: &str, count: usize, line: usize) -> DataResult<usize> {
    let head = token.split('/').next().unwrap_or("");
    let k: i64 = head
        .parse()
        .map_err(|_| DataError::parse("obj", line, format!("bad vertex reference {token:?}")))?;
    let idx = if k > 0 {
        k - 1
    } else if k < 0 {
        count as i64 + k
    } else {
        -1
    };
    if idx < 0 || idx >= count as i64 {
        return Err(DataError::parse(
            "obj",
            line,
            format!("vertex index {k} out of range (have {count} vertices)"),
        ));
    }
    Ok(idx as usize)
}

pub fn write_obj_mesh(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}
