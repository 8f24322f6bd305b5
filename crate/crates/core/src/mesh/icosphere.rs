use std::collections::HashMap;

use nalgebra::Vector3;

use super::TriangleMesh;
use crate::error::{Error, Result};

/// Vertex cap applied by [`unit_sphere_mesh`].
pub const DEFAULT_VERTEX_CAP: usize = 2_000_000;

/// Icosahedron subdivided `subdivisions` times (1-to-4 split) with vertices
/// projected to the unit sphere. Faces are oriented outward.
pub fn unit_sphere_mesh(subdivisions: u32) -> Result<TriangleMesh> {
    unit_sphere_mesh_with_cap(subdivisions, DEFAULT_VERTEX_CAP)
}

pub fn unit_sphere_mesh_with_cap(subdivisions: u32, vertex_cap: usize) -> Result<TriangleMesh> {
    // K = 10 * 4^s + 2
    let count = 4u128
        .checked_pow(subdivisions)
        .map(|p| 10 * p + 2)
        .filter(|&c| c <= vertex_cap as u128)
        .ok_or_else(|| {
            Error::ResourceLimit(format!(
                "{subdivisions} subdivisions exceed the cap of {vertex_cap} vertices"
            ))
        })?;

    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vector3::from(*p).normalize())
    .collect();

    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vector3<f64>>| {
            let key = if a < b { (a, b) } else { (b, a) };
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    debug_assert_eq!(vertices.len() as u128, count);

    TriangleMesh::new(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn counts() {
        let m0 = unit_sphere_mesh(0).unwrap();
        assert_eq!((m0.vertex_count(), m0.triangle_count()), (12, 20));
        let m1 = unit_sphere_mesh(1).unwrap();
        assert_eq!((m1.vertex_count(), m1.triangle_count()), (42, 80));
        let m3 = unit_sphere_mesh(3).unwrap();
        assert_eq!(m3.vertex_count(), 642);
    }

    #[test]
    fn closed_and_outward() {
        for s in 0..4 {
            let m = unit_sphere_mesh(s).unwrap();
            assert!(m.is_closed());
            assert_eq!(m.euler_characteristic(), 2);
            for v in m.vertices() {
                assert!((v.norm() - 1.0).abs() < 1e-12);
            }
            for t in m.triangles() {
                let p = t.map(|i| m.vertices()[i]);
                let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
                assert!(n.dot(&(p[0] + p[1] + p[2])) > 0.0);
            }
        }
    }

    #[test]
    fn area_converges_to_sphere() {
        let mut prev = f64::INFINITY;
        for s in 1..=4 {
            let err = (unit_sphere_mesh(s).unwrap().total_area() - 4.0 * PI).abs() / (4.0 * PI);
            assert!(err < prev);
            if s >= 3 {
                assert!(err < 0.01, "subdivisions {s}: {err}");
            }
            prev = err;
        }
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            unit_sphere_mesh_with_cap(3, 100),
            Err(Error::ResourceLimit(_))
        ));
        assert!(matches!(unit_sphere_mesh(40), Err(Error::ResourceLimit(_))));
    }
}
