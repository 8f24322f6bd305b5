//! Triangulated surfaces: validation, geometry, generation and point location.

mod icosphere;
mod locate;
mod off;

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result, TopologyKind};

pub use icosphere::{unit_sphere_mesh, unit_sphere_mesh_with_cap, DEFAULT_VERTEX_CAP};
pub use locate::BVH_THRESHOLD;
pub use off::{load_mesh, parse_off, write_off};

/// Tolerance for barycentric containment.
pub const BARY_EPSILON: f64 = 1e-9;

/// Relative factor applied to the squared bounding-box diagonal to obtain
/// the degenerate-area threshold.
pub const AREA_EPSILON_FACTOR: f64 = 1e-12;

/// An embedded, edge-manifold, consistently oriented triangle mesh.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    closed: bool,
    area_epsilon: f64,
    locator: locate::Locator,
}

/// A point on the mesh given by a triangle and barycentric weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceLocation {
    pub triangle: usize,
    pub barycentric: [f64; 3],
}

/// Area and ambient-space gradients of the three nodal basis functions of a
/// triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleGeometry {
    pub area: f64,
    pub basis_gradients: [Vector3<f64>; 3],
}

impl SurfaceLocation {
    /// Builds a location after clamping tiny negative weights and
    /// renormalizing.
    pub fn new(triangle: usize, barycentric: [f64; 3]) -> Result<Self> {
        let sum: f64 = barycentric.iter().sum();
        if barycentric
            .iter()
            .any(|w| !w.is_finite() || *w < -BARY_EPSILON)
            || (sum - 1.0).abs() > BARY_EPSILON
        {
            return Err(Error::InvalidArgument(format!(
                "barycentric weights {barycentric:?} are not a convex combination"
            )));
        }
        Ok(Self::clamped(triangle, barycentric))
    }

    pub(crate) fn clamped(triangle: usize, barycentric: [f64; 3]) -> Self {
        let mut w = barycentric.map(|x| x.max(0.0));
        let sum: f64 = w.iter().sum();
        for x in &mut w {
            *x /= sum;
        }
        Self {
            triangle,
            barycentric: w,
        }
    }
}

impl TriangleMesh {
    /// Validates and builds a mesh.
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let k = vertices.len();
        if let Some(i) = vertices
            .iter()
            .position(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "vertex {i} has non-finite coordinates"
            )));
        }
        if triangles.is_empty() {
            return Err(Error::InvalidArgument("mesh has no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= k) {
                return Err(topology(TopologyKind::IndexOutOfRange, "triangle", t));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(topology(TopologyKind::RepeatedVertex, "triangle", t));
            }
        }

        let area_epsilon = AREA_EPSILON_FACTOR * bounding_diagonal(&vertices).powi(2);
        for (t, tri) in triangles.iter().enumerate() {
            let area = triangle_area(&vertices, tri);
            if !(area > area_epsilon) {
                return Err(topology(TopologyKind::DegenerateTriangle, "triangle", t));
            }
        }

        let closed = check_edges(&triangles)?;

        let mut used = vec![false; k];
        for tri in &triangles {
            for &v in tri {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(topology(TopologyKind::UnreferencedVertex, "vertex", v));
        }

        let locator = locate::Locator::build(&vertices, &triangles);
        Ok(Self {
            vertices,
            triangles,
            closed,
            area_epsilon,
            locator,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// True iff every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn area_epsilon(&self) -> f64 {
        self.area_epsilon
    }

    pub fn bounding_diagonal(&self) -> f64 {
        bounding_diagonal(&self.vertices)
    }

    pub fn total_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| triangle_area(&self.vertices, t))
            .sum()
    }

    /// Number of distinct undirected edges.
    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |i| ordered(t[i], t[(i + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edge_count() as i64 + self.triangle_count() as i64
    }

    /// Area and basis gradients of triangle `t` under the flat-per-triangle
    /// metric induced by the embedding.
    pub fn triangle_geometry(&self, t: usize) -> Result<TriangleGeometry> {
        let tri = self.triangles.get(t).ok_or(Error::DimensionMismatch {
            context: "triangle index",
            expected: self.triangles.len(),
            found: t,
        })?;
        let p = tri.map(|i| self.vertices[i]);
        let normal = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let norm2 = normal.norm_squared();
        let area = 0.5 * norm2.sqrt();
        if !(area > self.area_epsilon) {
            return Err(Error::DegenerateTriangle { triangle: t, area });
        }
        // grad of barycentric i is n x (opposite edge) / |n|^2
        let grad = |i: usize| normal.cross(&(p[(i + 2) % 3] - p[(i + 1) % 3])) / norm2;
        Ok(TriangleGeometry {
            area,
            basis_gradients: [grad(0), grad(1), grad(2)],
        })
    }

    /// Ambient coordinates of a surface location.
    pub fn point_at(&self, loc: &SurfaceLocation) -> Vector3<f64> {
        let tri = self.triangles[loc.triangle];
        (0..3).fold(Vector3::zeros(), |acc, i| {
            acc + self.vertices[tri[i]] * loc.barycentric[i]
        })
    }

    /// Closest point on the mesh to `p`. Ties between triangles go to the
    /// lowest triangle index.
    pub fn locate_point(&self, p: &Vector3<f64>) -> SurfaceLocation {
        let tie = 1e-20 * self.bounding_diagonal().powi(2).max(f64::MIN_POSITIVE);
        let (t, bary) = self
            .locator
            .closest(&self.vertices, &self.triangles, p, tie);
        SurfaceLocation::clamped(t, bary)
    }

    /// Reference exhaustive search, used regardless of mesh size.
    pub fn locate_point_exhaustive(&self, p: &Vector3<f64>) -> SurfaceLocation {
        let tie = 1e-20 * self.bounding_diagonal().powi(2).max(f64::MIN_POSITIVE);
        let (t, bary) = locate::exhaustive(&self.vertices, &self.triangles, p, tie);
        SurfaceLocation::clamped(t, bary)
    }

    /// Location of vertex `v`: the lowest-index triangle containing it with
    /// an indicator weight.
    pub fn vertex_location(&self, v: usize) -> SurfaceLocation {
        self.vertex_locations()[v]
    }

    /// Indicator locations of all vertices, in vertex order.
    pub fn vertex_locations(&self) -> Vec<SurfaceLocation> {
        let mut out: Vec<Option<SurfaceLocation>> = vec![None; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for (corner, &v) in tri.iter().enumerate() {
                if out[v].is_none() {
                    let mut w = [0.0; 3];
                    w[corner] = 1.0;
                    out[v] = Some(SurfaceLocation {
                        triangle: t,
                        barycentric: w,
                    });
                }
            }
        }
        out.into_iter()
            .map(|l| l.expect("validated mesh has no unreferenced vertices"))
            .collect()
    }

    /// Returns a copy with every vertex mapped through `f`.
    pub fn map_vertices(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Result<Self> {
        Self::new(
            self.vertices.iter().map(f).collect(),
            self.triangles.clone(),
        )
    }
}

fn topology(kind: TopologyKind, element: &'static str, index: usize) -> Error {
    Error::Topology {
        kind,
        element,
        index,
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn triangle_area(vertices: &[Vector3<f64>], tri: &[usize; 3]) -> f64 {
    let p = tri.map(|i| vertices[i]);
    0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm()
}

fn bounding_diagonal(vertices: &[Vector3<f64>]) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for v in vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    (hi - lo).norm()
}

/// Edge census. Returns whether the mesh is closed; errors on
/// non-manifold edges or orientation conflicts.
fn check_edges(triangles: &[[usize; 3]]) -> Result<bool> {
    // undirected edge -> (triangles using it, direction of first use)
    let mut edges: HashMap<(usize, usize), (usize, bool)> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            let forward = a < b;
            let entry = edges.entry(ordered(a, b)).or_insert((0, forward));
            entry.0 += 1;
            if entry.0 > 2 {
                return Err(topology(TopologyKind::NonManifoldEdge, "triangle", t));
            }
            if entry.0 == 2 && entry.1 == forward {
                return Err(topology(
                    TopologyKind::InconsistentOrientation,
                    "triangle",
                    t,
                ));
            }
        }
    }
    Ok(edges.values().all(|(count, _)| *count == 2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::tetrahedron;
    use nalgebra::Rotation3;

    fn right_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn tetrahedron_is_closed() {
        let m = tetrahedron();
        assert_eq!((m.vertex_count(), m.triangle_count()), (4, 4));
        assert!(m.is_closed());
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn single_triangle_is_open() {
        assert!(!right_triangle().is_closed());
    }

    #[test]
    fn flipped_triangle_is_rejected() {
        let t = tetrahedron();
        let mut tris = t.triangles().to_vec();
        tris[2].swap(1, 2);
        let err = TriangleMesh::new(t.vertices().to_vec(), tris).unwrap_err();
        assert!(matches!(
            err,
            Error::Topology {
                kind: TopologyKind::InconsistentOrientation,
                ..
            }
        ));
    }

    #[test]
    fn non_manifold_edge_is_rejected() {
        let v = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, -1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ];
        let err = TriangleMesh::new(v, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]]).unwrap_err();
        assert!(matches!(
            err,
            Error::Topology {
                kind: TopologyKind::NonManifoldEdge,
                index: 2,
                ..
            }
        ));
    }

    #[test]
    fn degenerate_and_out_of_range_are_rejected() {
        let v = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(2.0, 0.0, 0.0),
        ];
        assert!(matches!(
            TriangleMesh::new(v.clone(), vec![[0, 1, 2]]).unwrap_err(),
            Error::Topology {
                kind: TopologyKind::DegenerateTriangle,
                ..
            }
        ));
        assert!(matches!(
            TriangleMesh::new(v, vec![[0, 1, 7]]).unwrap_err(),
            Error::Topology {
                kind: TopologyKind::IndexOutOfRange,
                ..
            }
        ));
    }

    #[test]
    fn right_triangle_geometry() {
        let g = right_triangle().triangle_geometry(0).unwrap();
        assert!((g.area - 0.5).abs() < 1e-15);
        let expected = [
            Vector3::new(-1.0, -1.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        for (a, b) in g.basis_gradients.iter().zip(&expected) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn rotated_triangle_geometry() {
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let base = right_triangle();
        let moved = base
            .map_vertices(|v| rot * v + Vector3::new(4.0, -2.0, 0.5))
            .unwrap();
        let g0 = base.triangle_geometry(0).unwrap();
        let g1 = moved.triangle_geometry(0).unwrap();
        assert!((g0.area - g1.area).abs() < 1e-14);
        for i in 0..3 {
            assert!((rot * g0.basis_gradients[i] - g1.basis_gradients[i]).norm() < 1e-13);
        }
    }

    #[test]
    fn equilateral_area() {
        let m = TriangleMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.5, 3f64.sqrt() / 2.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let g = m.triangle_geometry(0).unwrap();
        assert!((g.area - 3f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn gradients_orthogonal_to_normal_and_sum_to_zero() {
        let m = unit_sphere_mesh(2).unwrap();
        for t in 0..m.triangle_count() {
            let g = m.triangle_geometry(t).unwrap();
            let tri = m.triangles()[t].map(|i| m.vertices()[i]);
            let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
            let scale: f64 = g.basis_gradients.iter().map(|x| x.norm()).sum();
            let sum = g.basis_gradients[0] + g.basis_gradients[1] + g.basis_gradients[2];
            assert!(sum.norm() < 1e-12 * scale);
            for grad in &g.basis_gradients {
                assert!(grad.dot(&n).abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn locate_vertex_and_centroid() {
        let m = tetrahedron();
        let loc = m.locate_point(&m.vertices()[3]);
        let tri = m.triangles()[loc.triangle];
        let corner = tri.iter().position(|&v| v == 3).unwrap();
        assert!((loc.barycentric[corner] - 1.0).abs() < 1e-12);

        let t = 3;
        let c = m.triangles()[t]
            .iter()
            .fold(Vector3::zeros(), |a, &i| a + m.vertices()[i])
            / 3.0;
        let loc = m.locate_point(&c);
        assert_eq!(loc.triangle, t);
        for w in loc.barycentric {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn surface_location_validation() {
        assert!(SurfaceLocation::new(0, [0.5, 0.5, 0.0]).is_ok());
        assert!(SurfaceLocation::new(0, [0.5, 0.6, -0.1]).is_err());
        let l = SurfaceLocation::new(0, [1.0 + 1e-10, -1e-10, 0.0]).unwrap();
        assert_eq!(l.barycentric[1], 0.0);
    }
}
