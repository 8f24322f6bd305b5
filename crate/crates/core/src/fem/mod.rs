//! Linear surface finite elements: basis evaluations, mass and stiffness.

mod eigen;

use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{SurfaceLocation, TriangleMesh};
use crate::sparse;

pub use eigen::{lb_eigenpairs, EigenPair};

/// `Ψ` (s×K), `R0` (K×K) and `R1` (K×K) for a mesh and a set of sampling
/// locations.
#[derive(Debug, Clone)]
pub struct FemOperators {
    psi: CsrMatrix<f64>,
    mass: CsrMatrix<f64>,
    stiffness: CsrMatrix<f64>,
    locations: Vec<SurfaceLocation>,
    total_area: f64,
    closed: bool,
}

impl FemOperators {
    /// Assembles the operators with exact element integrals.
    pub fn assemble(mesh: &TriangleMesh, locations: Vec<SurfaceLocation>) -> Result<Self> {
        let k = mesh.vertex_count();
        let t = mesh.triangle_count();
        for (j, loc) in locations.iter().enumerate() {
            if loc.triangle >= t {
                return Err(Error::DimensionMismatch {
                    context: "location triangle index",
                    expected: t,
                    found: loc.triangle,
                });
            }
            let sum: f64 = loc.barycentric.iter().sum();
            if loc.barycentric.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "location {j} has invalid barycentric weights {:?}",
                    loc.barycentric
                )));
            }
        }

        // element matrices in triangle order
        let elements: Vec<([usize; 3], f64, [[f64; 3]; 3])> = (0..t)
            .into_par_iter()
            .map(|tri| {
                let geo = mesh.triangle_geometry(tri)?;
                let mut stiff = [[0.0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        stiff[a][b] =
                            geo.area * geo.basis_gradients[a].dot(&geo.basis_gradients[b]);
                    }
                }
                Ok((mesh.triangles()[tri], geo.area, stiff))
            })
            .collect::<Result<_>>()?;

        let mut mass_t = Vec::with_capacity(9 * t);
        let mut stiff_t = Vec::with_capacity(9 * t);
        let mut total_area = 0.0;
        for (nodes, area, stiff) in &elements {
            total_area += area;
            for a in 0..3 {
                for b in 0..3 {
                    let m = if a == b { area / 6.0 } else { area / 12.0 };
                    mass_t.push((nodes[a], nodes[b], m));
                    stiff_t.push((nodes[a], nodes[b], stiff[a][b]));
                }
            }
        }

        let mut psi_t = Vec::with_capacity(3 * locations.len());
        for (j, loc) in locations.iter().enumerate() {
            let nodes = mesh.triangles()[loc.triangle];
            for c in 0..3 {
                if loc.barycentric[c] > 0.0 {
                    psi_t.push((j, nodes[c], loc.barycentric[c]));
                }
            }
        }

        Ok(Self {
            psi: sparse::csr_from_triplets(locations.len(), k, psi_t),
            mass: sparse::csr_from_triplets(k, k, mass_t),
            stiffness: sparse::csr_from_triplets(k, k, stiff_t),
            locations,
            total_area,
            closed: mesh.is_closed(),
        })
    }

    /// Operators with one sampling location per vertex, in vertex order.
    pub fn at_vertices(mesh: &TriangleMesh) -> Result<Self> {
        Self::assemble(mesh, mesh.vertex_locations())
    }

    pub fn psi(&self) -> &CsrMatrix<f64> {
        &self.psi
    }

    pub fn mass(&self) -> &CsrMatrix<f64> {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix<f64> {
        &self.stiffness
    }

    pub fn locations(&self) -> &[SurfaceLocation] {
        &self.locations
    }

    /// K.
    pub fn vertex_count(&self) -> usize {
        self.mass.nrows()
    }

    /// s.
    pub fn location_count(&self) -> usize {
        self.locations.len()
    }

    pub fn total_area(&self) -> f64 {
        self.total_area
    }

    pub fn mesh_is_closed(&self) -> bool {
        self.closed
    }

    /// `ΨᵀΨ` assembled from the (at most three) nonzeros of each row.
    pub fn psi_t_psi(&self) -> CsrMatrix<f64> {
        let mut triplets = Vec::with_capacity(9 * self.psi.nrows());
        for row in self.psi.row_iter() {
            for (&a, va) in row.col_indices().iter().zip(row.values()) {
                for (&b, vb) in row.col_indices().iter().zip(row.values()) {
                    triplets.push((a, b, va * vb));
                }
            }
        }
        let k = self.vertex_count();
        sparse::csr_from_triplets(k, k, triplets)
    }

    /// Evaluations `Ψ f` at the sampling locations.
    pub fn evaluate(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(f.len(), "coefficient vector")?;
        Ok(sparse::spmv(&self.psi, f.as_slice()))
    }

    /// `Ψᵀ z` for a vector over sampling locations.
    pub fn project(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.location_count() {
            return Err(Error::DimensionMismatch {
                context: "location vector",
                expected: self.location_count(),
                found: z.len(),
            });
        }
        Ok(sparse::spmv_t(&self.psi, z.as_slice()))
    }

    /// Discrete L² inner product `aᵀ R0 b`.
    pub fn l2_inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        self.check_len(a.len(), "l2_inner argument")?;
        self.check_len(b.len(), "l2_inner argument")?;
        Ok(sparse::bilinear(&self.mass, a.as_slice(), b.as_slice()))
    }

    pub fn l2_norm(&self, a: &DVector<f64>) -> Result<f64> {
        Ok(self.l2_inner(a, a)?.max(0.0).sqrt())
    }

    /// Vertex index of each location when every location is a vertex
    /// indicator and the locations form a permutation of the vertices.
    pub fn vertex_permutation(&self) -> Option<Vec<usize>> {
        let k = self.vertex_count();
        if self.location_count() != k {
            return None;
        }
        let mut seen = vec![false; k];
        let mut out = Vec::with_capacity(k);
        for row in self.psi.row_iter() {
            match (row.col_indices(), row.values()) {
                ([v], [w]) if (*w - 1.0).abs() < 1e-12 && !seen[*v] => {
                    seen[*v] = true;
                    out.push(*v);
                }
                _ => return None,
            }
        }
        Some(out)
    }

    /// `trace(ΨᵀΨ) / trace(R1 M⁻¹ R1)` with the row-sum lumped mass `M`.
    /// Brings λ to a mesh-independent scale.
    pub fn lambda_scale(&self) -> f64 {
        let lumped: Vec<f64> = self
            .mass
            .row_iter()
            .map(|r| r.values().iter().sum())
            .collect();
        let fit_trace: f64 = self.psi.values().iter().map(|v| v * v).sum();
        let mut pen_trace = 0.0;
        for row in self.stiffness.row_iter() {
            for (&j, v) in row.col_indices().iter().zip(row.values()) {
                pen_trace += v * v / lumped[j];
            }
        }
        if pen_trace > 0.0 {
            fit_trace / pen_trace
        } else {
            1.0
        }
    }

    fn check_len(&self, len: usize, context: &'static str) -> Result<()> {
        if len != self.vertex_count() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.vertex_count(),
                found: len,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_sphere_mesh;
    use crate::test_support::tetrahedron;
    use nalgebra::{Rotation3, Vector3};

    fn max_row_norm(m: &CsrMatrix<f64>) -> f64 {
        m.row_iter()
            .map(|r| r.values().iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_triangle_element_mass() {
        let mesh = TriangleMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let ops = FemOperators::at_vertices(&mesh).unwrap();
        let m = sparse::to_dense(ops.mass());
        let a = 0.5;
        for i in 0..3 {
            for j in 0..3 {
                let expected = a / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((m[(i, j)] - expected).abs() < 1e-15);
            }
        }
        let s = sparse::to_dense(ops.stiffness());
        // 0.5 * [[2,-1,-1],[-1,1,0],[-1,0,1]]
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((s[(i, j)] - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn vertex_locations_give_identity_psi() {
        let mesh = unit_sphere_mesh(1).unwrap();
        let ops = FemOperators::at_vertices(&mesh).unwrap();
        assert_eq!(ops.psi().nnz(), 42);
        for (j, row) in ops.psi().row_iter().enumerate() {
            assert_eq!(row.col_indices(), &[j]);
            assert_eq!(row.values(), &[1.0]);
        }
        assert_eq!(
            ops.vertex_permutation().unwrap(),
            (0..42).collect::<Vec<_>>()
        );
    }

    #[test]
    fn operator_invariants() {
        for mesh in [tetrahedron(), unit_sphere_mesh(3).unwrap()] {
            let ops = FemOperators::at_vertices(&mesh).unwrap();
            let ones = DVector::from_element(mesh.vertex_count(), 1.0);
            let r1_ones = sparse::spmv(ops.stiffness(), ones.as_slice());
            assert!(r1_ones.amax() < 1e-10 * max_row_norm(ops.stiffness()));
            let mass_sum: f64 = ops.mass().values().iter().sum();
            assert!((mass_sum - mesh.total_area()).abs() < 1e-10 * mesh.total_area());
            assert!((ops.l2_inner(&ones, &ones).unwrap() - mesh.total_area()).abs() < 1e-12);

            let m = sparse::to_dense(ops.mass());
            let s = sparse::to_dense(ops.stiffness());
            assert!((&m - m.transpose()).amax() < 1e-15);
            assert!((&s - s.transpose()).amax() < 1e-15);
            assert!(m.clone().cholesky().is_some());
            let eig = s.symmetric_eigenvalues();
            assert!(eig.min() > -1e-10 * eig.max());
        }
    }

    #[test]
    fn psi_rows_are_convex_weights() {
        let mesh = unit_sphere_mesh(2).unwrap();
        let locs: Vec<_> = (0..50)
            .map(|i| {
                let a = i as f64 * 0.7;
                mesh.locate_point(&Vector3::new(a.cos(), a.sin(), (0.3 * a).sin()))
            })
            .collect();
        let ops = FemOperators::assemble(&mesh, locs).unwrap();
        for row in ops.psi().row_iter() {
            assert!(row.nnz() <= 3);
            assert!(row.values().iter().all(|v| *v >= 0.0));
            assert!((row.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(ops.vertex_permutation().is_none());
    }

    /// Per-triangle 3-point edge-midpoint rule, exact for quadratics.
    fn quadrature_inner(mesh: &TriangleMesh, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        for t in 0..mesh.triangle_count() {
            let area = mesh.triangle_geometry(t).unwrap().area;
            let tri = mesh.triangles()[t];
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                let fa = 0.5 * (a[tri[i]] + a[tri[j]]);
                let fb = 0.5 * (b[tri[i]] + b[tri[j]]);
                total += area / 3.0 * fa * fb;
            }
        }
        total
    }

    #[test]
    fn l2_inner_matches_quadrature() {
        let mesh = unit_sphere_mesh(2).unwrap();
        let ops = FemOperators::at_vertices(&mesh).unwrap();
        let a = DVector::from_fn(mesh.vertex_count(), |i, _| (i as f64 * 0.31).sin());
        let b = DVector::from_fn(mesh.vertex_count(), |i, _| (i as f64 * 0.17).cos());
        let exact = quadrature_inner(&mesh, &a, &b);
        assert!((ops.l2_inner(&a, &b).unwrap() - exact).abs() < 1e-10 * exact.abs().max(1.0));
        assert!(matches!(
            ops.l2_inner(&a, &DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rigid_motion_and_scaling() {
        let mesh = unit_sphere_mesh(2).unwrap();
        let base = FemOperators::at_vertices(&mesh).unwrap();
        let rot = Rotation3::from_euler_angles(0.4, 1.2, -0.7);
        let moved = mesh
            .map_vertices(|v| rot * v + Vector3::new(3.0, -1.0, 2.0))
            .unwrap();
        let moved = FemOperators::at_vertices(&moved).unwrap();
        let rel = |a: &CsrMatrix<f64>, b: &CsrMatrix<f64>| {
            let (a, b) = (sparse::to_dense(a), sparse::to_dense(b));
            (&a - &b).amax() / a.amax()
        };
        assert!(rel(base.mass(), moved.mass()) < 1e-10);
        assert!(rel(base.stiffness(), moved.stiffness()) < 1e-10);

        let c = 3.5;
        let scaled = FemOperators::at_vertices(&mesh.map_vertices(|v| v * c).unwrap()).unwrap();
        let m0 = sparse::to_dense(base.mass()) * (c * c);
        assert!((m0 - sparse::to_dense(scaled.mass())).amax() < 1e-10 * c * c);
        assert!(rel(base.stiffness(), scaled.stiffness()) < 1e-10);
    }

    #[test]
    fn lambda_scale_is_positive() {
        let ops = FemOperators::at_vertices(&unit_sphere_mesh(2).unwrap()).unwrap();
        assert!(ops.lambda_scale() > 0.0 && ops.lambda_scale().is_finite());
    }
}
