//! Factorization of the penalized regression saddle-point system
//!
//! ```text
//! [ UL     λ R1 ] [f]   [rhs]
//! [ λ R1  -λ R0 ] [g] = [ 0 ]
//! ```
//!
//! The unknowns are grouped per vertex as `(f_k, g_k)` pairs and factored as
//! a sparse LDLᵀ with 2×2 pivots. For a connected mesh, `λ > 0` and a
//! positive semidefinite `UL` whose kernel excludes constants, every leading
//! block submatrix (in any vertex order) has inertia `(j, j)` and is
//! nonsingular, so the 2×2 pivots never break down and no dynamic pivoting
//! is needed.

pub(crate) mod ldl;
mod ordering;

use std::sync::Arc;

use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::sparse;

use ldl::{Block, BlockLdl, Symbolic};

/// Fill-reducing ordering and elimination structure, reusable across λ and
/// across upper-left blocks sharing the mesh pattern.
#[derive(Debug, Clone)]
pub struct SaddleSymbolic {
    inner: Arc<Symbolic>,
}

impl SaddleSymbolic {
    /// Analyzes the union pattern of `upper_left`, the stiffness and the
    /// mass matrix.
    pub fn analyze(ops: &FemOperators, upper_left: &CsrMatrix<f64>) -> Result<Self> {
        check_square(ops, upper_left)?;
        let k = ops.vertex_count();
        let (row_ptr, cols) = sparse::pattern_union(k, &[upper_left, ops.stiffness(), ops.mass()]);
        Ok(Self {
            inner: Arc::new(Symbolic::analyze(k, row_ptr, cols)),
        })
    }

    /// Analysis for the mesh pattern alone; valid for any upper-left block
    /// built from basis evaluations on the same mesh.
    pub fn for_mesh(ops: &FemOperators) -> Self {
        let k = ops.vertex_count();
        let (row_ptr, cols) = sparse::pattern_union(k, &[ops.stiffness(), ops.mass()]);
        Self {
            inner: Arc::new(Symbolic::analyze(k, row_ptr, cols)),
        }
    }

    /// Stored block nonzeros in the strictly lower part of the factor.
    pub fn factor_blocks(&self) -> usize {
        self.inner.factor_blocks()
    }
}

/// A factored saddle-point system for one λ and one upper-left block.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    lambda: f64,
    factor: BlockLdl<2>,
    k: usize,
}

impl SaddleSystem {
    pub fn build(ops: &FemOperators, upper_left: &CsrMatrix<f64>, lambda: f64) -> Result<Self> {
        let symbolic = SaddleSymbolic::analyze(ops, upper_left)?;
        Self::build_with(&symbolic, ops, upper_left, lambda)
    }

    /// Numeric factorization reusing a previous analysis.
    pub fn build_with(
        symbolic: &SaddleSymbolic,
        ops: &FemOperators,
        upper_left: &CsrMatrix<f64>,
        lambda: f64,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        check_square(ops, upper_left)?;
        let sym = &symbolic.inner;
        let k = ops.vertex_count();
        if sym.size() != k {
            return Err(Error::DimensionMismatch {
                context: "symbolic analysis size",
                expected: k,
                found: sym.size(),
            });
        }

        let (row_ptr, cols) = (sym.row_ptr(), sym.cols());
        let mut blocks: Vec<Block<2>> = Vec::with_capacity(cols.len());
        for i in 0..k {
            let pattern = &cols[row_ptr[i]..row_ptr[i + 1]];
            for (matrix, name) in [
                (upper_left, "upper-left block"),
                (ops.stiffness(), "stiffness"),
                (ops.mass(), "mass"),
            ] {
                if let Some(&j) = matrix
                    .row(i)
                    .col_indices()
                    .iter()
                    .find(|j| pattern.binary_search(j).is_err())
                {
                    return Err(Error::InvalidArgument(format!(
                        "{name} entry ({i}, {j}) is outside the analyzed pattern"
                    )));
                }
            }
            for &j in pattern {
                let a = sparse::get(upper_left, i, j);
                let r1 = lambda * sparse::get(ops.stiffness(), i, j);
                let r0 = lambda * sparse::get(ops.mass(), i, j);
                blocks.push([[a, r1], [r1, -r0]]);
            }
        }

        let factor = BlockLdl::factor(Arc::clone(sym), &blocks)
            .map_err(|pivot| Error::SingularSystem { pivot })?;
        Ok(Self { lambda, factor, k })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn size(&self) -> usize {
        self.k
    }

    /// Solves with top right-hand side `rhs_top` and zero bottom block.
    pub fn solve(&self, rhs_top: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if rhs_top.len() != self.k {
            return Err(Error::DimensionMismatch {
                context: "saddle system right-hand side",
                expected: self.k,
                found: rhs_top.len(),
            });
        }
        let mut x: Vec<[f64; 2]> = rhs_top.iter().map(|&v| [v, 0.0]).collect();
        self.factor.solve_in_place(&mut x);
        let f = DVector::from_iterator(self.k, x.iter().map(|p| p[0]));
        let g = DVector::from_iterator(self.k, x.iter().map(|p| p[1]));
        Ok((f, g))
    }

    /// Solves with both blocks of the right-hand side given.
    pub fn solve_full(
        &self,
        top: &DVector<f64>,
        bottom: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        if top.len() != self.k || bottom.len() != self.k {
            return Err(Error::DimensionMismatch {
                context: "saddle system right-hand side",
                expected: self.k,
                found: top.len().max(bottom.len()),
            });
        }
        let mut x: Vec<[f64; 2]> = top
            .iter()
            .zip(bottom.iter())
            .map(|(&a, &b)| [a, b])
            .collect();
        self.factor.solve_in_place(&mut x);
        Ok((
            DVector::from_iterator(self.k, x.iter().map(|p| p[0])),
            DVector::from_iterator(self.k, x.iter().map(|p| p[1])),
        ))
    }
}

/// The assembled `2K×2K` block matrix with unknowns ordered `[f; g]`.
pub fn block_matrix(
    ops: &FemOperators,
    upper_left: &CsrMatrix<f64>,
    lambda: f64,
) -> Result<CsrMatrix<f64>> {
    check_square(ops, upper_left)?;
    let k = ops.vertex_count();
    let mut triplets = Vec::new();
    let entries = |m: &CsrMatrix<f64>| -> Vec<(usize, usize, f64)> {
        m.triplet_iter().map(|(i, j, v)| (i, j, *v)).collect()
    };
    triplets.extend(entries(upper_left));
    for (i, j, v) in entries(ops.stiffness()) {
        triplets.push((i, k + j, lambda * v));
        triplets.push((k + i, j, lambda * v));
    }
    for (i, j, v) in entries(ops.mass()) {
        triplets.push((k + i, k + j, -lambda * v));
    }
    Ok(sparse::csr_from_triplets(2 * k, 2 * k, triplets))
}

/// Fraction of stored entries in the assembled block matrix.
pub fn block_density(ops: &FemOperators, upper_left: &CsrMatrix<f64>) -> Result<f64> {
    let m = block_matrix(ops, upper_left, 1.0)?;
    let n = m.nrows() as f64;
    Ok(m.nnz() as f64 / (n * n))
}

fn check_square(ops: &FemOperators, upper_left: &CsrMatrix<f64>) -> Result<()> {
    let k = ops.vertex_count();
    for dim in [upper_left.nrows(), upper_left.ncols()] {
        if dim != k {
            return Err(Error::DimensionMismatch {
                context: "upper-left block",
                expected: k,
                found: dim,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::FemOperators;
    use crate::mesh::unit_sphere_mesh;
    use crate::test_support::{dense_closed_form, tetrahedron};
    use nalgebra::DMatrix;

    fn rhs(k: usize) -> DVector<f64> {
        DVector::from_fn(k, |i, _| (1.3 * i as f64).cos() + 0.2)
    }

    #[test]
    fn tetrahedron_matches_dense_lu() {
        let mesh = tetrahedron();
        let ops = FemOperators::at_vertices(&mesh).unwrap();
        let ul = ops.psi_t_psi();
        let sys = SaddleSystem::build(&ops, &ul, 1.0).unwrap();
        let b = rhs(4);
        let (f, g) = sys.solve(&b).unwrap();

        let dense = sparse::to_dense(&block_matrix(&ops, &ul, 1.0).unwrap());
        let mut full = DVector::zeros(8);
        full.rows_mut(0, 4).copy_from(&b);
        let x = dense.lu().solve(&full).unwrap();
        for i in 0..4 {
            assert!((f[i] - x[i]).abs() < 1e-10);
            assert!((g[i] - x[4 + i]).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_closed_form_on_small_sphere() {
        let mesh = unit_sphere_mesh(1).unwrap();
        let ops = FemOperators::at_vertices(&mesh).unwrap();
        let ul = ops.psi_t_psi();
        let b = rhs(ops.vertex_count());
        for lambda in [1e-4, 1.0, 1e4] {
            let (f, _) = SaddleSystem::build(&ops, &ul, lambda)
                .unwrap()
                .solve(&b)
                .unwrap();
            let oracle = dense_closed_form(&ops, &sparse::to_dense(&ul), lambda, &b);
            assert!(
                (&f - &oracle).norm() <= 1e-8 * oracle.norm(),
                "lambda {lambda}"
            );
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mesh = unit_sphere_mesh(1).unwrap();
        let ops = FemOperators::at_vertices(&mesh).unwrap();
        let sys = SaddleSystem::build(&ops, &ops.psi_t_psi(), 0.5).unwrap();
        let (f, g) = sys.solve(&DVector::zeros(42)).unwrap();
        assert_eq!(f.norm(), 0.0);
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn auxiliary_field_satisfies_first_block_row() {
        let mesh = unit_sphere_mesh(2).unwrap();
        let ops = FemOperators::at_vertices(&mesh).unwrap();
        let sys = SaddleSystem::build(&ops, &ops.psi_t_psi(), 0.1).unwrap();
        let (f, g) = sys.solve(&rhs(ops.vertex_count())).unwrap();
        let r0g = sparse::spmv(ops.mass(), g.as_slice());
        let r1f = sparse::spmv(ops.stiffness(), f.as_slice());
        assert!((&r0g - &r1f).norm() <= 1e-8 * r1f.norm());
    }

    #[test]
    fn huge_lambda_flattens_solution() {
        let mesh = unit_sphere_mesh(2).unwrap();
        let ops = FemOperators::at_vertices(&mesh).unwrap();
        let sys = SaddleSystem::build(&ops, &ops.psi_t_psi(), 1e12).unwrap();
        let b = rhs(ops.vertex_count());
        let (f, _) = sys.solve(&b).unwrap();
        let r1f = sparse::spmv(ops.stiffness(), f.as_slice());
        assert!(r1f.norm() < 1e-8 * f.norm());
        // constant equal to the mean of the data
        let mean = b.mean();
        assert!(f.iter().all(|v| (v - mean).abs() < 1e-6));
    }

    #[test]
    fn factorization_reproduces_matrix() {
        let mesh = unit_sphere_mesh(1).unwrap();
        let ops = FemOperators::at_vertices(&mesh).unwrap();
        let ul = ops.psi_t_psi();
        let lambda = 0.3;
        let sys = SaddleSystem::build(&ops, &ul, lambda).unwrap();
        let dense = sparse::to_dense(&block_matrix(&ops, &ul, lambda).unwrap());
        let k = ops.vertex_count();
        let mut recovered = DMatrix::zeros(2 * k, 2 * k);
        for c in 0..2 * k {
            let col = dense.column(c);
            let (f, g) = sys
                .solve_full(&col.rows(0, k).into_owned(), &col.rows(k, k).into_owned())
                .unwrap();
            recovered.view_mut((0, c), (k, 1)).copy_from(&f);
            recovered.view_mut((k, c), (k, 1)).copy_from(&g);
        }
        assert!((recovered - DMatrix::identity(2 * k, 2 * k)).amax() < 1e-8);
    }

    #[test]
    fn rebuild_is_bitwise_identical_and_reusable() {
        let mesh = unit_sphere_mesh(2).unwrap();
        let ops = FemOperators::at_vertices(&mesh).unwrap();
        let ul = ops.psi_t_psi();
        let b = rhs(ops.vertex_count());
        let once = SaddleSystem::build(&ops, &ul, 0.7).unwrap();
        let symbolic = SaddleSymbolic::for_mesh(&ops);
        for _ in 0..100 {
            let fresh = SaddleSystem::build_with(&symbolic, &ops, &ul, 0.7).unwrap();
            assert_eq!(fresh.solve(&b).unwrap(), once.solve(&b).unwrap());
        }
    }

    #[test]
    fn continuity_in_lambda() {
        let mesh = unit_sphere_mesh(2).unwrap();
        let ops = FemOperators::at_vertices(&mesh).unwrap();
        let ul = ops.psi_t_psi();
        let b = rhs(ops.vertex_count());
        for lambda in [1e-3, 1.0, 100.0] {
            let (f1, _) = SaddleSystem::build(&ops, &ul, lambda)
                .unwrap()
                .solve(&b)
                .unwrap();
            let (f2, _) = SaddleSystem::build(&ops, &ul, lambda * (1.0 + 1e-6))
                .unwrap()
                .solve(&b)
                .unwrap();
            assert!((&f1 - &f2).norm() / f1.norm() < 1e-4);
        }
    }

    #[test]
    fn rejects_bad_lambda_and_shapes() {
        let ops = FemOperators::at_vertices(&tetrahedron()).unwrap();
        let ul = ops.psi_t_psi();
        assert!(SaddleSystem::build(&ops, &ul, 0.0).is_err());
        assert!(SaddleSystem::build(&ops, &ul, f64::NAN).is_err());
        let sys = SaddleSystem::build(&ops, &ul, 1.0).unwrap();
        assert!(matches!(
            sys.solve(&DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unobserved_component_is_singular() {
        // two disjoint tetrahedra, data only on the first
        let t = tetrahedron();
        let mut verts = t.vertices().to_vec();
        verts.extend(
            t.vertices()
                .iter()
                .map(|v| v + nalgebra::Vector3::new(5.0, 0.0, 0.0)),
        );
        let mut tris = t.triangles().to_vec();
        tris.extend(t.triangles().iter().map(|tr| tr.map(|i| i + 4)));
        let mesh = crate::mesh::TriangleMesh::new(verts, tris).unwrap();
        let locs: Vec<_> = (0..4).map(|v| mesh.vertex_location(v)).collect();
        let ops = FemOperators::assemble(&mesh, locs).unwrap();
        assert!(matches!(
            SaddleSystem::build(&ops, &ops.psi_t_psi(), 1.0),
            Err(Error::SingularSystem { .. })
        ));
    }
}
