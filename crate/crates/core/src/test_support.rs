//! Shared fixtures and dense oracles for unit tests.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::fem::FemOperators;
use crate::mesh::TriangleMesh;
use crate::sparse;

pub(crate) fn tetrahedron() -> TriangleMesh {
    TriangleMesh::new(
        vec![
            Vector3::new(1.0, 1.0, 1.0),
            Vector3::new(1.0, -1.0, -1.0),
            Vector3::new(-1.0, 1.0, -1.0),
            Vector3::new(-1.0, -1.0, 1.0),
        ],
        vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
    )
    .unwrap()
}

/// `(UL + λ R1 R0⁻¹ R1)⁻¹ b` with dense inverses.
pub(crate) fn dense_closed_form(
    ops: &FemOperators,
    upper_left: &DMatrix<f64>,
    lambda: f64,
    b: &DVector<f64>,
) -> DVector<f64> {
    let r0 = sparse::to_dense(ops.mass());
    let r1 = sparse::to_dense(ops.stiffness());
    let r0_inv = r0.try_inverse().unwrap();
    let system = upper_left + &r1 * r0_inv * &r1 * lambda;
    system.lu().solve(b).unwrap()
}
