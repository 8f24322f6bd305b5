//! Smallest eigenpairs of the generalized problem `R1 v = κ R0 v` by
//! shift-invert subspace iteration.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::FemOperators;
use crate::error::{Error, Result};
use crate::solver::ldl::{BlockLdl, Symbolic};
use crate::sparse;

const RESIDUAL_TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 2000;
const START_SEED: u64 = 0x5eed_e16e;

/// A discrete Laplace–Beltrami eigenpair with `vᵀ R0 v = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub eigenvalue: f64,
    pub coefficients: DVector<f64>,
}

/// The `count` smallest eigenpairs in nondecreasing order, R0-orthonormal,
/// each with its largest-magnitude coefficient positive.
pub fn lb_eigenpairs(ops: &FemOperators, count: usize) -> Result<Vec<EigenPair>> {
    let k = ops.vertex_count();
    if count == 0 {
        return Err(Error::InvalidArgument(
            "eigenpair count must be at least 1".into(),
        ));
    }
    if count > k {
        return Err(Error::DimensionMismatch {
            context: "eigenpair count",
            expected: k,
            found: count,
        });
    }
    let block = count + count.max(10);
    let mut pairs = if block >= k {
        dense_eigenpairs(ops, count)?
    } else {
        subspace_iteration(ops, count, block)?
    };
    for pair in &mut pairs {
        pair.eigenvalue = pair.eigenvalue.max(0.0);
        fix_sign(&mut pair.coefficients);
    }
    Ok(pairs)
}

fn fix_sign(v: &mut DVector<f64>) {
    if !v.is_empty() && v[v.iamax()] < 0.0 {
        v.neg_mut();
    }
}

fn inf_norm(m: &nalgebra_sparse::CsrMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.values().iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn subspace_iteration(ops: &FemOperators, count: usize, block: usize) -> Result<Vec<EigenPair>> {
    let k = ops.vertex_count();
    let (mass, stiff) = (ops.mass(), ops.stiffness());
    let trace =
        |m: &nalgebra_sparse::CsrMatrix<f64>| (0..k).map(|i| sparse::get(m, i, i)).sum::<f64>();
    let shift = 1e-3 * trace(stiff) / trace(mass);

    let (row_ptr, cols) = sparse::pattern_union(k, &[mass, stiff]);
    let blocks: Vec<[[f64; 1]; 1]> = (0..k)
        .flat_map(|i| {
            let cols = &cols;
            (row_ptr[i]..row_ptr[i + 1]).map(move |p| {
                [[sparse::get(stiff, i, cols[p]) + shift * sparse::get(mass, i, cols[p])]]
            })
        })
        .collect();
    let symbolic = Arc::new(Symbolic::analyze(k, row_ptr, cols));
    let factor = BlockLdl::<1>::factor(symbolic, &blocks)
        .map_err(|pivot| Error::SingularSystem { pivot })?;

    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut basis: Vec<DVector<f64>> = (0..block)
        .map(|j| {
            if j == 0 {
                DVector::from_element(k, 1.0)
            } else {
                DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0))
            }
        })
        .collect();
    mass_orthonormalize(ops, &mut basis);

    let scale = inf_norm(stiff) + inf_norm(mass);
    let mut worst = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let mut next: Vec<DVector<f64>> = basis
            .par_iter()
            .map(|q| {
                let rhs = sparse::spmv(mass, q.as_slice());
                let mut x: Vec<[f64; 1]> = rhs.iter().map(|&v| [v]).collect();
                factor.solve_in_place(&mut x);
                DVector::from_iterator(k, x.into_iter().map(|v| v[0]))
            })
            .collect();
        mass_orthonormalize(ops, &mut next);

        // Rayleigh-Ritz in the R0-orthonormal basis
        let stiff_cols: Vec<DVector<f64>> = next
            .iter()
            .map(|y| sparse::spmv(stiff, y.as_slice()))
            .collect();
        let p = next.len();
        let reduced = DMatrix::from_fn(p, p, |i, j| {
            0.5 * (next[i].dot(&stiff_cols[j]) + next[j].dot(&stiff_cols[i]))
        });
        let eig = reduced.symmetric_eigen();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        basis = order
            .iter()
            .map(|&c| {
                let w = eig.eigenvectors.column(c);
                next.iter()
                    .zip(w.iter())
                    .fold(DVector::zeros(k), |acc, (y, &wi)| acc + y * wi)
            })
            .collect();
        let values: Vec<f64> = order.iter().map(|&c| eig.eigenvalues[c]).collect();

        worst = (0..count)
            .map(|i| {
                let q = &basis[i];
                let r = sparse::spmv(stiff, q.as_slice())
                    - sparse::spmv(mass, q.as_slice()) * values[i];
                r.norm() / (scale * (1.0 + values[i].abs()) * q.norm())
            })
            .fold(0.0, f64::max);
        if worst < RESIDUAL_TOLERANCE {
            return Ok(basis
                .into_iter()
                .zip(values)
                .take(count)
                .map(|(coefficients, eigenvalue)| EigenPair {
                    eigenvalue,
                    coefficients,
                })
                .collect());
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: MAX_ITERATIONS,
        residual: worst,
    })
}

/// Modified Gram-Schmidt in the R0 inner product, applied twice.
fn mass_orthonormalize(ops: &FemOperators, vectors: &mut [DVector<f64>]) {
    for _ in 0..2 {
        let mut mass_images: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
        for j in 0..vectors.len() {
            let mut v = vectors[j].clone();
            for (i, mi) in mass_images.iter().enumerate() {
                let c = mi.dot(&v);
                v.axpy(-c, &vectors[i], 1.0);
            }
            let mv = sparse::spmv(ops.mass(), v.as_slice());
            let norm = v.dot(&mv).max(0.0).sqrt();
            vectors[j] = v / norm;
            mass_images.push(mv / norm);
        }
    }
}

/// Dense route for meshes too small for a proper subspace.
fn dense_eigenpairs(ops: &FemOperators, count: usize) -> Result<Vec<EigenPair>> {
    let m = sparse::to_dense(ops.mass());
    let s = sparse::to_dense(ops.stiffness());
    let chol = m.cholesky().ok_or(Error::SingularSystem { pivot: 0 })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or(Error::SingularSystem { pivot: 0 })?;
    let c = &l_inv * s * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lt_inv = l_inv.transpose();
    Ok(order
        .into_iter()
        .take(count)
        .map(|i| EigenPair {
            eigenvalue: eig.eigenvalues[i],
            coefficients: &lt_inv * eig.eigenvectors.column(i),
        })
        .collect())
}
