//! Small CSR helpers with fixed summation order.

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

/// Compresses triplets into CSR, summing duplicates.
pub(crate) fn csr_from_triplets(
    nrows: usize,
    ncols: usize,
    triplets: impl IntoIterator<Item = (usize, usize, f64)>,
) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(nrows, ncols);
    for (i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CsrMatrix::from(&coo)
}

/// `A x`.
pub(crate) fn spmv(a: &CsrMatrix<f64>, x: &[f64]) -> DVector<f64> {
    debug_assert_eq!(a.ncols(), x.len());
    DVector::from_iterator(
        a.nrows(),
        a.row_iter().map(|row| {
            row.col_indices()
                .iter()
                .zip(row.values())
                .map(|(&j, v)| v * x[j])
                .sum::<f64>()
        }),
    )
}

/// `Aᵀ x`.
pub(crate) fn spmv_t(a: &CsrMatrix<f64>, x: &[f64]) -> DVector<f64> {
    debug_assert_eq!(a.nrows(), x.len());
    let mut out = DVector::zeros(a.ncols());
    for (i, row) in a.row_iter().enumerate() {
        let xi = x[i];
        for (&j, v) in row.col_indices().iter().zip(row.values()) {
            out[j] += v * xi;
        }
    }
    out
}

/// `aᵀ M b`.
pub(crate) fn bilinear(m: &CsrMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    m.row_iter()
        .enumerate()
        .map(|(i, row)| {
            a[i] * row
                .col_indices()
                .iter()
                .zip(row.values())
                .map(|(&j, v)| v * b[j])
                .sum::<f64>()
        })
        .sum()
}

/// Value at `(i, j)` or zero when not stored.
pub(crate) fn get(m: &CsrMatrix<f64>, i: usize, j: usize) -> f64 {
    let row = m.row(i);
    match row.col_indices().binary_search(&j) {
        Ok(p) => row.values()[p],
        Err(_) => 0.0,
    }
}

/// Dense copy, for oracles and small problems.
pub(crate) fn to_dense(m: &CsrMatrix<f64>) -> nalgebra::DMatrix<f64> {
    let mut d = nalgebra::DMatrix::zeros(m.nrows(), m.ncols());
    for (i, row) in m.row_iter().enumerate() {
        for (&j, v) in row.col_indices().iter().zip(row.values()) {
            d[(i, j)] += v;
        }
    }
    d
}

/// Sorted union of the column patterns of several square matrices, with the
/// diagonal always present. Returns CSR row pointers and column indices.
pub(crate) fn pattern_union(n: usize, mats: &[&CsrMatrix<f64>]) -> (Vec<usize>, Vec<usize>) {
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    row_ptr.push(0);
    let mut scratch = Vec::new();
    for i in 0..n {
        scratch.clear();
        scratch.push(i);
        for m in mats {
            scratch.extend_from_slice(m.row(i).col_indices());
        }
        scratch.sort_unstable();
        scratch.dedup();
        cols.extend_from_slice(&scratch);
        row_ptr.push(cols.len());
    }
    (row_ptr, cols)
}
