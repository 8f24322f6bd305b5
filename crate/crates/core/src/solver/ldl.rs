//! Up-looking sparse LDLᵀ over dense `B×B` blocks.
//!
//! Each node of the graph carries a `B×B` diagonal pivot, so `B = 2` gives
//! the 2×2 symmetric-indefinite pivots needed by the saddle-point system
//! and `B = 1` is a plain sparse LDLᵀ.

use std::sync::Arc;

use super::ordering::minimum_degree;

pub(crate) type Block<const B: usize> = [[f64; B]; B];

const NONE: usize = usize::MAX;

/// Relative threshold on a pivot determinant below which the system is
/// treated as singular.
const PIVOT_TOLERANCE: f64 = 1e-14;

/// Ordering, elimination tree and column layout of `L` for a node pattern.
#[derive(Debug)]
pub(crate) struct Symbolic {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    inv: Vec<usize>,
    parent: Vec<usize>,
    col_ptr: Vec<usize>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl Symbolic {
    /// `row_ptr`/`cols` is a full symmetric CSR pattern including the
    /// diagonal.
    pub(crate) fn analyze(n: usize, row_ptr: Vec<usize>, cols: Vec<usize>) -> Self {
        let perm = minimum_degree(n, &row_ptr, &cols);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            let a = perm[k];
            for &b in &cols[row_ptr[a]..row_ptr[a + 1]] {
                let mut i = inv[b];
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        for k in 0..n {
            col_ptr.push(col_ptr[k] + lnz[k]);
        }

        Self {
            n,
            perm,
            inv,
            parent,
            col_ptr,
            row_ptr,
            cols,
        }
    }

    pub(crate) fn size(&self) -> usize {
        self.n
    }

    pub(crate) fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub(crate) fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Strictly-lower block nonzeros of `L`.
    pub(crate) fn factor_blocks(&self) -> usize {
        self.col_ptr[self.n]
    }
}

/// Numeric factor `P A Pᵀ = L D Lᵀ` with unit block-lower `L`.
#[derive(Debug, Clone)]
pub(crate) struct BlockLdl<const B: usize> {
    symbolic: Arc<Symbolic>,
    row_idx: Vec<usize>,
    values: Vec<Block<B>>,
    dinv: Vec<Block<B>>,
}

impl<const B: usize> BlockLdl<B> {
    /// Factors the matrix whose blocks are given in the pattern order of
    /// `symbolic` (`blocks[p]` is the block at row `i`, column `cols[p]`).
    /// On breakdown returns the original index of the failing node.
    pub(crate) fn factor(symbolic: Arc<Symbolic>, blocks: &[Block<B>]) -> Result<Self, usize> {
        let sym = &*symbolic;
        let n = sym.n;
        debug_assert_eq!(blocks.len(), sym.cols.len());
        let nnz = sym.factor_blocks();
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![zero::<B>(); nnz];
        let mut dinv = vec![zero::<B>(); n];

        let mut y = vec![zero::<B>(); n];
        let mut flag = vec![NONE; n];
        let mut pattern = vec![0usize; n];
        let mut lnz = vec![0usize; n];

        for k in 0..n {
            let a = sym.perm[k];
            let mut top = n;
            flag[k] = k;
            let mut diag_scale = [0.0; B];
            for p in sym.row_ptr[a]..sym.row_ptr[a + 1] {
                let b = sym.cols[p];
                let i = sym.inv[b];
                if i > k {
                    continue;
                }
                // permuted block (i, k) = A[b][a] = A[a][b]ᵀ
                add_assign(&mut y[i], &transpose(&blocks[p]));
                if i == k {
                    for (r, s) in diag_scale.iter_mut().enumerate() {
                        *s = blocks[p][r].iter().map(|v| v.abs()).sum();
                    }
                }
                let mut len = 0;
                let mut j = i;
                while flag[j] != k {
                    pattern[len] = j;
                    len += 1;
                    flag[j] = k;
                    j = sym.parent[j];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }

            let mut d = std::mem::replace(&mut y[k], zero::<B>());
            for &i in &pattern[top..n] {
                let yi = std::mem::replace(&mut y[i], zero::<B>());
                let start = sym.col_ptr[i];
                let end = start + lnz[i];
                for p in start..end {
                    sub_assign(&mut y[row_idx[p]], &mul(&values[p], &yi));
                }
                let l_ki = transpose(&mul(&dinv[i], &yi));
                sub_assign(&mut d, &mul(&l_ki, &yi));
                row_idx[end] = k;
                values[end] = l_ki;
                lnz[i] += 1;
            }

            dinv[k] = invert(&d, &diag_scale).ok_or(a)?;
        }

        Ok(Self {
            symbolic,
            row_idx,
            values,
            dinv,
        })
    }

    /// Solves `A x = b` in place; `x` is indexed by original node.
    pub(crate) fn solve_in_place(&self, x: &mut [[f64; B]]) {
        let sym = &*self.symbolic;
        let n = sym.n;
        debug_assert_eq!(x.len(), n);
        let mut y: Vec<[f64; B]> = sym.perm.iter().map(|&old| x[old]).collect();

        for j in 0..n {
            let yj = y[j];
            for p in sym.col_ptr[j]..sym.col_ptr[j + 1] {
                let r = self.row_idx[p];
                let v = mul_vec(&self.values[p], &yj);
                for c in 0..B {
                    y[r][c] -= v[c];
                }
            }
        }
        for j in 0..n {
            y[j] = mul_vec(&self.dinv[j], &y[j]);
        }
        for j in (0..n).rev() {
            let mut acc = y[j];
            for p in sym.col_ptr[j]..sym.col_ptr[j + 1] {
                let v = mul_t_vec(&self.values[p], &y[self.row_idx[p]]);
                for c in 0..B {
                    acc[c] -= v[c];
                }
            }
            y[j] = acc;
        }

        for (new, &old) in sym.perm.iter().enumerate() {
            x[old] = y[new];
        }
    }
}

fn zero<const B: usize>() -> Block<B> {
    [[0.0; B]; B]
}

fn transpose<const B: usize>(a: &Block<B>) -> Block<B> {
    let mut t = zero::<B>();
    for i in 0..B {
        for j in 0..B {
            t[j][i] = a[i][j];
        }
    }
    t
}

fn mul<const B: usize>(a: &Block<B>, b: &Block<B>) -> Block<B> {
    let mut c = zero::<B>();
    for i in 0..B {
        for k in 0..B {
            for j in 0..B {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn mul_vec<const B: usize>(a: &Block<B>, x: &[f64; B]) -> [f64; B] {
    let mut out = [0.0; B];
    for i in 0..B {
        for j in 0..B {
            out[i] += a[i][j] * x[j];
        }
    }
    out
}

fn mul_t_vec<const B: usize>(a: &Block<B>, x: &[f64; B]) -> [f64; B] {
    let mut out = [0.0; B];
    for i in 0..B {
        for j in 0..B {
            out[j] += a[i][j] * x[i];
        }
    }
    out
}

fn add_assign<const B: usize>(a: &mut Block<B>, b: &Block<B>) {
    for i in 0..B {
        for j in 0..B {
            a[i][j] += b[i][j];
        }
    }
}

fn sub_assign<const B: usize>(a: &mut Block<B>, b: &Block<B>) {
    for i in 0..B {
        for j in 0..B {
            a[i][j] -= b[i][j];
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting. `None` when the determinant
/// is negligible relative to the product of the original row scales.
fn invert<const B: usize>(d: &Block<B>, row_scale: &[f64; B]) -> Option<Block<B>> {
    let mut a = *d;
    let mut inv = zero::<B>();
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut det = 1.0;
    for c in 0..B {
        let p = (c..B).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if p != c {
            a.swap(p, c);
            inv.swap(p, c);
            det = -det;
        }
        let piv = a[c][c];
        det *= piv;
        if piv == 0.0 || !piv.is_finite() {
            return None;
        }
        for j in 0..B {
            a[c][j] /= piv;
            inv[c][j] /= piv;
        }
        for r in 0..B {
            if r != c {
                let f = a[r][c];
                if f != 0.0 {
                    for j in 0..B {
                        a[r][j] -= f * a[c][j];
                        inv[r][j] -= f * inv[c][j];
                    }
                }
            }
        }
    }
    let scale: f64 = row_scale.iter().product();
    if !(det.is_finite() && det.abs() > PIVOT_TOLERANCE * scale) {
        return None;
    }
    Some(inv)
}
