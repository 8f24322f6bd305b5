//! Comparison of estimated components with a known truth, and the plain
//! multivariate PCA baseline.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::smfpca::{fix_sign, DataMatrix, SmFpcaResult};

/// Relative size of a QR diagonal entry below which a basis counts as rank
/// deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// One multivariate PCA component, with the loading read as vertex values
/// of a piecewise linear function.
#[derive(Debug, Clone, PartialEq)]
pub struct MvPcaComponent {
    /// Unit left singular vector.
    pub scores: DVector<f64>,
    /// Finite element coefficients, `fᵀR0f = 1`.
    pub f: DVector<f64>,
    pub singular_value: f64,
}

/// PCA of the column-centered data. Locations must be exactly the mesh
/// vertices (in any order).
pub fn mv_pca(
    x: &DataMatrix,
    n_components: usize,
    ops: &FemOperators,
) -> Result<Vec<MvPcaComponent>> {
    let rank = x.samples().min(x.locations());
    if n_components == 0 || n_components > rank {
        return Err(Error::DimensionMismatch {
            context: "MV-PCA component count",
            expected: rank,
            found: n_components,
        });
    }
    if x.locations() != ops.location_count() {
        return Err(Error::DimensionMismatch {
            context: "data columns vs sampling locations",
            expected: ops.location_count(),
            found: x.locations(),
        });
    }
    let permutation = ops.vertex_permutation().ok_or_else(|| {
        Error::InvalidArgument("MV-PCA loadings need one location at every mesh vertex".into())
    })?;
    let centered = if x.is_centered() {
        x.clone()
    } else {
        x.center().0
    };
    let svd = centered.values().clone().svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    order
        .into_iter()
        .take(n_components)
        .map(|c| {
            let mut f = DVector::zeros(ops.vertex_count());
            for (j, &vertex) in permutation.iter().enumerate() {
                f[vertex] = v_t[(c, j)];
            }
            let norm = ops.l2_norm(&f)?;
            f /= norm;
            let mut scores = u.column(c).into_owned();
            if fix_sign(&mut f) {
                scores.neg_mut();
            }
            Ok(MvPcaComponent {
                scores,
                f,
                singular_value: svd.singular_values[c],
            })
        })
        .collect()
}

/// Mean squared difference, minimized over the sign of `estimate`.
pub fn mse(estimate: &DVector<f64>, truth: &DVector<f64>) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "mse arguments",
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("mse of empty vectors".into()));
    }
    let n = truth.len() as f64;
    let plus = (estimate - truth).norm_squared() / n;
    let minus = (estimate + truth).norm_squared() / n;
    Ok(plus.min(minus))
}

/// Largest principal angle between the column spans of `a` and `b`.
pub fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            context: "principal angle bases",
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let qa = orthonormal_basis(a, "true basis")?;
    let qb = orthonormal_basis(b, "estimated basis")?;
    let cross = qa.transpose() * &qb;
    let rho = cross
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .clamp(0.0, 1.0);
    if rho < FRAC_1_SQRT_2 || a.ncols() != b.ncols() {
        return Ok(rho.acos());
    }
    // acos loses half the digits near 1; use the sine from the residual of
    // projecting one basis onto the other.
    let residual = &qb - &qa * cross;
    let sine = residual.singular_values().max().clamp(0.0, 1.0);
    Ok(sine.asin())
}

fn orthonormal_basis(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    if m.ncols() == 0 || m.ncols() > m.nrows() {
        return Err(Error::RankDeficient { context });
    }
    let qr = m.clone().qr();
    let r = qr.r();
    let scale = m.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 || (0..r.ncols()).any(|j| r[(j, j)].abs() <= RANK_TOLERANCE * scale) {
        return Err(Error::RankDeficient { context });
    }
    Ok(qr.q())
}

/// Accuracy of a fit against the generating truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EvaluationReport {
    /// Per component, over mesh vertices.
    pub pc_function_mse: Vec<f64>,
    /// Per component, unnormalized scores against the true scores.
    pub score_mse: Vec<f64>,
    /// Reconstructed against noise-free signal over all functions and
    /// locations.
    pub signal_mse: f64,
    pub principal_angle: f64,
    /// Cumulative adjusted variance as a fraction of the fitted data's total.
    pub explained_variance_curve: Vec<f64>,
}

/// Estimated components described by loading coefficients, unnormalized
/// scores and the subtracted mean field.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub loadings: Vec<DVector<f64>>,
    pub scores: Vec<DVector<f64>>,
    pub mean_field: DVector<f64>,
    /// True when the scores refer to column-centered data.
    pub centered: bool,
    pub cumulative_variance: Vec<f64>,
    pub total_variance: f64,
}

impl Estimate {
    pub fn from_result(result: &SmFpcaResult) -> Self {
        Self {
            loadings: result.components.iter().map(|c| c.f.clone()).collect(),
            scores: result
                .components
                .iter()
                .map(|c| c.unnormalized_scores())
                .collect(),
            mean_field: result.mean_field.clone(),
            centered: result.centered,
            cumulative_variance: result.cumulative_variance.clone(),
            total_variance: result.total_variance,
        }
    }

    /// MV-PCA components in the same form; the mean is recomputed from `x`.
    pub fn from_mv_pca(
        components: &[MvPcaComponent],
        x: &DataMatrix,
        ops: &FemOperators,
    ) -> Result<Self> {
        let (centered, mean_field) = x.center();
        let total_variance = centered.values().norm_squared();
        let mut cumulative = 0.0;
        let mut cumulative_variance = Vec::with_capacity(components.len());
        let mut scores = Vec::with_capacity(components.len());
        for c in components {
            // The Euclidean unit loading is Ψf / ‖Ψf‖.
            let scale = c.singular_value / ops.evaluate(&c.f)?.norm();
            scores.push(&c.scores * scale);
            cumulative += c.singular_value * c.singular_value;
            cumulative_variance.push(cumulative);
        }
        Ok(Self {
            loadings: components.iter().map(|c| c.f.clone()).collect(),
            scores,
            mean_field,
            centered: true,
            cumulative_variance,
            total_variance,
        })
    }
}

/// Compares the first `min(L_est, L_true)` components in order. Scores are
/// compared with column-centered true scores when the estimate is centered.
pub fn evaluate(
    estimate: &Estimate,
    true_components: &[DVector<f64>],
    true_scores: &DMatrix<f64>,
    ops: &FemOperators,
) -> Result<EvaluationReport> {
    let m = estimate.loadings.len().min(true_components.len());
    if m == 0 {
        return Err(Error::InvalidArgument("nothing to evaluate".into()));
    }
    if true_scores.ncols() != true_components.len() {
        return Err(Error::DimensionMismatch {
            context: "true score columns",
            expected: true_components.len(),
            found: true_scores.ncols(),
        });
    }
    let pc_function_mse = (0..m)
        .map(|l| mse(&estimate.loadings[l], &true_components[l]))
        .collect::<Result<Vec<_>>>()?;
    let reference_scores = if estimate.centered {
        center_columns(true_scores)
    } else {
        true_scores.clone()
    };
    let score_mse = (0..m)
        .map(|l| {
            mse(
                &estimate.scores[l],
                &reference_scores.column(l).into_owned(),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let n = true_scores.nrows();
    let s = ops.location_count();
    let true_evals = true_components
        .iter()
        .map(|c| ops.evaluate(c))
        .collect::<Result<Vec<_>>>()?;
    let est_evals = estimate
        .loadings
        .iter()
        .map(|c| ops.evaluate(c))
        .collect::<Result<Vec<_>>>()?;
    if estimate.scores.iter().any(|sc| sc.len() != n) || estimate.mean_field.len() != s {
        return Err(Error::DimensionMismatch {
            context: "estimate scores or mean field",
            expected: n,
            found: estimate.scores.first().map_or(0, |sc| sc.len()),
        });
    }
    let mut signal_sq = 0.0;
    for j in 0..s {
        for i in 0..n {
            let truth: f64 = true_evals
                .iter()
                .enumerate()
                .map(|(l, e)| true_scores[(i, l)] * e[j])
                .sum();
            let fitted: f64 = estimate.mean_field[j]
                + est_evals
                    .iter()
                    .zip(&estimate.scores)
                    .map(|(e, sc)| sc[i] * e[j])
                    .sum::<f64>();
            signal_sq += (truth - fitted).powi(2);
        }
    }

    let truth_basis = DMatrix::from_columns(&true_components[..m]);
    let est_basis = DMatrix::from_columns(&estimate.loadings[..m]);
    let principal_angle = principal_angle(&truth_basis, &est_basis)?;
    let explained_variance_curve = if estimate.total_variance > 0.0 {
        estimate
            .cumulative_variance
            .iter()
            .map(|v| v / estimate.total_variance)
            .collect()
    } else {
        vec![0.0; estimate.cumulative_variance.len()]
    };
    Ok(EvaluationReport {
        pc_function_mse,
        score_mse,
        signal_mse: signal_sq / (n * s) as f64,
        principal_angle,
        explained_variance_curve,
    })
}

/// Columns of `scores` minus their means.
pub fn center_columns(scores: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = scores.clone();
    let n = scores.nrows() as f64;
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}
