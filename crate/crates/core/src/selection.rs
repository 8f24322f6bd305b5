//! Choice of the smoothing parameter λ over a grid, by K-fold
//! cross-validation over functions or by generalized cross-validation of the
//! regression step.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::smfpca::{self, DataMatrix, FitOptions};
use crate::solver::SaddleSystem;

/// Above this many locations the smoother trace is estimated stochastically.
pub const EXACT_TRACE_LIMIT: usize = 2000;
pub const HUTCHINSON_PROBES: usize = 64;
const HUTCHINSON_SEED: u64 = 0x6c76_7472;
/// GCV is undefined once `1 − tr S / s` drops to this level.
const DEGENERATE_DENOMINATOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    KFold,
    Gcv,
}

/// Scores over a λ grid and the index of the (first) minimizer.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectionTrace {
    pub method: SelectionMethod,
    pub lambda_grid: Vec<f64>,
    pub scores: Vec<f64>,
    pub chosen: usize,
}

impl SelectionTrace {
    pub fn new(method: SelectionMethod, lambda_grid: Vec<f64>, scores: Vec<f64>) -> Result<Self> {
        let mut chosen = None;
        for (i, &s) in scores.iter().enumerate() {
            if s.is_finite() && chosen.is_none_or(|c: usize| s < scores[c]) {
                chosen = Some(i);
            }
        }
        let chosen = match (chosen, method) {
            (Some(c), _) => c,
            (None, SelectionMethod::Gcv) => return Err(Error::DegenerateSmoother),
            (None, SelectionMethod::KFold) => {
                return Err(Error::DegenerateData(
                    "cross-validation score is not finite for any lambda".into(),
                ))
            }
        };
        Ok(Self {
            method,
            lambda_grid,
            scores,
            chosen,
        })
    }

    pub fn chosen_lambda(&self) -> f64 {
        self.lambda_grid[self.chosen]
    }
}

/// 13 values log-spaced over `[1e-6, 1e2]`, times [`FemOperators::lambda_scale`].
pub fn default_lambda_grid(ops: &FemOperators) -> Vec<f64> {
    let scale = ops.lambda_scale();
    (0..13)
        .map(|k| scale * 10f64.powf(-6.0 + 8.0 * k as f64 / 12.0))
        .collect()
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "lambda grid values must be positive and finite, got {bad}"
        )));
    }
    Ok(())
}

/// Fold index of each of `n` rows after a seeded shuffle; fold sizes differ
/// by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidFoldCount { folds, rows: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (position, &row) in order.iter().enumerate() {
        assignment[row] = position % folds;
    }
    Ok(assignment)
}

/// K-fold cross-validation of a single component over rows of `x`.
pub fn kfold_select(
    x: &DataMatrix,
    lambda_grid: &[f64],
    folds: usize,
    seed: u64,
    ops: &FemOperators,
    opts: &FitOptions,
) -> Result<SelectionTrace> {
    check_grid(lambda_grid)?;
    let systems = smfpca::build_systems(ops, lambda_grid)?;
    kfold_with_systems(x, lambda_grid, &systems, folds, seed, ops, opts)
}

pub(crate) fn kfold_with_systems(
    x: &DataMatrix,
    lambda_grid: &[f64],
    systems: &[SaddleSystem],
    folds: usize,
    seed: u64,
    ops: &FemOperators,
    opts: &FitOptions,
) -> Result<SelectionTrace> {
    let assignment = fold_assignment(x.samples(), folds, seed)?;
    let splits: Vec<(DataMatrix, DataMatrix)> = (0..folds)
        .map(|fold| {
            let (train, validate): (Vec<usize>, Vec<usize>) =
                (0..x.samples()).partition(|&i| assignment[i] != fold);
            (x.select_rows(&train), x.select_rows(&validate))
        })
        .collect();
    let denominator = (x.samples() * x.locations()) as f64;

    let scores: Vec<f64> = systems
        .par_iter()
        .map(|system| {
            let mut total = 0.0;
            for (train, validate) in &splits {
                let c = smfpca::fit_component_with(train, system, ops, opts)?;
                let f_s = ops.evaluate(&c.f)?;
                let shrink = f_s.norm_squared() + system.lambda() * ops.l2_inner(&c.g, &c.g)?;
                let u = validate.values() * &f_s / shrink;
                for j in 0..validate.locations() {
                    for i in 0..validate.samples() {
                        let r = validate.values()[(i, j)] - u[i] * f_s[j];
                        total += r * r;
                    }
                }
            }
            Ok(total / denominator)
        })
        .collect::<Result<_>>()?;
    SelectionTrace::new(SelectionMethod::KFold, lambda_grid.to_vec(), scores)
}

/// GCV of the regression of `Xᵀu` onto the finite element space.
pub fn gcv_select(
    x: &DataMatrix,
    u: &DVector<f64>,
    lambda_grid: &[f64],
    ops: &FemOperators,
) -> Result<SelectionTrace> {
    check_grid(lambda_grid)?;
    if u.len() != x.samples() {
        return Err(Error::DimensionMismatch {
            context: "score vector",
            expected: x.samples(),
            found: u.len(),
        });
    }
    let systems = smfpca::build_systems(ops, lambda_grid)?;
    let context = GcvContext::new(lambda_grid, &systems, ops)?;
    context.select(&x.values().tr_mul(u))
}

/// Factored systems and smoother traces for a grid; the traces do not
/// depend on the data and are computed once.
pub(crate) struct GcvContext<'a> {
    grid: &'a [f64],
    systems: &'a [SaddleSystem],
    traces: Vec<f64>,
    ops: &'a FemOperators,
}

impl<'a> GcvContext<'a> {
    pub(crate) fn new(
        grid: &'a [f64],
        systems: &'a [SaddleSystem],
        ops: &'a FemOperators,
    ) -> Result<Self> {
        let traces = systems
            .par_iter()
            .map(|system| smoother_trace(system, ops))
            .collect::<Result<_>>()?;
        Ok(Self {
            grid,
            systems,
            traces,
            ops,
        })
    }

    pub(crate) fn system(&self, index: usize) -> &SaddleSystem {
        &self.systems[index]
    }

    pub(crate) fn select(&self, z: &DVector<f64>) -> Result<SelectionTrace> {
        let s = self.ops.location_count() as f64;
        let rhs = self.ops.project(z)?;
        let scores = self
            .systems
            .par_iter()
            .zip(&self.traces)
            .map(|(system, &trace)| {
                let denominator = 1.0 - trace / s;
                if denominator <= DEGENERATE_DENOMINATOR {
                    log::warn!(
                        "GCV undefined at lambda {:e} (trace {trace:.6} of {s}); skipped",
                        system.lambda()
                    );
                    return Ok(f64::INFINITY);
                }
                let (f, _) = system.solve(&rhs)?;
                let fitted = self.ops.evaluate(&f)?;
                let misfit = (z - fitted).norm_squared();
                Ok(misfit / s / (denominator * denominator))
            })
            .collect::<Result<_>>()?;
        SelectionTrace::new(SelectionMethod::Gcv, self.grid.to_vec(), scores)
    }
}

/// `tr(Ψ A⁻¹ Ψᵀ)`: exact by one solve per location up to
/// [`EXACT_TRACE_LIMIT`] locations, Hutchinson estimate beyond.
pub(crate) fn smoother_trace(system: &SaddleSystem, ops: &FemOperators) -> Result<f64> {
    let s = ops.location_count();
    let psi = ops.psi();
    if s <= EXACT_TRACE_LIMIT {
        let mut trace = 0.0;
        for row in psi.row_iter() {
            let mut rhs = DVector::zeros(ops.vertex_count());
            for (&k, &v) in row.col_indices().iter().zip(row.values()) {
                rhs[k] = v;
            }
            let (f, _) = system.solve(&rhs)?;
            trace += row
                .col_indices()
                .iter()
                .zip(row.values())
                .map(|(&k, v)| v * f[k])
                .sum::<f64>();
        }
        Ok(trace)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(HUTCHINSON_SEED);
        let mut total = 0.0;
        for _ in 0..HUTCHINSON_PROBES {
            let probe = DVector::from_fn(s, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
            let (f, _) = system.solve(&ops.project(&probe)?)?;
            total += probe.dot(&ops.evaluate(&f)?);
        }
        Ok(total / HUTCHINSON_PROBES as f64)
    }
}
