//! Functions observed on individual subsets of a shared pool of locations.
//!
//! The regression step weights each observation's basis outer product by the
//! squared score of its function, and the right-hand side accumulates
//! `u_i x_i(p) ψ(p)` over all observations.
//!
//! The score update normalizes the vector of per-function inner products.
//! When functions have different numbers of observations this is not the
//! exact minimizer over unit vectors, so the objective is recorded but not
//! required to decrease.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use rayon::prelude::*;

use super::{
    adjusted_total_variance, alternate, cumulative, initialize, location_weight, unit, DataMatrix,
    FitOptions, PcComponent, Selection, SmFpcaResult,
};
use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::selection::{self, SelectionMethod, SelectionTrace};
use crate::solver::{SaddleSymbolic, SaddleSystem};
use crate::sparse;

/// A value observed at an index into the location pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub location: usize,
    pub value: f64,
}

/// Per-function observation lists over a common pool of locations. The
/// [`FemOperators`] used for fitting must be assembled on that pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pool_size: usize,
    functions: Vec<Vec<Observation>>,
}

impl ObservationSet {
    pub fn new(pool_size: usize, functions: Vec<Vec<Observation>>) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::DegenerateData("no functions observed".into()));
        }
        for (i, obs) in functions.iter().enumerate() {
            if obs.is_empty() {
                return Err(Error::DegenerateData(format!(
                    "function {i} has no observations"
                )));
            }
            for o in obs {
                if o.location >= pool_size {
                    return Err(Error::DimensionMismatch {
                        context: "observation location index",
                        expected: pool_size,
                        found: o.location,
                    });
                }
                if !o.value.is_finite() {
                    return Err(Error::DegenerateData(format!(
                        "function {i} has a non-finite value at location {}",
                        o.location
                    )));
                }
            }
        }
        Ok(Self {
            pool_size,
            functions,
        })
    }

    /// Rows of a table where `None` marks a missing cell; column `j` is pool
    /// location `j`.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let pool_size = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != pool_size) {
            return Err(Error::DimensionMismatch {
                context: "row length",
                expected: pool_size,
                found: rows[bad].len(),
            });
        }
        let functions = rows
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter_map(|(location, v)| v.map(|value| Observation { location, value }))
                    .collect()
            })
            .collect();
        Self::new(pool_size, functions)
    }

    /// Every entry of a complete matrix.
    pub fn from_data(x: &DataMatrix) -> Self {
        let functions = x
            .values()
            .row_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(location, &value)| Observation { location, value })
                    .collect()
            })
            .collect();
        Self {
            pool_size: x.locations(),
            functions,
        }
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn samples(&self) -> usize {
        self.functions.len()
    }

    pub fn functions(&self) -> &[Vec<Observation>] {
        &self.functions
    }

    pub fn observation_count(&self) -> usize {
        self.functions.iter().map(Vec::len).sum()
    }

    /// Mean of the observed values at each pool location (zero where
    /// nothing was observed).
    pub fn location_means(&self) -> DVector<f64> {
        let mut sum = DVector::zeros(self.pool_size);
        let mut count = vec![0usize; self.pool_size];
        for obs in &self.functions {
            for o in obs {
                sum[o.location] += o.value;
                count[o.location] += 1;
            }
        }
        for (j, &c) in count.iter().enumerate() {
            if c > 0 {
                sum[j] /= c as f64;
            }
        }
        sum
    }

    fn subtract(&self, field: &DVector<f64>) -> Vec<Vec<Observation>> {
        self.functions
            .iter()
            .map(|obs| {
                obs.iter()
                    .map(|o| Observation {
                        location: o.location,
                        value: o.value - field[o.location],
                    })
                    .collect()
            })
            .collect()
    }
}

/// Extracts components from incompletely observed functions. GCV is not
/// defined for this variant; use K-fold or a fixed λ.
pub fn fit_missing(
    obs: &ObservationSet,
    n_components: usize,
    lambda_grid: &[f64],
    selection: &Selection,
    ops: &FemOperators,
    opts: &FitOptions,
) -> Result<SmFpcaResult> {
    if n_components == 0 {
        return Err(Error::InvalidArgument(
            "at least one component is required".into(),
        ));
    }
    if obs.pool_size != ops.location_count() {
        return Err(Error::DimensionMismatch {
            context: "observation pool vs sampling locations",
            expected: ops.location_count(),
            found: obs.pool_size,
        });
    }
    let mean_field = if opts.center {
        obs.location_means()
    } else {
        DVector::zeros(obs.pool_size)
    };
    let mut data = obs.subtract(&mean_field);
    let total_variance = data
        .iter()
        .flatten()
        .map(|o| o.value * o.value)
        .sum::<f64>()
        * location_weight(ops);
    let symbolic = SaddleSymbolic::for_mesh(ops);

    let mut components = Vec::with_capacity(n_components);
    let mut selection_traces = Vec::with_capacity(n_components);
    for _ in 0..n_components {
        let (lambda, traces) = match selection {
            Selection::Fixed(lambda) => (*lambda, Vec::new()),
            Selection::KFold { folds, seed } => {
                selection::check_grid(lambda_grid)?;
                let trace = kfold(&data, lambda_grid, *folds, *seed, &symbolic, ops, opts)?;
                (lambda_grid[trace.chosen], vec![trace])
            }
            Selection::Gcv => {
                return Err(Error::InvalidArgument(
                    "GCV selection needs a complete data matrix; use K-fold or a fixed lambda"
                        .into(),
                ))
            }
        };
        let component = fit_one(&data, obs.pool_size, lambda, &symbolic, ops, opts)?;
        deflate(&mut data, &component.scores, obs.pool_size);
        components.push(component);
        selection_traces.push(traces);
    }

    let adjusted_variance = adjusted_total_variance(&components)?;
    let cumulative_variance = cumulative(&adjusted_variance);
    Ok(SmFpcaResult {
        components,
        adjusted_variance,
        cumulative_variance,
        mean_field,
        centered: opts.center,
        total_variance,
        selection_traces,
    })
}

fn fit_one(
    data: &[Vec<Observation>],
    pool_size: usize,
    lambda: f64,
    symbolic: &SaddleSymbolic,
    ops: &FemOperators,
    opts: &FitOptions,
) -> Result<PcComponent> {
    let mut filled = DMatrix::zeros(data.len(), pool_size);
    for (i, obs) in data.iter().enumerate() {
        for o in obs {
            filled[(i, o.location)] = o.value;
        }
    }
    let init = initialize(&DataMatrix::new(filled)?)?;
    alternate(
        init,
        opts,
        false,
        ops,
        |f_s| unit(inner_products(data, f_s)),
        |u| {
            let (upper_left, rhs) = weighted_system(data, u, ops);
            let system = SaddleSystem::build_with(symbolic, ops, &upper_left, lambda)?;
            let (f, g) = system.solve(&rhs)?;
            Ok((f, g, lambda))
        },
        |u, f_s, g, lambda| {
            let mut fit = 0.0;
            for (i, obs) in data.iter().enumerate() {
                for o in obs {
                    let r = o.value - u[i] * f_s[o.location];
                    fit += r * r;
                }
            }
            Ok(fit + lambda * u.norm_squared() * ops.l2_inner(g, g)?)
        },
    )
}

/// `Σ_j x_i(p_j) f(p_j)` for each function.
fn inner_products(data: &[Vec<Observation>], f_s: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        data.len(),
        data.iter()
            .map(|obs| obs.iter().map(|o| o.value * f_s[o.location]).sum::<f64>()),
    )
}

/// The score-weighted upper-left block and the right-hand side `D u`.
fn weighted_system(
    data: &[Vec<Observation>],
    u: &DVector<f64>,
    ops: &FemOperators,
) -> (CsrMatrix<f64>, DVector<f64>) {
    let k = ops.vertex_count();
    let psi = ops.psi();
    let mut triplets = Vec::new();
    let mut rhs = DVector::zeros(k);
    for (i, obs) in data.iter().enumerate() {
        let w = u[i] * u[i];
        for o in obs {
            let row = psi.row(o.location);
            for (&a, va) in row.col_indices().iter().zip(row.values()) {
                rhs[a] += u[i] * o.value * va;
                for (&b, vb) in row.col_indices().iter().zip(row.values()) {
                    triplets.push((a, b, w * va * vb));
                }
            }
        }
    }
    (sparse::csr_from_triplets(k, k, triplets), rhs)
}

/// Removes `u_i w(p)` from every observation, `w(p) = Σ u_i x_i(p)` over
/// the functions observed at `p`.
fn deflate(data: &mut [Vec<Observation>], u: &DVector<f64>, pool_size: usize) {
    let mut w = vec![0.0; pool_size];
    for (i, obs) in data.iter().enumerate() {
        for o in obs {
            w[o.location] += u[i] * o.value;
        }
    }
    for (i, obs) in data.iter_mut().enumerate() {
        for o in obs {
            o.value -= u[i] * w[o.location];
        }
    }
}

fn kfold(
    data: &[Vec<Observation>],
    grid: &[f64],
    folds: usize,
    seed: u64,
    symbolic: &SaddleSymbolic,
    ops: &FemOperators,
    opts: &FitOptions,
) -> Result<SelectionTrace> {
    let assignment = selection::fold_assignment(data.len(), folds, seed)?;
    let total: usize = data.iter().map(Vec::len).sum();
    let pool_size = ops.location_count();
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&lambda| {
            let mut sum = 0.0;
            for fold in 0..folds {
                let (train, validate): (Vec<_>, Vec<_>) =
                    data.iter().zip(&assignment).partition(|(_, &a)| a != fold);
                let train: Vec<Vec<Observation>> =
                    train.into_iter().map(|(o, _)| o.clone()).collect();
                let c = fit_one(&train, pool_size, lambda, symbolic, ops, opts)?;
                let f_s = ops.evaluate(&c.f)?;
                let penalty = lambda * ops.l2_inner(&c.g, &c.g)?;
                for (obs, _) in validate {
                    let (num, den) = obs.iter().fold((0.0, penalty), |(n, d), o| {
                        let fv = f_s[o.location];
                        (n + o.value * fv, d + fv * fv)
                    });
                    let ui = num / den;
                    for o in obs {
                        let r = o.value - ui * f_s[o.location];
                        sum += r * r;
                    }
                }
            }
            Ok(sum / total as f64)
        })
        .collect::<Result<_>>()?;
    SelectionTrace::new(SelectionMethod::KFold, grid.to_vec(), scores)
}
