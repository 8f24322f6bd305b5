//! The alternating estimator for one principal component at a time, with
//! sequential deflation.
//!
//! For a fixed loading evaluation vector `f_s` the unit score vector is
//! `X f_s / ‖X f_s‖`; for fixed scores the loading is the penalized
//! regression of `Xᵀu` onto the finite element space, solved through the
//! saddle-point system with upper-left block `ΨᵀΨ`.

mod missing;
mod variance;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::selection::{self, GcvContext, SelectionTrace};
use crate::solver::{SaddleSymbolic, SaddleSystem};

pub use missing::{fit_missing, Observation, ObservationSet};
pub use variance::adjusted_total_variance;

/// Quadrature weight of one sampling location, used to put data sums of
/// squares on the scale of squared L² function norms.
pub(crate) fn location_weight(ops: &FemOperators) -> f64 {
    ops.total_area() / ops.location_count() as f64
}

/// Relative slack allowed when checking that the objective does not increase.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// An `n × s` sample matrix, one row per function and one column per
/// sampling location.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    centered: bool,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::DegenerateData("data matrix is empty".into()));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = (p % values.nrows(), p / values.nrows());
            return Err(Error::DegenerateData(format!(
                "non-finite entry at row {i}, column {j}"
            )));
        }
        Ok(Self {
            values,
            centered: false,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Number of functions `n`.
    pub fn samples(&self) -> usize {
        self.values.nrows()
    }

    /// Number of locations `s`.
    pub fn locations(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Column-centered copy and the subtracted column means.
    pub fn center(&self) -> (DataMatrix, DVector<f64>) {
        let n = self.samples() as f64;
        let mean = DVector::from_iterator(
            self.locations(),
            self.values.column_iter().map(|c| c.iter().sum::<f64>() / n),
        );
        let mut values = self.values.clone();
        for (j, mut col) in values.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[j]);
        }
        (
            DataMatrix {
                values,
                centered: true,
            },
            mean,
        )
    }

    /// The rows listed in `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> DataMatrix {
        DataMatrix {
            values: self.values.select_rows(rows),
            centered: self.centered,
        }
    }

    fn check_locations(&self, ops: &FemOperators) -> Result<()> {
        if self.locations() != ops.location_count() {
            return Err(Error::DimensionMismatch {
                context: "data columns vs sampling locations",
                expected: ops.location_count(),
                found: self.locations(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Cap on score/function passes. Zero still performs one pass.
    pub max_iterations: usize,
    /// Relative change of the coefficient vector below which iteration stops.
    pub tolerance: f64,
    /// Subtract column means before fitting.
    pub center: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 15,
            tolerance: 1e-6,
            center: true,
        }
    }
}

/// How λ is chosen for each component.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    KFold { folds: usize, seed: u64 },
    Gcv,
    Fixed(f64),
}

/// One extracted component.
#[derive(Debug, Clone, PartialEq)]
pub struct PcComponent {
    /// Unit-norm score vector `u`.
    pub scores: DVector<f64>,
    /// Finite element coefficients of the loading, `fᵀR0f = 1`.
    pub f: DVector<f64>,
    /// Auxiliary field approximating the Laplace–Beltrami operator of `f`,
    /// on the same scale as `f`.
    pub g: DVector<f64>,
    pub lambda: f64,
    /// L² norm of the loading before normalization.
    pub function_norm: f64,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl PcComponent {
    /// Scores multiplied by the loading norm.
    pub fn unnormalized_scores(&self) -> DVector<f64> {
        &self.scores * self.function_norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmFpcaResult {
    pub components: Vec<PcComponent>,
    pub adjusted_variance: Vec<f64>,
    pub cumulative_variance: Vec<f64>,
    /// Column means subtracted before fitting (zeros when not centering).
    pub mean_field: DVector<f64>,
    /// Whether the fitted data was column-centered.
    pub centered: bool,
    /// Squared norm of the data actually fitted, in the units of the
    /// adjusted variances: each value is weighted by area / locations.
    pub total_variance: f64,
    /// Selection history per component: one trace for K-fold, one per pass
    /// for GCV, none for a fixed λ.
    pub selection_traces: Vec<Vec<SelectionTrace>>,
}

/// Leading right singular vector of `X`, largest-magnitude entry positive.
pub fn initialize(x: &DataMatrix) -> Result<DVector<f64>> {
    if x.values.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateData(
            "data matrix is identically zero".into(),
        ));
    }
    let svd = x.values.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let top = svd.singular_values.imax();
    let mut f = v_t.row(top).transpose();
    fix_sign(&mut f);
    Ok(f)
}

/// `u = X f_s / ‖X f_s‖`.
pub fn score_step(x: &DataMatrix, f_s: &DVector<f64>) -> Result<DVector<f64>> {
    if f_s.len() != x.locations() {
        return Err(Error::DimensionMismatch {
            context: "loading evaluations",
            expected: x.locations(),
            found: f_s.len(),
        });
    }
    unit(&x.values * f_s)
}

/// Solves the penalized regression of `Xᵀu`; returns `(f, g)`.
pub fn function_step(
    x: &DataMatrix,
    u: &DVector<f64>,
    system: &SaddleSystem,
    ops: &FemOperators,
) -> Result<(DVector<f64>, DVector<f64>)> {
    x.check_locations(ops)?;
    if u.len() != x.samples() {
        return Err(Error::DimensionMismatch {
            context: "score vector",
            expected: x.samples(),
            found: u.len(),
        });
    }
    let rhs = ops.project(&(x.values.tr_mul(u)))?;
    system.solve(&rhs)
}

/// `gᵀ R0 g`, the discrete integral of the squared Laplacian.
pub fn penalty_value(g: &DVector<f64>, ops: &FemOperators) -> Result<f64> {
    ops.l2_inner(g, g)
}

/// `‖X − u f_sᵀ‖²_F + λ uᵀu gᵀR0g`, summed in fixed order.
pub fn objective(
    x: &DataMatrix,
    u: &DVector<f64>,
    f_s: &DVector<f64>,
    g: &DVector<f64>,
    lambda: f64,
    ops: &FemOperators,
) -> Result<f64> {
    let mut fit = 0.0;
    for j in 0..x.locations() {
        for i in 0..x.samples() {
            let r = x.values[(i, j)] - u[i] * f_s[j];
            fit += r * r;
        }
    }
    Ok(fit + lambda * u.norm_squared() * penalty_value(g, ops)?)
}

/// Fits one component at a fixed λ.
pub fn fit_component(
    x: &DataMatrix,
    lambda: f64,
    ops: &FemOperators,
    opts: &FitOptions,
) -> Result<PcComponent> {
    let system = SaddleSystem::build(ops, &ops.psi_t_psi(), lambda)?;
    fit_component_with(x, &system, ops, opts)
}

/// Fits one component with an already factored system.
pub fn fit_component_with(
    x: &DataMatrix,
    system: &SaddleSystem,
    ops: &FemOperators,
    opts: &FitOptions,
) -> Result<PcComponent> {
    x.check_locations(ops)?;
    let lambda = system.lambda();
    alternate(
        initialize(x)?,
        opts,
        true,
        ops,
        |f_s| score_step(x, f_s),
        |u| function_step(x, u, system, ops).map(|(f, g)| (f, g, lambda)),
        |u, f_s, g, lambda| objective(x, u, f_s, g, lambda, ops),
    )
}

/// `X − u (uᵀX)`.
pub fn deflate(x: &DataMatrix, component: &PcComponent) -> Result<DataMatrix> {
    let u = &component.scores;
    if u.len() != x.samples() {
        return Err(Error::DimensionMismatch {
            context: "score vector",
            expected: x.samples(),
            found: u.len(),
        });
    }
    let w = x.values.tr_mul(u);
    Ok(DataMatrix {
        values: &x.values - u * w.transpose(),
        centered: x.centered,
    })
}

/// Extracts `n_components` components in sequence.
pub fn fit(
    x: &DataMatrix,
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
    x.check_locations(ops)?;
    let centered = opts.center || x.centered;
    let (mut data, mean_field) = if opts.center && !x.centered {
        x.center()
    } else {
        (x.clone(), DVector::zeros(x.locations()))
    };
    let total_variance = data.values.norm_squared() * location_weight(ops);

    let grid: Vec<f64> = match selection {
        Selection::Fixed(lambda) => vec![*lambda],
        _ => {
            selection::check_grid(lambda_grid)?;
            lambda_grid.to_vec()
        }
    };
    let systems = build_systems(ops, &grid)?;

    let mut components = Vec::with_capacity(n_components);
    let mut selection_traces = Vec::with_capacity(n_components);
    let mut gcv: Option<GcvContext> = None;
    for _ in 0..n_components {
        let (component, traces) = match selection {
            Selection::Fixed(_) => (
                fit_component_with(&data, &systems[0], ops, opts)?,
                Vec::new(),
            ),
            Selection::KFold { folds, seed } => {
                let trace = selection::kfold_with_systems(
                    &data, &grid, &systems, *folds, *seed, ops, opts,
                )?;
                let component = fit_component_with(&data, &systems[trace.chosen], ops, opts)?;
                (component, vec![trace])
            }
            Selection::Gcv => {
                let context = match gcv.take() {
                    Some(c) => c,
                    None => GcvContext::new(&grid, &systems, ops)?,
                };
                let result = fit_component_gcv(&data, &context, ops, opts);
                gcv = Some(context);
                result?
            }
        };
        data = deflate(&data, &component)?;
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
        centered,
        total_variance,
        selection_traces,
    })
}

fn fit_component_gcv(
    x: &DataMatrix,
    context: &GcvContext,
    ops: &FemOperators,
    opts: &FitOptions,
) -> Result<(PcComponent, Vec<SelectionTrace>)> {
    let mut traces = Vec::new();
    let component = alternate(
        initialize(x)?,
        opts,
        true,
        ops,
        |f_s| score_step(x, f_s),
        |u| {
            let z = x.values.tr_mul(u);
            let trace = context.select(&z)?;
            let system = context.system(trace.chosen);
            let (f, g) = system.solve(&ops.project(&z)?)?;
            traces.push(trace);
            Ok((f, g, system.lambda()))
        },
        |u, f_s, g, lambda| objective(x, u, f_s, g, lambda, ops),
    )?;
    Ok((component, traces))
}

/// One factored system per grid value, built in parallel with a shared
/// symbolic analysis.
pub(crate) fn build_systems(ops: &FemOperators, grid: &[f64]) -> Result<Vec<SaddleSystem>> {
    let upper_left = ops.psi_t_psi();
    let symbolic = SaddleSymbolic::analyze(ops, &upper_left)?;
    grid.par_iter()
        .map(|&lambda| SaddleSystem::build_with(&symbolic, ops, &upper_left, lambda))
        .collect()
}

/// The shared alternation loop. `score` maps loading evaluations to unit
/// scores, `solve` maps scores to `(f, g, λ)`. With `check_monotone` an
/// increase of the objective at constant λ is an error.
pub(crate) fn alternate(
    mut f_s: DVector<f64>,
    opts: &FitOptions,
    check_monotone: bool,
    ops: &FemOperators,
    mut score: impl FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    mut solve: impl FnMut(&DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, f64)>,
    mut objective: impl FnMut(&DVector<f64>, &DVector<f64>, &DVector<f64>, f64) -> Result<f64>,
) -> Result<PcComponent> {
    let passes = opts.max_iterations.max(1);
    let mut trace: Vec<f64> = Vec::with_capacity(passes);
    let mut previous: Option<(DVector<f64>, f64)> = None;
    let mut converged = false;
    let mut last = None;
    for iteration in 0..passes {
        let u = score(&f_s)?;
        let (f, g, lambda) = solve(&u)?;
        f_s = ops.evaluate(&f)?;
        let value = objective(&u, &f_s, &g, lambda)?;

        if let Some((prev_f, prev_lambda)) = &previous {
            let before = *trace.last().expect("trace follows previous");
            if check_monotone
                && *prev_lambda == lambda
                && value > before + MONOTONE_SLACK * before.abs()
            {
                return Err(Error::NonMonotoneObjective {
                    iteration,
                    previous: before,
                    current: value,
                });
            }
            let change = (&f - prev_f).norm() / f.norm().max(f64::MIN_POSITIVE);
            converged = change < opts.tolerance;
        }
        trace.push(value);
        previous = Some((f.clone(), lambda));
        last = Some((u, f, g, lambda));
        if converged {
            break;
        }
    }

    let (mut u, mut f, mut g, lambda) = last.expect("at least one pass");
    let function_norm = ops.l2_norm(&f)?;
    if function_norm == 0.0 {
        return Err(Error::DegenerateData(
            "fitted loading is identically zero".into(),
        ));
    }
    f /= function_norm;
    g /= function_norm;
    if fix_sign(&mut f) {
        g.neg_mut();
        u.neg_mut();
    }
    Ok(PcComponent {
        scores: u,
        f,
        g,
        lambda,
        function_norm,
        iterations: trace.len(),
        objective_trace: trace,
        converged,
    })
}

pub(crate) fn unit(v: DVector<f64>) -> Result<DVector<f64>> {
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateData(
            "loading is orthogonal to every observed function".into(),
        ));
    }
    Ok(v / norm)
}

/// Makes the largest-magnitude entry positive; true if the sign was flipped.
pub(crate) fn fix_sign(v: &mut DVector<f64>) -> bool {
    if !v.is_empty() && v[v.iamax()] < 0.0 {
        v.neg_mut();
        true
    } else {
        false
    }
}

pub(crate) fn cumulative(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}
