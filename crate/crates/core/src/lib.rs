//! Smooth functional principal component analysis for data sampled on
//! triangulated two-dimensional manifolds.
//!
//! Principal component functions are estimated one at a time by alternating
//! a closed-form score update with a penalized regression of the data onto
//! linear surface finite elements, where the roughness penalty is the
//! integrated squared Laplace–Beltrami operator. The regression step is a
//! sparse saddle-point solve (see [`solver`]).

pub mod error;
pub mod fem;
pub mod mesh;
pub mod metrics;
pub mod selection;
pub mod smfpca;
pub mod solver;
mod sparse;
pub mod synth;

#[cfg(test)]
mod test_support;

pub use error::{Error, Result, TopologyKind};
pub use fem::{lb_eigenpairs, EigenPair, FemOperators};
pub use mesh::{load_mesh, unit_sphere_mesh, SurfaceLocation, TriangleGeometry, TriangleMesh};
pub use metrics::{mse, mv_pca, principal_angle, EvaluationReport, MvPcaComponent};
pub use selection::{
    default_lambda_grid, gcv_select, kfold_select, SelectionMethod, SelectionTrace,
};
pub use smfpca::{
    fit, fit_component, fit_missing, DataMatrix, FitOptions, ObservationSet, PcComponent,
    Selection, SmFpcaResult,
};
pub use solver::{SaddleSymbolic, SaddleSystem};
pub use synth::SyntheticDataset;
