//! Synthetic datasets with known principal components: Laplace–Beltrami
//! eigenfunctions on any mesh, two spherical harmonics on the unit sphere,
//! and randomly rotated copies of one harmonic.
//!
//! Spherical coordinates: `θ ∈ [0, π]` is the polar angle from `+z`, `φ ∈
//! [−π, π)` the azimuth from `+x`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::fem::{lb_eigenpairs, FemOperators};
use crate::mesh::TriangleMesh;
use crate::smfpca::DataMatrix;

/// Vertex radius deviation tolerated by the sphere generators.
pub const SPHERE_TOLERANCE: f64 = 1e-6;

/// Generated data together with the components that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub x: DataMatrix,
    /// Finite element coefficients of the true components.
    pub true_components: Vec<DVector<f64>>,
    /// `n × L` matrix of true scores.
    pub true_scores: DMatrix<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Per-function `(θ, φ)` shifts of the misaligned generator.
    pub shifts: Option<Vec<(f64, f64)>>,
}

/// Data built from chosen Laplace–Beltrami eigenfunctions (`eigen_indices`
/// count from 0, the constant mode) with independent normal scores of
/// standard deviations `sigmas`, plus i.i.d. normal noise.
pub fn generate_eigen_dataset(
    ops: &FemOperators,
    eigen_indices: &[usize],
    sigmas: &[f64],
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticDataset> {
    if eigen_indices.len() != sigmas.len() || eigen_indices.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "need one sigma per eigenfunction, got {} indices and {} sigmas",
            eigen_indices.len(),
            sigmas.len()
        )));
    }
    let needed = eigen_indices.iter().max().expect("nonempty") + 1;
    let pairs = lb_eigenpairs(ops, needed)?;
    let components = eigen_indices
        .iter()
        .map(|&i| pairs[i].coefficients.clone())
        .collect();
    assemble(ops, components, sigmas, n, noise_sigma, seed)
}

/// The two closed-form harmonics `½√(15/π) xy` and `¾√(35/π) xy(x² − y²)`
/// at each vertex, with the nominal radius 1.
pub fn sphere_pc_functions(mesh: &TriangleMesh) -> Result<(DVector<f64>, DVector<f64>)> {
    check_sphere(mesh)?;
    let k = mesh.vertex_count();
    let v = mesh.vertices();
    Ok((
        DVector::from_fn(k, |i, _| harmonic_1(&v[i])),
        DVector::from_fn(k, |i, _| harmonic_2(&v[i])),
    ))
}

/// Sphere harmonics data. The harmonics are R0-orthonormalized on the mesh
/// so that the truth is an exact orthonormal pair.
pub fn generate_sphere_dataset(
    mesh: &TriangleMesh,
    ops: &FemOperators,
    n: usize,
    sigmas: (f64, f64),
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticDataset> {
    let (v1, v2) = sphere_pc_functions(mesh)?;
    let components = mass_orthonormalize(ops, vec![v1, v2])?;
    assemble(ops, components, &[sigmas.0, sigmas.1], n, noise_sigma, seed)
}

/// Noise-free data `x_i = u_i v₁(θ + θ_i, φ + φ_i)` with each shift drawn
/// uniformly from `shift_set`. The true component is the unshifted `v₁`.
pub fn generate_misaligned_dataset(
    mesh: &TriangleMesh,
    ops: &FemOperators,
    n: usize,
    sigma: f64,
    shift_set: &[f64],
    seed: u64,
) -> Result<SyntheticDataset> {
    check_sphere(mesh)?;
    check_common(ops, mesh.vertex_count(), &[sigma], n, 0.0)?;
    if shift_set.is_empty() {
        return Err(Error::InvalidArgument("shift set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = draw_scores(&mut rng, &[sigma], n)?;
    let shifts: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let t = shift_set[rng.random_range(0..shift_set.len())];
            let p = shift_set[rng.random_range(0..shift_set.len())];
            (t, p)
        })
        .collect();

    let points: Vec<Vector3<f64>> = ops.locations().iter().map(|l| mesh.point_at(l)).collect();
    let angles: Vec<(f64, f64)> = points.iter().map(spherical).collect();
    let x = DMatrix::from_fn(n, points.len(), |i, j| {
        let (theta, phi) = angles[j];
        let (dt, dp) = shifts[i];
        scores[(i, 0)] * harmonic_1(&shifted_point(theta + dt, phi + dp))
    });
    let (v1, _) = sphere_pc_functions(mesh)?;
    Ok(SyntheticDataset {
        x: DataMatrix::new(x)?,
        true_components: vec![v1],
        true_scores: scores,
        noise_sigma: 0.0,
        seed,
        shifts: Some(shifts),
    })
}

fn harmonic_1(p: &Vector3<f64>) -> f64 {
    0.5 * (15.0 / PI).sqrt() * p.x * p.y
}

fn harmonic_2(p: &Vector3<f64>) -> f64 {
    0.75 * (35.0 / PI).sqrt() * p.x * p.y * (p.x * p.x - p.y * p.y)
}

/// `(θ, φ)` of the radial projection of `p`.
fn spherical(p: &Vector3<f64>) -> (f64, f64) {
    let r = p.norm();
    ((p.z / r).clamp(-1.0, 1.0).acos(), p.y.atan2(p.x))
}

/// Unit vector at polar angle `theta` and azimuth `phi`; polar angles
/// outside `[0, π]` are reflected through the pole.
fn shifted_point(theta: f64, phi: f64) -> Vector3<f64> {
    let (theta, phi) = if theta > PI {
        (2.0 * PI - theta, phi + PI)
    } else if theta < 0.0 {
        (-theta, phi + PI)
    } else {
        (theta, phi)
    };
    let phi = (phi + PI).rem_euclid(2.0 * PI) - PI;
    Vector3::new(
        theta.sin() * phi.cos(),
        theta.sin() * phi.sin(),
        theta.cos(),
    )
}

fn check_sphere(mesh: &TriangleMesh) -> Result<()> {
    for (vertex, v) in mesh.vertices().iter().enumerate() {
        let radius = v.norm();
        if (radius - 1.0).abs() > SPHERE_TOLERANCE {
            return Err(Error::NotASphere { vertex, radius });
        }
    }
    Ok(())
}

fn check_common(ops: &FemOperators, k: usize, sigmas: &[f64], n: usize, noise: f64) -> Result<()> {
    if ops.vertex_count() != k {
        return Err(Error::DimensionMismatch {
            context: "operators vs mesh vertices",
            expected: k,
            found: ops.vertex_count(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be at least 1".into(),
        ));
    }
    if sigmas
        .iter()
        .chain([&noise])
        .any(|s| !(s.is_finite() && *s >= 0.0))
    {
        return Err(Error::InvalidArgument(
            "standard deviations must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

fn draw_scores(rng: &mut ChaCha8Rng, sigmas: &[f64], n: usize) -> Result<DMatrix<f64>> {
    let dists = sigmas
        .iter()
        .map(|&s| Normal::new(0.0, s).map_err(|e| Error::InvalidArgument(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut scores = DMatrix::zeros(n, sigmas.len());
    for i in 0..n {
        for (l, d) in dists.iter().enumerate() {
            scores[(i, l)] = d.sample(rng);
        }
    }
    Ok(scores)
}

/// Scores, then noise, from one seeded stream; data at the sampling
/// locations.
fn assemble(
    ops: &FemOperators,
    components: Vec<DVector<f64>>,
    sigmas: &[f64],
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticDataset> {
    check_common(ops, components[0].len(), sigmas, n, noise_sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = draw_scores(&mut rng, sigmas, n)?;
    let evaluations = components
        .iter()
        .map(|c| ops.evaluate(c))
        .collect::<Result<Vec<_>>>()?;
    let s = ops.location_count();
    let mut x = DMatrix::zeros(n, s);
    for i in 0..n {
        for j in 0..s {
            let signal: f64 = evaluations
                .iter()
                .enumerate()
                .map(|(l, e)| scores[(i, l)] * e[j])
                .sum();
            let noise: f64 = rng.sample(StandardNormal);
            x[(i, j)] = signal + noise_sigma * noise;
        }
    }
    Ok(SyntheticDataset {
        x: DataMatrix::new(x)?,
        true_components: components,
        true_scores: scores,
        noise_sigma,
        seed,
        shifts: None,
    })
}

fn mass_orthonormalize(ops: &FemOperators, mut vs: Vec<DVector<f64>>) -> Result<Vec<DVector<f64>>> {
    for j in 0..vs.len() {
        for i in 0..j {
            let c = ops.l2_inner(&vs[i], &vs[j])?;
            let vi = vs[i].clone();
            vs[j].axpy(-c, &vi, 1.0);
        }
        let norm = ops.l2_norm(&vs[j])?;
        vs[j] /= norm;
    }
    Ok(vs)
}
