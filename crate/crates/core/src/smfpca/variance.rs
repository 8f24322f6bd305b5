use nalgebra::DMatrix;

use super::PcComponent;
use crate::error::{Error, Result};

/// Variance explained by each component beyond the preceding ones: the
/// squared diagonal of `R` in the QR factorization of the matrix whose
/// columns are the unnormalized score vectors.
pub fn adjusted_total_variance(components: &[PcComponent]) -> Result<Vec<f64>> {
    let first = components
        .first()
        .ok_or_else(|| Error::InvalidArgument("no components to account for".into()))?;
    let n = first.scores.len();
    if let Some(c) = components.iter().find(|c| c.scores.len() != n) {
        return Err(Error::DimensionMismatch {
            context: "score vector length",
            expected: n,
            found: c.scores.len(),
        });
    }
    let columns: Vec<_> = components
        .iter()
        .map(PcComponent::unnormalized_scores)
        .collect();
    let u_hat = DMatrix::from_columns(&columns);
    let r = u_hat.qr().r();
    Ok((0..components.len())
        .map(|j| {
            if j < r.nrows() {
                r[(j, j)] * r[(j, j)]
            } else {
                0.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use nalgebra::DVector;
    use proptest::prelude::*;

    use super::*;

    fn component(scores: DVector<f64>, function_norm: f64) -> PcComponent {
        PcComponent {
            scores,
            f: DVector::zeros(1),
            g: DVector::zeros(1),
            lambda: 1.0,
            function_norm,
            iterations: 1,
            objective_trace: vec![0.0],
            converged: true,
        }
    }

    #[test]
    fn orthogonal_scores_give_squared_norms() {
        let e = |i| DVector::from_fn(4, |r, _| if r == i { 1.0 } else { 0.0 });
        let comps = [component(e(0), 3.0), component(e(2), 0.5)];
        let v = adjusted_total_variance(&comps).unwrap();
        assert_eq!(v, vec![9.0, 0.25]);
    }

    #[test]
    fn duplicated_component_adds_nothing() {
        let u = DVector::from_vec(vec![0.5, -0.5, 0.5, 0.5]);
        let comps = [component(u.clone(), 2.0), component(u, 1.0)];
        let v = adjusted_total_variance(&comps).unwrap();
        assert!((v[0] - 4.0).abs() < 1e-12);
        assert!(v[1] < 1e-24);
    }

    #[test]
    fn more_components_than_samples() {
        let comps: Vec<_> = (0..3)
            .map(|i| component(DVector::from_vec(vec![1.0, i as f64]).normalize(), 1.0))
            .collect();
        let v = adjusted_total_variance(&comps).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[2], 0.0);
    }

    proptest! {
        #[test]
        fn total_is_at_most_trace(
            raw in proptest::collection::vec(-1.0f64..1.0, 18),
            norms in proptest::collection::vec(0.1f64..5.0, 3),
        ) {
            // Adjusted total never exceeds tr(ÛᵀÛ), and the first entry equals it
            // for the leading column.
            let comps: Vec<_> = (0..3)
                .map(|j| {
                    let u = DVector::from_column_slice(&raw[6 * j..6 * j + 6]);
                    let u = if u.norm() > 1e-6 { u.normalize() } else { DVector::from_element(6, 1.0).normalize() };
                    component(u, norms[j])
                })
                .collect();
            let v = adjusted_total_variance(&comps).unwrap();
            prop_assert!(v.iter().all(|&x| x >= 0.0));
            prop_assert!((v[0] - norms[0] * norms[0]).abs() < 1e-9 * norms[0] * norms[0]);
            let trace: f64 = norms.iter().map(|n| n * n).sum();
            prop_assert!(v.iter().sum::<f64>() <= trace * (1.0 + 1e-12));
        }
    }
}
