//! Composed RF feature vector for the fusion model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rf::solver::MultilaterationResult;

/// `[X_u, Y_u, R_1..R_K, P_1..P_K]` with entries ordered by selected
/// anchor id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfFeature(pub Vec<f64>);

impl RfFeature {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Feature length for a given K.
    pub fn expected_len(k: usize) -> usize {
        2 + 2 * k
    }
}

/// Builds the composed RF feature from a localization result and the
/// selected anchors' `(id, range, power)` triples. Input order does not
/// matter; the layout is fixed by ascending anchor id.
pub fn compose_rf_features(
    mlr: &MultilaterationResult,
    selected: &[(u32, f64, f64)],
    k: usize,
) -> Result<RfFeature> {
    if selected.len() != k {
        return Err(Error::invalid(format!(
            "expected {k} selected anchors, got {}",
            selected.len()
        )));
    }
    let mut ordered = selected.to_vec();
    ordered.sort_by_key(|(id, _, _)| *id);
    let mut v = Vec::with_capacity(RfFeature::expected_len(k));
    v.push(mlr.position.x);
    v.push(mlr.position.y);
    v.extend(ordered.iter().map(|(_, r, _)| *r));
    v.extend(ordered.iter().map(|(_, _, p)| *p));
    Ok(RfFeature(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Position2D;

    fn mlr(x: f64, y: f64) -> MultilaterationResult {
        MultilaterationResult {
            position: Position2D::new(x, y),
            residual_rms: 0.0,
            iterations: 1,
            converged: true,
        }
    }

    #[test]
    fn layout_matches_contract() {
        let f = compose_rf_features(
            &mlr(1.0, 2.0),
            &[(0, 3.0, -80.0), (1, 4.0, -85.0), (2, 5.0, -90.0)],
            3,
        )
        .unwrap();
        assert_eq!(f.0, vec![1.0, 2.0, 3.0, 4.0, 5.0, -80.0, -85.0, -90.0]);
        assert_eq!(f.len(), RfFeature::expected_len(3));
    }

    #[test]
    fn permutation_invariant_given_ids() {
        let a = compose_rf_features(
            &mlr(1.0, 2.0),
            &[(2, 5.0, -90.0), (0, 3.0, -80.0), (1, 4.0, -85.0)],
            3,
        )
        .unwrap();
        let b = compose_rf_features(
            &mlr(1.0, 2.0),
            &[(0, 3.0, -80.0), (1, 4.0, -85.0), (2, 5.0, -90.0)],
            3,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn size_mismatch_rejected() {
        assert!(compose_rf_features(&mlr(0.0, 0.0), &[(0, 1.0, -80.0)], 3).is_err());
    }
}
