use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Weight each update by its sample count.
    #[default]
    Weighted,
    /// Plain mean of the updates.
    Uniform,
}

/// FedAvg over `(weights, n_samples)` pairs.
pub fn fedavg_aggregate(
    updates: &[(&WeightVector, usize)],
    mode: AggregationMode,
) -> Result<WeightVector> {
    let Some(((first, _), rest)) = updates.split_first() else {
        return Err(Error::Aggregation("no updates to aggregate".into()));
    };
    for (w, _) in rest {
        if w.layout_id != first.layout_id || w.len() != first.len() {
            return Err(Error::Aggregation(format!(
                "layout {} cannot be combined with {}",
                w.layout_id, first.layout_id
            )));
        }
    }
    let coeffs: Vec<f64> = match mode {
        AggregationMode::Uniform => vec![1.0; updates.len()],
        AggregationMode::Weighted => {
            if updates.iter().any(|(_, n)| *n == 0) {
                return Err(Error::Aggregation(
                    "weighted aggregation needs every sample count >= 1".into(),
                ));
            }
            updates.iter().map(|(_, n)| *n as f64).collect()
        }
    };
    let total: f64 = coeffs.iter().sum();
    let mut acc = vec![0.0; first.len()];
    for ((w, _), c) in updates.iter().zip(&coeffs) {
        for (a, v) in acc.iter_mut().zip(&w.values) {
            *a += c * v;
        }
    }
    for a in &mut acc {
        *a /= total;
    }
    if acc.iter().any(|v| !v.is_finite()) {
        return Err(Error::Aggregation("aggregate is not finite".into()));
    }
    Ok(WeightVector::new(acc, first.layout_id.clone()))
}

/// Sample-count-weighted mean of per-client losses: the objective an HP
/// configuration is judged by.
pub fn weighted_objective(losses: &[(f64, usize)]) -> f64 {
    let total: usize = losses.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return f64::INFINITY;
    }
    losses
        .iter()
        .map(|(l, n)| l * (*n as f64 / total as f64))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayoutId;

    fn wv(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec(), LayoutId("t".into()))
    }

    #[test]
    fn identical_updates_are_a_fixed_point() {
        let u = wv(&[0.25, -1.5, 3.0]);
        for mode in [AggregationMode::Weighted, AggregationMode::Uniform] {
            let out = fedavg_aggregate(&[(&u, 3), (&u, 7), (&u, 1)], mode).unwrap();
            assert_eq!(out, u);
        }
    }

    #[test]
    fn uniform_and_weighted_examples() {
        let (a, b) = (wv(&[0.0, 2.0]), wv(&[2.0, 0.0]));
        let out = fedavg_aggregate(&[(&a, 5), (&b, 1)], AggregationMode::Uniform).unwrap();
        assert_eq!(out.values, vec![1.0, 1.0]);
        let (c, d) = (wv(&[4.0]), wv(&[0.0]));
        let out = fedavg_aggregate(&[(&c, 1), (&d, 3)], AggregationMode::Weighted).unwrap();
        assert_eq!(out.values, vec![1.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            fedavg_aggregate(&[], AggregationMode::Weighted),
            Err(Error::Aggregation(_))
        ));
        let a = wv(&[1.0]);
        let b = WeightVector::new(vec![1.0], LayoutId("other".into()));
        assert!(fedavg_aggregate(&[(&a, 1), (&b, 1)], AggregationMode::Uniform).is_err());
        assert!(fedavg_aggregate(&[(&a, 0)], AggregationMode::Weighted).is_err());
        assert!(fedavg_aggregate(&[(&a, 0)], AggregationMode::Uniform).is_ok());
    }

    #[test]
    fn objective_weights_by_samples() {
        assert!((weighted_objective(&[(1.0, 10), (3.0, 30)]) - 2.5).abs() < 1e-15);
        assert_eq!(weighted_objective(&[]), f64::INFINITY);
    }
}
