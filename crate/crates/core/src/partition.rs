//! Budget repartition by exponentiated gradient descent.
//!
//! Each epoch the discounted clicks-per-budget of every media object is turned into a
//! rescaled quality vector; the weights move multiplicatively along the negative
//! gradient of `-quality + λ/2 |w - u|²`, with `λ` decaying by day.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::state::{
    update_discounted, CampaignConfig, EpochObservation, MediaObjectAccumulators, WeightVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionerParams {
    pub learning_rate: f64,
    pub exploration: f64,
    pub regularization_discount: f64,
    pub discount: f64,
}

impl PartitionerParams {
    pub fn from_config(cfg: &CampaignConfig) -> Self {
        Self {
            learning_rate: cfg.learning_rate,
            exploration: cfg.exploration,
            regularization_discount: cfg.regularization_discount,
            discount: cfg.discount,
        }
    }

    /// Gradients are clipped to `±10/α`.
    pub fn clip_bound(&self) -> f64 {
        10.0 / self.learning_rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityVector {
    pub raw: Vec<f64>,
    pub rescaled: Vec<f64>,
}

/// Quality `scale · Ĉ / B̂`, rescaled so its largest element is one.
///
/// Media objects without discounted budget get zero quality; an all-zero vector stays zero.
pub fn quality(acc: &MediaObjectAccumulators, scale: f64) -> QualityVector {
    let raw: Vec<f64> = acc
        .disc_clicks
        .iter()
        .zip(&acc.disc_budgets)
        .map(|(c, b)| if *b > 0.0 { scale * c / b } else { 0.0 })
        .collect();
    let max = raw.iter().cloned().fold(0.0, f64::max);
    let rescaled = if max > 0.0 {
        raw.iter().map(|q| q / max).collect()
    } else {
        vec![0.0; raw.len()]
    };
    QualityVector { raw, rescaled }
}

/// `λ = η · K · γ_r^day`.
pub fn regularization_lambda(exploration: f64, k: usize, gamma_r: f64, day: u32) -> f64 {
    exploration * k as f64 * gamma_r.powi(day as i32)
}

/// `-Q̃ + λ (w - u)`, clipped element-wise to `±10/α`.
pub fn loss_gradient(
    quality: &QualityVector,
    w: &WeightVector,
    lambda: f64,
    alpha: f64,
) -> Result<Vec<f64>> {
    let k = w.len();
    ensure_len(k, quality.rescaled.len())?;
    let u = 1.0 / k as f64;
    let bound = 10.0 / alpha;
    Ok(quality
        .rescaled
        .iter()
        .zip(w.as_slice())
        .map(|(q, wi)| (-q + lambda * (wi - u)).clamp(-bound, bound))
        .collect())
}

/// `w'_i ∝ w_i · exp(-α g_i)`.
///
/// Exponents are shifted by their maximum before exponentiation; the shift cancels in
/// the normalization. Zero weights stay zero.
pub fn exponentiated_update(w: &WeightVector, grad: &[f64], alpha: f64) -> Result<WeightVector> {
    ensure_len(w.len(), grad.len())?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidInput("gradient must be finite".into()));
    }
    let weights = w.as_slice();
    let exponents: Vec<f64> = grad.iter().map(|g| -alpha * g).collect();
    let max = weights
        .iter()
        .zip(&exponents)
        .filter(|(wi, _)| **wi > 0.0)
        .map(|(_, e)| *e)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights);
    }
    let scaled: Vec<f64> = weights
        .iter()
        .zip(&exponents)
        .map(|(wi, e)| if *wi > 0.0 { wi * (e - max).exp() } else { 0.0 })
        .collect();
    WeightVector::normalized(&scaled)
}

/// One full partitioning epoch: discounted update, quality, regularizer, gradient, weights.
///
/// `allocated` are the budgets the media objects held during the observed epoch.
pub fn partition_step(
    acc: &MediaObjectAccumulators,
    obs: &EpochObservation,
    allocated: &[f64],
    w: &WeightVector,
    params: &PartitionerParams,
    day: u32,
) -> Result<(MediaObjectAccumulators, WeightVector)> {
    ensure_len(w.len(), acc.len())?;
    let acc = update_discounted(acc, obs, allocated, params.discount)?;
    let q = quality(&acc, allocated.iter().sum());
    let lambda = regularization_lambda(
        params.exploration,
        w.len(),
        params.regularization_discount,
        day,
    );
    let grad = loss_gradient(&q, w, lambda, params.learning_rate)?;
    let next = exponentiated_update(w, &grad, params.learning_rate)?;
    Ok((acc, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn acc(clicks: &[f64], budgets: &[f64]) -> MediaObjectAccumulators {
        let mut a = MediaObjectAccumulators::new(clicks.len(), 1.0);
        a.disc_clicks = clicks.to_vec();
        a.disc_budgets = budgets.to_vec();
        a
    }

    fn params(alpha: f64) -> PartitionerParams {
        PartitionerParams {
            learning_rate: alpha,
            exploration: 1.0,
            regularization_discount: 0.95,
            discount: 0.87,
        }
    }

    #[test]
    fn quality_examples() {
        assert_eq!(
            quality(&acc(&[1.0, 2.0], &[1.0, 1.0]), 1.0).rescaled,
            vec![0.5, 1.0]
        );
        assert_eq!(
            quality(&acc(&[3.0; 4], &[7.0; 4]), 123.0).rescaled,
            vec![1.0; 4]
        );
        assert_eq!(
            quality(&acc(&[0.0, 0.0], &[1.0, 1.0]), 1.0).rescaled,
            vec![0.0, 0.0]
        );
        let q = quality(&acc(&[2.0, 1.0], &[0.0, 1.0]), 1.0);
        assert_eq!(q.raw[0], 0.0);
        assert_eq!(q.rescaled, vec![0.0, 1.0]);
    }

    #[test]
    fn global_scale_does_not_change_rescaled_quality() {
        let a = acc(&[1.0, 3.0, 2.0], &[2.0, 2.0, 5.0]);
        assert_eq!(quality(&a, 1.0).rescaled, quality(&a, 1e4).rescaled);
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(regularization_lambda(1.0, 10, 0.95, 0), 10.0);
        assert!((1.0 - 1.0 / 20.0 - 0.95f64).abs() < 1e-15);
        assert_eq!(
            regularization_lambda(1.0, 10, 1.0, 0),
            regularization_lambda(1.0, 10, 1.0, 29)
        );
        assert!(regularization_lambda(1.0, 10, 0.95, 5) < regularization_lambda(1.0, 10, 0.95, 4));
    }

    #[test]
    fn gradient_examples() {
        let u = WeightVector::uniform(4);
        let ones = QualityVector {
            raw: vec![1.0; 4],
            rescaled: vec![1.0; 4],
        };
        assert_eq!(loss_gradient(&ones, &u, 3.0, 0.5).unwrap(), vec![-1.0; 4]);

        let w = WeightVector::new(vec![0.3, 0.7]).unwrap();
        let q = QualityVector {
            raw: vec![0.5, 1.0],
            rescaled: vec![0.5, 1.0],
        };
        assert_eq!(loss_gradient(&q, &w, 0.0, 1.0).unwrap(), vec![-0.5, -1.0]);

        let q = QualityVector {
            raw: vec![50.0, 0.0],
            rescaled: vec![50.0, 0.0],
        };
        let g = loss_gradient(&q, &w, 0.0, 1.0).unwrap();
        assert_eq!(g[0], -10.0);
    }

    #[test]
    fn update_examples() {
        let w = WeightVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let same = exponentiated_update(&w, &[0.7; 3], 2.0).unwrap();
        for (a, b) in same.as_slice().iter().zip(w.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }

        let u = WeightVector::uniform(4);
        let next = exponentiated_update(&u, &[-1.0, 0.0, 0.0, 0.0], 0.5).unwrap();
        let n = next.as_slice();
        assert!(n[0] > 0.25);
        assert!(n[1] < 0.25);
        assert_eq!(n[1], n[2]);
        assert_eq!(n[2], n[3]);

        let z = WeightVector::new(vec![0.0, 0.4, 0.6]).unwrap();
        let mut cur = z;
        for _ in 0..20 {
            cur = exponentiated_update(&cur, &[-5.0, 1.0, 2.0], 1.0).unwrap();
            assert_eq!(cur.as_slice()[0], 0.0);
        }
    }

    #[test]
    fn huge_gradients_do_not_overflow() {
        let u = WeightVector::uniform(3);
        let next = exponentiated_update(&u, &[-1e4, 0.0, 1e4], 1.0).unwrap();
        assert!((next.as_slice()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_first_epoch_stays_uniform() {
        let k = 5;
        let a = MediaObjectAccumulators::new(k, 1.0);
        let obs = EpochObservation::new(vec![1000; k], vec![3; k], vec![1.0; k]).unwrap();
        let (_, w) = partition_step(
            &a,
            &obs,
            &[2.0; 5],
            &WeightVector::uniform(k),
            &params(1.0),
            0,
        )
        .unwrap();
        for wi in w.as_slice() {
            assert!((wi - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn better_media_object_gains_weight() {
        let k = 3;
        let a = MediaObjectAccumulators::new(k, 1.0);
        let obs = EpochObservation::new(vec![1000; k], vec![9, 3, 3], vec![1.0; k]).unwrap();
        let p = PartitionerParams {
            exploration: 1e-300,
            ..params(1.0)
        };
        let (_, w) =
            partition_step(&a, &obs, &[1.0; 3], &WeightVector::uniform(k), &p, 400).unwrap();
        assert!(w.as_slice()[0] > 1.0 / 3.0);
    }

    #[test]
    fn strong_regularization_pulls_toward_uniform() {
        let k = 6;
        let p = PartitionerParams {
            learning_rate: 0.001,
            exploration: 100.0,
            regularization_discount: 1.0,
            discount: 0.5,
        };
        let start = WeightVector::normalized(&[5.0, 1.0, 1.0, 0.5, 2.0, 3.0]).unwrap();
        let obs =
            EpochObservation::new(vec![1000; k], vec![4, 1, 2, 3, 1, 2], vec![1.0; k]).unwrap();
        let mut w = start;
        let mut a = MediaObjectAccumulators::new(k, 1.0);
        let dist = |w: &WeightVector| {
            w.as_slice()
                .iter()
                .map(|x| (x - 1.0 / k as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let mut prev = dist(&w);
        for _ in 0..50 {
            let budgets = w.allocate(6.0);
            let (na, nw) = partition_step(&a, &obs, &budgets, &w, &p, 0).unwrap();
            a = na;
            w = nw;
            let d = dist(&w);
            assert!(d < prev, "distance to uniform went from {prev} to {d}");
            prev = d;
        }
    }

    fn simplex_point(k: usize) -> impl Strategy<Value = WeightVector> {
        proptest::collection::vec(0.0f64..1.0, k)
            .prop_filter("non-degenerate", |v| v.iter().sum::<f64>() > 1e-6)
            .prop_map(|v| WeightVector::normalized(&v).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn update_preserves_simplex(
            (w, grad) in (1usize..15).prop_flat_map(|k| (simplex_point(k), proptest::collection::vec(-50.0f64..50.0, k))),
            alpha in 0.01f64..5.0,
        ) {
            let next = exponentiated_update(&w, &grad, alpha).unwrap();
            let sum: f64 = next.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(next.as_slice().iter().all(|x| *x >= 0.0));
        }

        #[test]
        fn update_is_shift_invariant(
            (w, grad) in (1usize..15).prop_flat_map(|k| (simplex_point(k), proptest::collection::vec(-5.0f64..5.0, k))),
            alpha in 0.01f64..2.0,
            shift in -3.0f64..3.0,
        ) {
            let a = exponentiated_update(&w, &grad, alpha).unwrap();
            let shifted: Vec<f64> = grad.iter().map(|g| g + shift).collect();
            let b = exponentiated_update(&w, &shifted, alpha).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn gradient_respects_clip(
            (w, q) in (1usize..15).prop_flat_map(|k| (simplex_point(k), proptest::collection::vec(0.0f64..1.0, k))),
            lambda in 0.0f64..1e4,
            alpha in 0.01f64..10.0,
        ) {
            let qv = QualityVector { raw: q.clone(), rescaled: q };
            let g = loss_gradient(&qv, &w, lambda, alpha).unwrap();
            prop_assert!(g.iter().all(|x| x.abs() <= 10.0 / alpha));
        }
    }
}
