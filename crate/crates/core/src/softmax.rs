//! Numerically safe softmax and log-sum-exp with scalar or per-class temperature.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Temperature applied to logits before the softmax: `z / T` for a scalar,
/// `z_i / T_i` for a per-class vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Temperature<T> {
    Scalar(T),
    PerClass(Vec<T>),
}

impl<T: Scalar> Temperature<T> {
    pub fn one() -> Self {
        Temperature::Scalar(T::one())
    }

    /// Checks positivity and, for a vector, that the length matches `classes`.
    pub fn validate(&self, classes: usize) -> Result<()> {
        match self {
            Temperature::Scalar(t) => {
                if !(*t > T::zero()) || !t.is_finite() {
                    return Err(Error::Parameter(format!(
                        "temperature must be positive and finite, got {t}"
                    )));
                }
            }
            Temperature::PerClass(ts) => {
                if ts.len() != classes {
                    return Err(Error::Dimension(format!(
                        "per-class temperature has {} entries, logits have {classes}",
                        ts.len()
                    )));
                }
                if let Some((i, t)) = ts
                    .iter()
                    .enumerate()
                    .find(|(_, t)| !(**t > T::zero()) || !t.is_finite())
                {
                    return Err(Error::Parameter(format!(
                        "temperature for class {i} must be positive and finite, got {t}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Divides `logits` by the temperature into `out`. Assumes `validate` passed.
    #[inline]
    pub fn scale_into(&self, logits: &[T], out: &mut Vec<T>) {
        out.clear();
        match self {
            Temperature::Scalar(t) => out.extend(logits.iter().map(|&z| z / *t)),
            Temperature::PerClass(ts) => out.extend(logits.iter().zip(ts).map(|(&z, &t)| z / t)),
        }
    }

    pub fn scale(&self, logits: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(logits.len());
        self.scale_into(logits, &mut out);
        out
    }
}

/// `log Σ exp(z_i)` with max-subtraction. Empty input gives −∞.
pub fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let sum: T = z.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// In-place softmax of already temperature-scaled logits.
pub fn softmax_in_place<T: Scalar>(z: &mut [T]) {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Softmax of `logits / temperature`.
pub fn softmax<T: Scalar>(logits: &[T], temperature: &Temperature<T>) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::Dimension("softmax of an empty vector".into()));
    }
    temperature.validate(logits.len())?;
    let mut out = temperature.scale(logits);
    softmax_in_place(&mut out);
    Ok(out)
}

/// Log-softmax of already temperature-scaled logits.
pub fn log_softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let lse = log_sum_exp(z);
    z.iter().map(|&v| v - lse).collect()
}

/// Index of the largest entry, ties broken toward the lowest index.
pub fn argmax<T: Scalar>(z: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_for_equal_logits() {
        let p = softmax(&[0.0, 0.0], &Temperature::Scalar(1.0)).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let p = softmax(&[1000.0f64, 0.0], &Temperature::Scalar(1.0)).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
    }

    #[test]
    fn matches_extended_precision_reference() {
        // 50-digit reference values for softmax((2, 1, 0) / 2)
        let expected = [0.506480391055654, 0.3071958857184984, 0.1863237232258476];
        let p = softmax(&[2.0f64, 1.0, 0.0], &Temperature::Scalar(2.0)).unwrap();
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn per_class_temperature_divides_elementwise() {
        let t = Temperature::PerClass(vec![1.0, 2.0]);
        assert_eq!(t.scale(&[4.0, 4.0]), vec![4.0, 2.0]);
    }

    #[test]
    fn non_positive_temperature_rejected() {
        assert!(matches!(
            softmax(&[1.0, 2.0], &Temperature::Scalar(0.0)),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            softmax(&[1.0, 2.0], &Temperature::PerClass(vec![1.0, -1.0])),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            softmax(&[1.0, 2.0], &Temperature::PerClass(vec![1.0])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn single_precision() {
        let p = softmax(&[2.0f32, 1.0, 0.0], &Temperature::Scalar(1.0)).unwrap();
        assert!((p[0] - 0.665_240_96).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn sums_to_one(z in prop::collection::vec(-50.0f64..50.0, 1..12), t in 0.05f64..10.0) {
            let p = softmax(&z, &Temperature::Scalar(t)).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn shift_invariant(z in prop::collection::vec(-50.0f64..50.0, 1..12), c in -100.0f64..100.0) {
            let p = softmax(&z, &Temperature::Scalar(1.0)).unwrap();
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let q = softmax(&shifted, &Temperature::Scalar(1.0)).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
