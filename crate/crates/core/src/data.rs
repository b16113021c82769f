//! Dataset-split containers shared by the scorers, calibration and training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Penultimate features of one split, with optional aligned logits and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    features: Matrix<T>,
    logits: Option<Matrix<T>>,
    labels: Option<Vec<usize>>,
    class_count: usize,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn new(
        features: Matrix<T>,
        logits: Option<Matrix<T>>,
        labels: Option<Vec<usize>>,
        class_count: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if !features.is_finite() {
            return Err(Error::Validation(
                "features contain NaN or infinite values".into(),
            ));
        }
        if let Some(l) = &logits {
            if l.rows() != n {
                return Err(Error::Dimension(format!(
                    "logits have {} rows, features have {n}",
                    l.rows()
                )));
            }
            if l.cols() != class_count {
                return Err(Error::Dimension(format!(
                    "logits have {} columns, class count is {class_count}",
                    l.cols()
                )));
            }
            if !l.is_finite() {
                return Err(Error::Validation(
                    "logits contain NaN or infinite values".into(),
                ));
            }
        }
        if let Some(y) = &labels {
            if y.len() != n {
                return Err(Error::Dimension(format!(
                    "labels have length {}, features have {n} rows",
                    y.len()
                )));
            }
            if let Some((i, &bad)) = y.iter().enumerate().find(|(_, &c)| c >= class_count) {
                return Err(Error::Validation(format!(
                    "label {bad} at row {i} is outside [0, {class_count})"
                )));
            }
        }
        Ok(Self {
            features,
            logits,
            labels,
            class_count,
        })
    }

    /// Features only; `class_count` is still needed by label-aware consumers.
    pub fn from_features(features: Matrix<T>, class_count: usize) -> Result<Self> {
        Self::new(features, None, None, class_count)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    #[inline]
    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    #[inline]
    pub fn logits(&self) -> Option<&Matrix<T>> {
        self.logits.as_ref()
    }

    #[inline]
    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn require_logits(&self) -> Result<&Matrix<T>> {
        self.logits
            .as_ref()
            .ok_or_else(|| Error::Validation("this operation needs logits".into()))
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Validation("this operation needs labels".into()))
    }

    /// Returns a copy with the logits replaced.
    pub fn with_logits(&self, logits: Matrix<T>) -> Result<Self> {
        Self::new(
            self.features.clone(),
            Some(logits),
            self.labels.clone(),
            self.class_count,
        )
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Result<Vec<u64>> {
        let labels = self.require_labels()?;
        let mut counts = vec![0u64; self.class_count];
        for &y in labels {
            counts[y] += 1;
        }
        Ok(counts)
    }
}

/// Per-class sample counts and their max-normalized frequencies `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassQuantity {
    counts: Vec<u64>,
    q: Vec<f64>,
}

impl ClassQuantity {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let max = counts.iter().copied().max().unwrap_or(0);
        if max == 0 {
            return Err(Error::Validation(
                "class counts are empty or all zero".into(),
            ));
        }
        let q = counts.iter().map(|&c| c as f64 / max as f64).collect();
        Ok(Self { counts, q })
    }

    pub fn from_labels(labels: &[usize], class_count: usize) -> Result<Self> {
        let mut counts = vec![0u64; class_count];
        for &y in labels {
            if y >= class_count {
                return Err(Error::Validation(format!(
                    "label {y} is outside [0, {class_count})"
                )));
            }
            counts[y] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Per-row scores with the uniform convention: higher means more ID-like.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<T>(Vec<T>);

impl<T: Scalar> ScoreVector<T> {
    pub fn new(scores: Vec<T>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("score at row {i} is not finite")));
        }
        Ok(Self(scores))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> T {
        self.0.iter().copied().sum::<T>() / T::from_usize_lossy(self.0.len().max(1))
    }
}

impl<T> AsRef<[T]> for ScoreVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}
