//! Mahalanobis distance to the nearest class centroid under a tied covariance.

use crate::data::{FeatureSet, ScoreVector};
use crate::error::{Error, Result};
use crate::linalg::{accumulate_outer_upper, mirror_upper_and_scale, spd_inverse, Matrix};
use crate::scalar::Scalar;

use super::check_width;

#[derive(Debug, Clone, PartialEq)]
pub struct MdsModel<T> {
    class_means: Matrix<T>,
    precision: Matrix<T>,
    ridge: T,
}

impl<T: Scalar> MdsModel<T> {
    pub fn from_parts(class_means: Matrix<T>, precision: Matrix<T>, ridge: T) -> Result<Self> {
        let d = class_means.cols();
        if precision.rows() != d || precision.cols() != d {
            return Err(Error::Dimension(format!(
                "precision must be {d}x{d}, got {}x{}",
                precision.rows(),
                precision.cols()
            )));
        }
        if precision.max_abs_diff(&precision.transpose()) > T::lit(1e-8) {
            return Err(Error::Validation(
                "precision matrix is not symmetric".into(),
            ));
        }
        Ok(Self {
            class_means,
            precision,
            ridge,
        })
    }

    pub fn class_means(&self) -> &Matrix<T> {
        &self.class_means
    }

    pub fn precision(&self) -> &Matrix<T> {
        &self.precision
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.class_means.cols()
    }

    /// Squared Mahalanobis distance from `f` to the closest class mean.
    pub fn min_distance(&self, f: &[T]) -> T {
        let d = self.dim();
        let mut diff = vec![T::zero(); d];
        let mut best = T::infinity();
        for mu in self.class_means.row_iter() {
            for ((o, &a), &b) in diff.iter_mut().zip(f).zip(mu) {
                *o = a - b;
            }
            let mut q = T::zero();
            for i in 0..d {
                let pi = self.precision.row(i);
                let mut acc = T::zero();
                for j in 0..d {
                    acc += pi[j] * diff[j];
                }
                q += diff[i] * acc;
            }
            best = best.min(q);
        }
        best.max(T::zero())
    }
}

/// Within-class (tied) covariance with `1/(n − N)` normalization, plus class means.
pub fn tied_covariance<T: Scalar>(train: &FeatureSet<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let labels = train.require_labels()?;
    let (n, d, classes) = (train.len(), train.dim(), train.class_count());
    let counts = train.class_counts()?;
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Validation(format!(
            "class {c} has no training samples"
        )));
    }
    if n <= classes {
        return Err(Error::Dimension(format!(
            "tied covariance needs more samples ({n}) than classes ({classes})"
        )));
    }
    let mut means = Matrix::zeros(classes, d);
    for (f, &y) in train.features().row_iter().zip(labels) {
        for (m, &v) in means.row_mut(y).iter_mut().zip(f) {
            *m += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        let cnt = T::from_u64(count).expect("count fits");
        for m in means.row_mut(c) {
            *m /= cnt;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![T::zero(); d];
    for (f, &y) in train.features().row_iter().zip(labels) {
        for ((c, &v), &m) in centered.iter_mut().zip(f).zip(means.row(y)) {
            *c = v - m;
        }
        accumulate_outer_upper(&mut cov, &centered);
    }
    mirror_upper_and_scale(&mut cov, T::from_usize_lossy(n - classes));
    Ok((means, cov))
}

/// Fits class means and the inverse of the ridge-regularized tied covariance.
/// `ridge = None` picks `1e-6 · trace(Σ)/d`.
pub fn fit_mds<T: Scalar>(train: &FeatureSet<T>, ridge: Option<T>) -> Result<MdsModel<T>> {
    let (means, mut cov) = tied_covariance(train)?;
    let d = train.dim();
    let ridge = match ridge {
        Some(r) if r < T::zero() || !r.is_finite() => {
            return Err(Error::Parameter(format!(
                "ridge must be non-negative, got {r}"
            )));
        }
        Some(r) => r,
        None => T::lit(1e-6) * cov.trace() / T::from_usize_lossy(d),
    };
    for i in 0..d {
        cov[(i, i)] += ridge;
    }
    let precision = spd_inverse(&cov).map_err(|e| match e {
        Error::Numeric(msg) => Error::Numeric(format!(
            "tied covariance is singular at ridge {ridge} ({msg}); use a larger ridge"
        )),
        other => other,
    })?;
    Ok(MdsModel {
        class_means: means,
        precision,
        ridge,
    })
}

/// `−min_c (f − μ_c)ᵀ Σ⁻¹ (f − μ_c)` per row.
pub fn score_mds<T: Scalar>(model: &MdsModel<T>, batch: &FeatureSet<T>) -> Result<ScoreVector<T>> {
    check_width(batch, model.dim())?;
    let scores = batch
        .features()
        .row_iter()
        .map(|f| -model.min_distance(f))
        .collect();
    ScoreVector::new(scores)
}
