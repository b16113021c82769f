//! Virtual-logit matching.
//!
//! The training covariance's top-`D` eigenvectors span the principal subspace;
//! a sample's residual is the norm of its centered feature projected onto the
//! orthogonal complement. The residual, rescaled by `alpha`, acts as the logit
//! of an extra "virtual" OOD class. We report
//! `logsumexp(logits) − alpha·residual`, which is a strictly decreasing function
//! of the virtual-class softmax probability.

use crate::data::{FeatureSet, ScoreVector};
use crate::error::{Error, Result};
use crate::linalg::{covariance_eig, dot, Matrix};
use crate::scalar::Scalar;
use crate::softmax::log_sum_exp;

use super::check_width;

const ORTHO_TOL: f64 = 1e-8;

/// Default principal dimension: half the feature width, capped at 256.
pub fn default_principal_dim(dim: usize) -> usize {
    (dim / 2).min(256)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VimModel<T> {
    mean: Vec<T>,
    principal: Matrix<T>,
    residual: Matrix<T>,
    alpha: T,
    class_count: usize,
}

impl<T: Scalar> VimModel<T> {
    /// Assembles a model from explicit parts, checking the basis invariants.
    pub fn from_parts(
        mean: Vec<T>,
        principal: Matrix<T>,
        residual: Matrix<T>,
        alpha: T,
        class_count: usize,
    ) -> Result<Self> {
        let d = mean.len();
        if principal.rows() != d || residual.rows() != d {
            return Err(Error::Dimension(format!(
                "bases must have {d} rows, got {} and {}",
                principal.rows(),
                residual.rows()
            )));
        }
        if principal.cols() + residual.cols() != d || principal.cols() == 0 || residual.cols() == 0
        {
            return Err(Error::Dimension(format!(
                "principal ({}) and residual ({}) dimensions must be positive and sum to {d}",
                principal.cols(),
                residual.cols()
            )));
        }
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::Parameter(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        let tol = T::lit(ORTHO_TOL);
        let ptp = principal.transpose().matmul(&principal)?;
        let qtq = residual.transpose().matmul(&residual)?;
        let ptq = principal.transpose().matmul(&residual)?;
        if ptp.max_abs_diff(&Matrix::identity(principal.cols())) > tol
            || qtq.max_abs_diff(&Matrix::identity(residual.cols())) > tol
            || ptq.max_abs_diff(&Matrix::zeros(ptq.rows(), ptq.cols())) > tol
        {
            return Err(Error::Validation(
                "principal and residual bases are not orthonormal complements".into(),
            ));
        }
        Ok(Self {
            mean,
            principal,
            residual,
            alpha,
            class_count,
        })
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn principal_basis(&self) -> &Matrix<T> {
        &self.principal
    }

    pub fn residual_basis(&self) -> &Matrix<T> {
        &self.residual
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn principal_dim(&self) -> usize {
        self.principal.cols()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// `‖Qᵀ(f − mean)‖₂`, equal to `‖QQᵀ(f − mean)‖₂` for orthonormal `Q`.
    pub fn residual_norm(&self, feature: &[T]) -> T {
        let centered: Vec<T> = feature
            .iter()
            .zip(&self.mean)
            .map(|(&f, &m)| f - m)
            .collect();
        let d_res = self.residual.cols();
        let mut coords = vec![T::zero(); d_res];
        for (i, &c) in centered.iter().enumerate() {
            if c == T::zero() {
                continue;
            }
            for (k, coord) in coords.iter_mut().enumerate() {
                *coord += self.residual[(i, k)] * c;
            }
        }
        dot(&coords, &coords).sqrt()
    }

    /// Residual norms of every row of `features`.
    pub fn residual_norms(&self, features: &Matrix<T>) -> Result<Vec<T>> {
        if features.cols() != self.dim() {
            return Err(Error::Dimension(format!(
                "features have width {}, model expects {}",
                features.cols(),
                self.dim()
            )));
        }
        Ok(features.row_iter().map(|r| self.residual_norm(r)).collect())
    }

    /// Refits `alpha` against `train`'s logits, keeping the subspaces.
    /// Used after the logits are recalibrated so the virtual logit stays on
    /// the same scale.
    pub fn refit_alpha(&mut self, train: &FeatureSet<T>) -> Result<()> {
        check_width(train, self.dim())?;
        let logits = train.require_logits()?;
        let residuals = self.residual_norms(train.features())?;
        self.alpha = matched_alpha(logits, &residuals)?;
        Ok(())
    }
}

/// `Σ max logit / Σ residual norm`, falling back to 1 when every residual is 0.
fn matched_alpha<T: Scalar>(logits: &Matrix<T>, residuals: &[T]) -> Result<T> {
    let max_logit_sum: T = logits
        .row_iter()
        .map(|r| r.iter().copied().fold(T::neg_infinity(), T::max))
        .sum();
    let residual_sum: T = residuals.iter().copied().sum();
    if residual_sum == T::zero() {
        return Ok(T::one());
    }
    let alpha = max_logit_sum / residual_sum;
    if !(alpha > T::zero()) || !alpha.is_finite() {
        return Err(Error::Numeric(format!(
            "virtual-logit scale is {alpha}; the mean maximum training logit must be positive"
        )));
    }
    Ok(alpha)
}

/// Fits a ViM model on `train` with a `principal_dim`-dimensional principal subspace.
pub fn fit_vim<T: Scalar>(train: &FeatureSet<T>, principal_dim: usize) -> Result<VimModel<T>> {
    let d = train.dim();
    if principal_dim < 1 || principal_dim >= d {
        return Err(Error::Dimension(format!(
            "principal dimension must satisfy 1 <= D < d = {d}, got D = {principal_dim}"
        )));
    }
    let logits = train.require_logits()?;
    let (mean, eig) = covariance_eig(train.features())?;
    let mut model = VimModel {
        mean,
        principal: eig.vectors.columns(0..principal_dim),
        residual: eig.vectors.columns(principal_dim..d),
        alpha: T::one(),
        class_count: train.class_count(),
    };
    let residuals = model.residual_norms(train.features())?;
    model.alpha = matched_alpha(logits, &residuals)?;
    Ok(model)
}

/// ID-ness score `logsumexp(logits) − alpha·residual` per row.
pub fn score_vim<T: Scalar>(model: &VimModel<T>, batch: &FeatureSet<T>) -> Result<ScoreVector<T>> {
    check_width(batch, model.dim())?;
    let logits = batch.require_logits()?;
    if logits.cols() != model.class_count {
        return Err(Error::Dimension(format!(
            "batch has {} logits, model was fitted with {}",
            logits.cols(),
            model.class_count
        )));
    }
    let scores = batch
        .features()
        .row_iter()
        .zip(logits.row_iter())
        .map(|(f, z)| log_sum_exp(z) - model.alpha * model.residual_norm(f))
        .collect();
    ScoreVector::new(scores)
}
