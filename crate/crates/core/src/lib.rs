//! Post-hoc out-of-distribution scoring over exported feature/logit matrices.
//!
//! * [`scorers`]: ViM, Mahalanobis (MDS), k-nearest-neighbour and MSP
//!   scores, all oriented so that higher means more in-distribution.
//! * [`calibration`]: temperature scaling plus per-class temperatures and
//!   label smoothing driven by class frequency.
//! * [`mixup`]: margin-constrained mixup pairs, the 2×2 decoupling solve and a
//!   small reference MLP trainer.
//! * [`metrics`]: AUROC, FPR at 95% TPR, AUPR-In/Out, accuracy and ECE.
//! * [`io`]: NPY/CSV, manifests, the model container, synthetic data.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

// `!(x > 0)` deliberately treats NaN as invalid
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod data;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod mixup;
pub mod rng;
pub mod scalar;
pub mod scorers;
pub mod softmax;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type FeatureSet = data::FeatureSet<f64>;
pub type ScoreVector = data::ScoreVector<f64>;
pub type Temperature = softmax::Temperature<f64>;
pub type VimModel = scorers::VimModel<f64>;
pub type MdsModel = scorers::MdsModel<f64>;
pub type KnnModel = scorers::KnnModel<f64>;
pub type FittedScorer = scorers::FittedScorer<f64>;
pub type AlphaPair = mixup::AlphaPair<f64>;
pub type MlpModel = mixup::MlpModel<f64>;

pub type Matrix32 = linalg::Matrix<f32>;
pub type FeatureSet32 = data::FeatureSet<f32>;

pub use calibration::CalibrationParams;
pub use data::ClassQuantity;
pub use metrics::EvalReport;
pub use mixup::TrainConfig;
