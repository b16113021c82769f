//! Post-hoc OOD scorers. Every scorer returns a [`ScoreVector`] where higher
//! means more in-distribution, so the metrics never need a polarity flag.

mod knn;
mod mds;
mod msp;
mod vim;

pub use knn::{fit_knn, score_knn, KnnModel, DEFAULT_K};
pub use mds::{fit_mds, score_mds, MdsModel};
pub use msp::score_msp;
pub use vim::{default_principal_dim, fit_vim, score_vim, VimModel};

use std::fmt;
use std::str::FromStr;

use crate::data::{FeatureSet, ScoreVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::softmax::Temperature;

/// Names of the available scorers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScorerKind {
    Vim,
    Mds,
    Knn,
    Msp,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 4] = [
        ScorerKind::Vim,
        ScorerKind::Mds,
        ScorerKind::Knn,
        ScorerKind::Msp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::Vim => "vim",
            ScorerKind::Mds => "mds",
            ScorerKind::Knn => "knn",
            ScorerKind::Msp => "msp",
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vim" => Ok(ScorerKind::Vim),
            "mds" => Ok(ScorerKind::Mds),
            "knn" => Ok(ScorerKind::Knn),
            "msp" => Ok(ScorerKind::Msp),
            other => Err(Error::Parameter(format!("unknown scorer `{other}`"))),
        }
    }
}

/// A fitted scorer of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedScorer<T> {
    Vim(VimModel<T>),
    Mds(MdsModel<T>),
    Knn(KnnModel<T>),
    Msp,
}

impl<T: Scalar> FittedScorer<T> {
    pub fn kind(&self) -> ScorerKind {
        match self {
            FittedScorer::Vim(_) => ScorerKind::Vim,
            FittedScorer::Mds(_) => ScorerKind::Mds,
            FittedScorer::Knn(_) => ScorerKind::Knn,
            FittedScorer::Msp => ScorerKind::Msp,
        }
    }

    /// Scores a batch. `temperature` rescales the logits of logit-based scorers
    /// (ViM, MSP) and is ignored by the feature-space ones.
    pub fn score(
        &self,
        batch: &FeatureSet<T>,
        temperature: Option<&Temperature<T>>,
    ) -> Result<ScoreVector<T>> {
        match self {
            FittedScorer::Vim(m) => match temperature {
                Some(t) => score_vim(m, &scaled_logits(batch, t)?),
                None => score_vim(m, batch),
            },
            FittedScorer::Mds(m) => score_mds(m, batch),
            FittedScorer::Knn(m) => score_knn(m, batch),
            FittedScorer::Msp => score_msp(batch, temperature.unwrap_or(&Temperature::one())),
        }
    }
}

/// Copy of `batch` whose logits are divided by `temperature`.
pub fn scaled_logits<T: Scalar>(
    batch: &FeatureSet<T>,
    temperature: &Temperature<T>,
) -> Result<FeatureSet<T>> {
    let logits = batch.require_logits()?;
    temperature.validate(logits.cols())?;
    let mut scaled = logits.clone();
    let mut buf = Vec::with_capacity(logits.cols());
    for i in 0..logits.rows() {
        temperature.scale_into(logits.row(i), &mut buf);
        scaled.row_mut(i).copy_from_slice(&buf);
    }
    batch.with_logits(scaled)
}

pub(crate) fn check_width<T: Scalar>(batch: &FeatureSet<T>, expected: usize) -> Result<()> {
    if batch.dim() != expected {
        return Err(Error::Dimension(format!(
            "batch has feature width {}, model expects {expected}",
            batch.dim()
        )));
    }
    Ok(())
}
