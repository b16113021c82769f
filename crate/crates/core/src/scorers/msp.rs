use crate::data::{FeatureSet, ScoreVector};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::softmax::{softmax_in_place, Temperature};

/// Maximum softmax probability of `logits / temperature`.
pub fn score_msp<T: Scalar>(
    batch: &FeatureSet<T>,
    temperature: &Temperature<T>,
) -> Result<ScoreVector<T>> {
    let logits = batch.require_logits()?;
    temperature.validate(logits.cols())?;
    let mut buf = Vec::with_capacity(logits.cols());
    let scores = logits
        .row_iter()
        .map(|row| {
            temperature.scale_into(row, &mut buf);
            softmax_in_place(&mut buf);
            buf.iter().copied().fold(T::zero(), T::max)
        })
        .collect();
    ScoreVector::new(scores)
}
