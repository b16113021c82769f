//! Deep nearest-neighbour scoring: negative distance to the k-th nearest
//! training feature, exact brute-force search.

use crate::data::{FeatureSet, ScoreVector};
use crate::error::{Error, Result};
use crate::linalg::{norm, squared_distance, Matrix};
use crate::scalar::Scalar;

use super::check_width;

pub const DEFAULT_K: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel<T> {
    bank: Matrix<T>,
    k: usize,
    normalize: bool,
}

impl<T: Scalar> KnnModel<T> {
    pub fn from_parts(bank: Matrix<T>, k: usize, normalize: bool) -> Result<Self> {
        if k < 1 || k > bank.rows() {
            return Err(Error::Parameter(format!(
                "k must satisfy 1 <= k <= {}, got {k}",
                bank.rows()
            )));
        }
        Ok(Self { bank, k, normalize })
    }

    pub fn bank(&self) -> &Matrix<T> {
        &self.bank
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn normalize(&self) -> bool {
        self.normalize
    }

    /// Distance from `query` to its k-th nearest bank row.
    pub fn kth_distance(&self, query: &[T], scratch: &mut Vec<T>) -> T {
        scratch.clear();
        scratch.extend(self.bank.row_iter().map(|b| squared_distance(query, b)));
        let (_, kth, _) = scratch.select_nth_unstable_by(self.k - 1, |a, b| {
            a.partial_cmp(b).expect("finite distances")
        });
        kth.sqrt()
    }
}

fn unit_rows<T: Scalar>(m: &Matrix<T>, what: &str) -> Result<Matrix<T>> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let len = norm(row);
        if len == T::zero() {
            return Err(Error::Validation(format!(
                "{what} row {i} has zero length and cannot be normalized"
            )));
        }
        for v in row.iter_mut() {
            *v /= len;
        }
    }
    Ok(out)
}

pub fn fit_knn<T: Scalar>(train: &FeatureSet<T>, k: usize, normalize: bool) -> Result<KnnModel<T>> {
    let bank = if normalize {
        unit_rows(train.features(), "training")?
    } else {
        train.features().clone()
    };
    KnnModel::from_parts(bank, k, normalize)
}

pub fn score_knn<T: Scalar>(model: &KnnModel<T>, batch: &FeatureSet<T>) -> Result<ScoreVector<T>> {
    check_width(batch, model.bank.cols())?;
    let queries = if model.normalize {
        unit_rows(batch.features(), "query")?
    } else {
        batch.features().clone()
    };
    let mut scratch = Vec::with_capacity(model.bank.rows());
    let scores = queries
        .row_iter()
        .map(|q| -model.kth_distance(q, &mut scratch))
        .collect();
    ScoreVector::new(scores)
}
