//! OOD detection metrics over ID-positive score vectors.
//!
//! Conventions: higher score means "predicted ID". AUROC counts ties as half
//! a win, the PR curve groups tied scores into one threshold, and FPR@TPR uses
//! the `score >= threshold` rule with the largest threshold reaching the
//! target TPR.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::softmax::argmax;

fn non_empty<T>(scores: &[T], what: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Validation(format!("{what} scores are empty")));
    }
    Ok(())
}

fn cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).expect("scores are finite")
}

/// Area under the ROC curve with ID as the positive class, via the rank-sum
/// (Mann–Whitney) statistic with mid-ranks for ties.
pub fn auroc<T: Scalar>(id: &[T], ood: &[T]) -> Result<f64> {
    non_empty(id, "ID")?;
    non_empty(ood, "OOD")?;
    let mut all: Vec<(T, bool)> = id
        .iter()
        .map(|&s| (s, true))
        .chain(ood.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| cmp(&a.0, &b.0));

    // Twice the ID rank sum, kept in integers so ties are exact.
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        let ids_in_group = all[start..end].iter().filter(|e| e.1).count() as u128;
        // ranks start+1 ..= end; doubled mid-rank = start + 1 + end
        doubled_rank_sum += ids_in_group * (start + 1 + end) as u128;
        start = end;
    }
    let (n_id, n_ood) = (id.len() as u128, ood.len() as u128);
    let doubled_u = doubled_rank_sum - n_id * (n_id + 1);
    Ok(doubled_u as f64 / (2 * n_id * n_ood) as f64)
}

/// ROC curve points `(fpr, tpr)` from the strictest threshold down, starting at (0, 0).
pub fn roc_curve<T: Scalar>(id: &[T], ood: &[T]) -> Result<Vec<(f64, f64)>> {
    non_empty(id, "ID")?;
    non_empty(ood, "OOD")?;
    let mut all: Vec<(T, bool)> = id
        .iter()
        .map(|&s| (s, true))
        .chain(ood.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| cmp(&b.0, &a.0));
    let (n_id, n_ood) = (id.len() as f64, ood.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_ood, tp as f64 / n_id));
    }
    Ok(points)
}

/// AUROC by trapezoidal integration of the ROC curve.
pub fn auroc_trapezoid<T: Scalar>(id: &[T], ood: &[T]) -> Result<f64> {
    let pts = roc_curve(id, ood)?;
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
        .sum())
}

/// False positive rate at the largest threshold whose TPR reaches `tpr_target`.
pub fn fpr_at_tpr<T: Scalar>(id: &[T], ood: &[T], tpr_target: f64) -> Result<f64> {
    non_empty(id, "ID")?;
    non_empty(ood, "OOD")?;
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::Parameter(format!(
            "TPR target must lie in (0, 1], got {tpr_target}"
        )));
    }
    let mut sorted = id.to_vec();
    sorted.sort_by(|a, b| cmp(b, a));
    let n_id = id.len() as f64;
    let mut threshold = sorted[sorted.len() - 1];
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i];
        while i < sorted.len() && sorted[i] == s {
            i += 1;
        }
        if i as f64 / n_id >= tpr_target {
            threshold = s;
            break;
        }
    }
    let false_pos = ood.iter().filter(|&&s| s >= threshold).count();
    Ok(false_pos as f64 / ood.len() as f64)
}

/// Area under the precision–recall curve, `Σ (R_k − R_{k−1})·P_k` over
/// descending thresholds, for `positive` scored above `negative`.
pub fn aupr<T: Scalar>(positive: &[T], negative: &[T]) -> Result<f64> {
    non_empty(positive, "positive")?;
    let mut all: Vec<(T, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| cmp(&b.0, &a.0));
    let n_pos = positive.len() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos;
        if recall > prev_recall {
            area += (recall - prev_recall) * (tp as f64 / (tp + fp) as f64);
            prev_recall = recall;
        }
    }
    Ok(area)
}

/// Fraction of rows whose argmax logit equals the label.
pub fn id_accuracy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} logit rows but {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Validation("accuracy of an empty set".into()));
    }
    let correct = logits
        .row_iter()
        .zip(labels)
        .filter(|(z, &y)| argmax(z) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// All OOD metrics of one scorer on one ID/OOD split pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scorer_name: String,
    pub split_name: String,
    pub n_id: usize,
    pub n_ood: usize,
    pub fpr_at_95: f64,
    pub auroc: f64,
    pub aupr_in: f64,
    pub aupr_out: f64,
    pub id_accuracy: Option<f64>,
    pub id_ece: Option<f64>,
}

/// Optional inlier classification inputs for [`evaluate`].
#[derive(Debug, Clone, Copy)]
pub struct InlierOutputs<'a, T> {
    pub logits: &'a Matrix<T>,
    pub labels: &'a [usize],
    /// Calibrated class probabilities, when an ECE should be reported.
    pub probabilities: Option<&'a Matrix<T>>,
}

pub fn evaluate<T: Scalar>(
    scorer_name: &str,
    split_name: &str,
    id: &[T],
    ood: &[T],
    inliers: Option<InlierOutputs<'_, T>>,
) -> Result<EvalReport> {
    let negated = |s: &[T]| s.iter().map(|&v| -v).collect::<Vec<_>>();
    let (id_accuracy, id_ece) = match inliers {
        Some(inl) => {
            let acc = id_accuracy(inl.logits, inl.labels)?;
            let ece = match inl.probabilities {
                Some(p) => Some(crate::calibration::ece(
                    p,
                    inl.labels,
                    crate::calibration::DEFAULT_ECE_BINS,
                )?),
                None => None,
            };
            (Some(acc), ece)
        }
        None => (None, None),
    };
    Ok(EvalReport {
        scorer_name: scorer_name.to_string(),
        split_name: split_name.to_string(),
        n_id: id.len(),
        n_ood: ood.len(),
        fpr_at_95: fpr_at_tpr(id, ood, 0.95)?,
        auroc: auroc(id, ood)?,
        aupr_in: aupr(id, ood)?,
        aupr_out: aupr(&negated(ood), &negated(id))?,
        id_accuracy,
        id_ece,
    })
}

/// Aligned text table, rates as percentages with two decimals.
pub fn render_table(reports: &[EvalReport]) -> String {
    let pct = |v: f64| format!("{:.2}", v * 100.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "scorer", "split", "FPR@95", "AUROC", "AUPR-In", "AUPR-Out", "Acc", "ECE"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<10} {:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            r.scorer_name,
            r.split_name,
            pct(r.fpr_at_95),
            pct(r.auroc),
            pct(r.aupr_in),
            pct(r.aupr_out),
            r.id_accuracy.map_or_else(|| "-".into(), pct),
            r.id_ece.map_or_else(|| "-".into(), pct),
        );
    }
    out
}
