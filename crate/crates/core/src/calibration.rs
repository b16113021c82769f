//! Long-tailed calibration: optimal temperature search, category-quantity
//! temperature and label-smoothing vectors, smoothed targets and ECE/NLL.
//!
//! With max-normalized class frequencies `q`, the per-class temperature is
//! `T_cq = T_opt + beta·q` and the per-class smoothing amount is
//! `s_cq = s_base + gamma·q`, so frequent classes get a softer softmax and
//! stronger smoothing.

use std::fmt::Write as _;

use crate::data::{ClassQuantity, FeatureSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::softmax::{log_sum_exp, Temperature};

pub const DEFAULT_BETA: f64 = 0.1;
pub const DEFAULT_GAMMA: f64 = 0.01;
pub const DEFAULT_ECE_BINS: usize = 15;

/// Search interval and tolerance for [`fit_optimal_temperature`].
pub const TEMPERATURE_RANGE: (f64, f64) = (0.05, 10.0);
pub const TEMPERATURE_TOL: f64 = 1e-4;

/// Mean negative log-likelihood of `softmax(logits / temperature)` at `labels`.
pub fn nll<T: Scalar>(
    logits: &Matrix<T>,
    labels: &[usize],
    temperature: &Temperature<T>,
) -> Result<T> {
    if logits.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} logit rows but {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Validation("NLL of an empty set".into()));
    }
    temperature.validate(logits.cols())?;
    let mut buf = Vec::with_capacity(logits.cols());
    let mut total = T::zero();
    for (row, &y) in logits.row_iter().zip(labels) {
        temperature.scale_into(row, &mut buf);
        total += log_sum_exp(&buf) - buf[y];
    }
    Ok(total / T::from_usize_lossy(labels.len()))
}

/// Scalar temperature minimizing validation NLL over [0.05, 10].
///
/// Golden-section search to an absolute tolerance of 1e-4. The result is
/// never worse than `T = 1` or either bracket end on the fitting set.
pub fn fit_optimal_temperature<T: Scalar>(val: &FeatureSet<T>) -> Result<T> {
    let logits = val.require_logits()?;
    let labels = val.require_labels()?;
    if labels.is_empty() {
        return Err(Error::Validation("validation set is empty".into()));
    }
    let f = |t: f64| -> Result<f64> {
        Ok(nll(logits, labels, &Temperature::Scalar(T::lit(t)))?.as_f64())
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = TEMPERATURE_RANGE;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > TEMPERATURE_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid, f(mid)?);
    for t in [1.0, TEMPERATURE_RANGE.0, TEMPERATURE_RANGE.1] {
        let v = f(t)?;
        if v < best.1 {
            best = (t, v);
        }
    }
    Ok(T::lit(best.0))
}

/// Per-class temperature `T_opt + beta·q`.
pub fn cq_temperature<T: Scalar>(t_opt: T, beta: T, q: &ClassQuantity) -> Result<Vec<T>> {
    if !(t_opt > T::zero()) {
        return Err(Error::Parameter(format!(
            "optimal temperature must be positive, got {t_opt}"
        )));
    }
    let out: Vec<T> = q.q().iter().map(|&qi| t_opt + beta * T::lit(qi)).collect();
    if let Some((i, t)) = out.iter().enumerate().find(|(_, t)| !(**t > T::zero())) {
        return Err(Error::Parameter(format!(
            "category-quantity temperature for class {i} is {t}, must be positive"
        )));
    }
    Ok(out)
}

/// Per-class smoothing amount `s_base + gamma·q`.
pub fn cq_label_smoothing<T: Scalar>(s_base: T, gamma: T, q: &ClassQuantity) -> Result<Vec<T>> {
    if !(s_base >= T::zero() && s_base < T::one()) {
        return Err(Error::Parameter(format!(
            "base smoothing must lie in [0, 1), got {s_base}"
        )));
    }
    let out: Vec<T> = q
        .q()
        .iter()
        .map(|&qi| s_base + gamma * T::lit(qi))
        .collect();
    if let Some((i, s)) = out
        .iter()
        .enumerate()
        .find(|(_, s)| !(**s >= T::zero() && **s < T::one()))
    {
        return Err(Error::Parameter(format!(
            "smoothing for class {i} is {s}, must lie in [0, 1)"
        )));
    }
    Ok(out)
}

/// `(1 − s)·onehot(label) + (s/N)·1` with `s = s_cq[label]`.
pub fn smooth_labels<T: Scalar>(label: usize, s_cq: &[T], classes: usize) -> Result<Vec<T>> {
    if label >= classes {
        return Err(Error::Validation(format!(
            "label {label} is outside [0, {classes})"
        )));
    }
    if s_cq.len() != classes {
        return Err(Error::Dimension(format!(
            "smoothing vector has {} entries, expected {classes}",
            s_cq.len()
        )));
    }
    let s = s_cq[label];
    if !(s >= T::zero() && s < T::one()) {
        return Err(Error::Parameter(format!(
            "smoothing {s} must lie in [0, 1)"
        )));
    }
    let off = s / T::from_usize_lossy(classes);
    let mut target = vec![off; classes];
    target[label] = T::one() - s + off;
    Ok(target)
}

/// Expected calibration error over `bins` equal-width confidence bins.
///
/// A row lands in bin `b` when its confidence lies in `(b/B, (b+1)/B]`;
/// confidence 0 goes to the first bin.
pub fn ece<T: Scalar>(probabilities: &Matrix<T>, labels: &[usize], bins: usize) -> Result<f64> {
    if probabilities.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probability rows but {} labels",
            probabilities.rows(),
            labels.len()
        )));
    }
    if bins < 1 {
        return Err(Error::Parameter("ECE needs at least one bin".into()));
    }
    if labels.is_empty() {
        return Err(Error::Validation("ECE of an empty set".into()));
    }
    let mut count = vec![0usize; bins];
    let mut correct = vec![0usize; bins];
    let mut conf_sum = vec![0f64; bins];
    for (i, (row, &y)) in probabilities.row_iter().zip(labels).enumerate() {
        let total: f64 = row.iter().map(|v| v.as_f64()).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "probability row {i} sums to {total}"
            )));
        }
        if y >= row.len() {
            return Err(Error::Validation(format!(
                "label {y} at row {i} is out of range"
            )));
        }
        let (pred, conf) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, &p)| {
                let p = p.as_f64();
                if p > best.1 {
                    (j, p)
                } else {
                    best
                }
            });
        let b = ((conf * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        count[b] += 1;
        conf_sum[b] += conf;
        if pred == y {
            correct[b] += 1;
        }
    }
    let n = labels.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let nb = count[b] as f64;
            (nb / n) * (correct[b] as f64 / nb - conf_sum[b] / nb).abs()
        })
        .sum())
}

/// Softmax probabilities of every row of `logits / temperature`.
pub fn probabilities<T: Scalar>(
    logits: &Matrix<T>,
    temperature: &Temperature<T>,
) -> Result<Matrix<T>> {
    temperature.validate(logits.cols())?;
    let mut out = logits.clone();
    let mut buf = Vec::with_capacity(logits.cols());
    for i in 0..logits.rows() {
        temperature.scale_into(logits.row(i), &mut buf);
        crate::softmax::softmax_in_place(&mut buf);
        out.row_mut(i).copy_from_slice(&buf);
    }
    Ok(out)
}

/// Fitted long-tailed calibration state.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationParams {
    pub t_opt: f64,
    pub beta: f64,
    pub gamma: f64,
    pub s_base: f64,
    pub quantity: ClassQuantity,
    pub t_cq: Vec<f64>,
    pub s_cq: Vec<f64>,
}

impl CalibrationParams {
    pub fn new(
        t_opt: f64,
        beta: f64,
        s_base: f64,
        gamma: f64,
        quantity: ClassQuantity,
    ) -> Result<Self> {
        let t_cq = cq_temperature(t_opt, beta, &quantity)?;
        let s_cq = cq_label_smoothing(s_base, gamma, &quantity)?;
        Ok(Self {
            t_opt,
            beta,
            gamma,
            s_base,
            quantity,
            t_cq,
            s_cq,
        })
    }

    /// Fits `T_opt` on `val` and class quantities on `train`'s labels.
    pub fn fit(
        train: &FeatureSet<f64>,
        val: &FeatureSet<f64>,
        beta: f64,
        s_base: f64,
        gamma: f64,
    ) -> Result<Self> {
        let quantity = ClassQuantity::from_counts(train.class_counts()?)?;
        let t_opt = fit_optimal_temperature(val)?;
        Self::new(t_opt, beta, s_base, gamma, quantity)
    }

    pub fn temperature<T: Scalar>(&self) -> Temperature<T> {
        Temperature::PerClass(self.t_cq.iter().map(|&t| T::lit(t)).collect())
    }

    /// Human-readable `key = value` block; floats use shortest round-trip form.
    pub fn to_text(&self) -> String {
        let join_f = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let counts = self
            .quantity
            .counts()
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let mut s = String::new();
        let _ = writeln!(s, "t_opt = {:?}", self.t_opt);
        let _ = writeln!(s, "beta = {:?}", self.beta);
        let _ = writeln!(s, "gamma = {:?}", self.gamma);
        let _ = writeln!(s, "s_base = {:?}", self.s_base);
        let _ = writeln!(s, "counts = {counts}");
        let _ = writeln!(s, "q = {}", join_f(self.quantity.q()));
        let _ = writeln!(s, "t_cq = {}", join_f(&self.t_cq));
        let _ = writeln!(s, "s_cq = {}", join_f(&self.s_cq));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("calibration line {} has no `=`", lineno + 1))
            })?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .ok_or_else(|| Error::Format(format!("calibration block is missing `{k}`")))
        };
        let float = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Format(format!("calibration field `{k}` is not a number")))
        };
        let counts: Vec<u64> = get("counts")?
            .split(',')
            .map(|c| c.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format("calibration field `counts` is malformed".into()))?;
        let params = Self::new(
            float("t_opt")?,
            float("beta")?,
            float("s_base")?,
            float("gamma")?,
            ClassQuantity::from_counts(counts)?,
        )?;
        // derived vectors are recomputed; a stored copy must agree
        for key in ["t_cq", "s_cq"] {
            if let Some(stored) = fields.get(key) {
                let expected = if key == "t_cq" {
                    &params.t_cq
                } else {
                    &params.s_cq
                };
                let parsed: Vec<f64> = stored
                    .split(',')
                    .map(|c| c.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| {
                        Error::Format(format!("calibration field `{key}` is malformed"))
                    })?;
                if &parsed != expected {
                    return Err(Error::Integrity(format!(
                        "calibration field `{key}` disagrees with t_opt/beta/gamma/counts"
                    )));
                }
            }
        }
        Ok(params)
    }
}
