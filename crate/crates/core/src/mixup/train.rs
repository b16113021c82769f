//! Reference trainer for the desk-scale MLP: vanilla mixup or decoupled
//! (uncertainty-aware) mixup, optional category-quantity label smoothing and
//! an optional self-distillation term against an EMA teacher.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::calibration::{
    cq_label_smoothing, cq_temperature, ece, probabilities, smooth_labels, DEFAULT_ECE_BINS,
};
use crate::data::{ClassQuantity, FeatureSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::id_accuracy;
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;
use crate::softmax::{log_sum_exp, softmax_in_place, Temperature};

use super::mlp::{ForwardCache, Gradients, MlpModel};
use super::{mix, sample_alpha_pair, AlphaPair, DecoupleCoefficients};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Beta(α, α) parameter of the vanilla-mixup arm.
    pub alpha: f64,
    /// Minimum `α₁ − α₂` for the decoupled arm.
    pub margin: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub use_uamt: bool,
    pub use_cq_ls: bool,
    pub use_kd: bool,
    pub hidden_widths: Vec<usize>,
    /// Base smoothing `s°` for the category-quantity smoothing.
    pub s_base: f64,
    pub gamma: f64,
    /// Distillation temperatures are `kd_temperature + beta·q`.
    pub beta: f64,
    pub kd_temperature: f64,
    pub kd_weight: f64,
    pub kd_ema: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            margin: 0.5,
            epochs: 50,
            batch_size: 64,
            learning_rate: 0.05,
            weight_decay: 1e-5,
            seed: 7,
            use_uamt: true,
            use_cq_ls: false,
            use_kd: false,
            hidden_widths: vec![32, 32],
            s_base: 0.0,
            gamma: crate::calibration::DEFAULT_GAMMA,
            beta: crate::calibration::DEFAULT_BETA,
            kd_temperature: 1.0,
            kd_weight: 0.5,
            kd_ema: 0.99,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!(
                "batch size must be at least 2, got {}",
                self.batch_size
            ));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if !(0.0..=1.0).contains(&self.margin) {
            return bad(format!("margin must lie in [0, 1], got {}", self.margin));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if self.hidden_widths.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.kd_ema) {
            return bad(format!("kd_ema must lie in [0, 1), got {}", self.kd_ema));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub ece: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    /// `epoch,loss,accuracy,ece` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,accuracy,ece\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{:?},{:?},{:?}", e.epoch, e.loss, e.accuracy, e.ece);
        }
        s
    }
}

fn cross_entropy<T: Scalar>(logits: &[T], target: &[T]) -> T {
    let lse = log_sum_exp(logits);
    logits
        .iter()
        .zip(target)
        .map(|(&z, &t)| t * (lse - z))
        .sum()
}

fn softmax_minus<T: Scalar>(logits: &[T], target: &[T], scale: T) -> Vec<T> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p.iter()
        .zip(target)
        .map(|(&a, &b)| (a - b) * scale)
        .collect()
}

/// Mean cross-entropy of the decoupled logits against `(y, y′)`.
pub fn uamt_loss<T: Scalar>(
    model: &MlpModel<T>,
    x: &[T],
    x_prime: &[T],
    y: &[T],
    y_prime: &[T],
    pair: &AlphaPair<T>,
) -> Result<T> {
    let h1 = model.logits(&mix(x, x_prime, pair.alpha1())?)?;
    let h2 = model.logits(&mix(x, x_prime, pair.alpha2())?)?;
    let (zx, zxp) = super::decouple(&h1, &h2, pair)?;
    if y.len() != zx.len() || y_prime.len() != zx.len() {
        return Err(Error::Dimension(
            "targets do not match the logit width".into(),
        ));
    }
    Ok((cross_entropy(&zx, y) + cross_entropy(&zxp, y_prime)) * T::lit(0.5))
}

/// Logits of `model` for every row of `data`.
pub fn evaluate_mlp<T: Scalar>(model: &MlpModel<T>, data: &FeatureSet<T>) -> Result<Matrix<T>> {
    model.logits_batch(data.features())
}

/// Trains the reference MLP with coefficient pairs from [`sample_alpha_pair`].
pub fn train_reference_mlp<T: Scalar>(
    data: &FeatureSet<T>,
    config: &TrainConfig,
) -> Result<(MlpModel<T>, TrainingLog)> {
    let margin = config.margin;
    train_with_pair_sampler(data, config, |rng| {
        let p = sample_alpha_pair(margin, rng)?;
        AlphaPair::new(T::lit(p.alpha1()), T::lit(p.alpha2()), T::lit(p.margin()))
    })
}

/// Same as [`train_reference_mlp`] with a caller-provided coefficient sampler.
pub fn train_with_pair_sampler<T, F>(
    data: &FeatureSet<T>,
    config: &TrainConfig,
    mut sample_pair: F,
) -> Result<(MlpModel<T>, TrainingLog)>
where
    T: Scalar,
    F: FnMut(&mut rand_chacha::ChaCha8Rng) -> Result<AlphaPair<T>>,
{
    config.validate()?;
    let labels = data.require_labels()?;
    let classes = data.class_count();
    if classes < 2 {
        return Err(Error::Parameter(
            "training needs at least two classes".into(),
        ));
    }
    if data.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    let quantity = ClassQuantity::from_labels(labels, classes)?;

    let targets: Vec<Vec<T>> = if config.use_cq_ls {
        let s_cq = cq_label_smoothing(T::lit(config.s_base), T::lit(config.gamma), &quantity)?;
        labels
            .iter()
            .map(|&y| smooth_labels(y, &s_cq, classes))
            .collect::<Result<_>>()?
    } else {
        labels
            .iter()
            .map(|&y| {
                let mut t = vec![T::zero(); classes];
                t[y] = T::one();
                t
            })
            .collect()
    };
    let kd_temperature = if config.use_kd {
        Some(Temperature::PerClass(cq_temperature(
            T::lit(config.kd_temperature),
            T::lit(config.beta),
            &quantity,
        )?))
    } else {
        None
    };

    let mut init_rng = stream_rng(config.seed, Stream::MlpInit);
    let mut shuffle_rng = stream_rng(config.seed, Stream::MlpShuffle);
    let mut mix_rng = stream_rng(config.seed, Stream::MixupCoefficients);
    let mut model = MlpModel::init(data.dim(), &config.hidden_widths, classes, &mut init_rng)?;
    let mut teacher = model.clone();
    let beta_dist = if config.alpha > 0.0 {
        Some(Beta::new(config.alpha, config.alpha).map_err(|e| Error::Parameter(e.to_string()))?)
    } else {
        None
    };

    let lr = T::lit(config.learning_rate);
    let wd = T::lit(config.weight_decay);
    let half = T::lit(0.5);
    let features = data.features();
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads = Gradients::zeros_like(&model);
    let (mut c1, mut c2, mut ct) = (
        ForwardCache::default(),
        ForwardCache::default(),
        ForwardCache::default(),
    );
    let mut log = TrainingLog::default();
    let mut batch_index = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = T::zero();
        for batch in order.chunks(config.batch_size) {
            let mut partners = batch.to_vec();
            partners.shuffle(&mut shuffle_rng);
            grads.clear();
            let mut batch_loss = T::zero();

            if config.use_uamt {
                let pair = sample_pair(&mut mix_rng).map_err(|e| {
                    Error::Numeric(format!("epoch {epoch}, batch {batch_index}: {e}"))
                })?;
                let coef = DecoupleCoefficients::new(&pair).map_err(|e| {
                    Error::Numeric(format!("epoch {epoch}, batch {batch_index}: {e}"))
                })?;
                for (&i, &j) in batch.iter().zip(&partners) {
                    let (x, xp) = (features.row(i), features.row(j));
                    model.forward_cached(&mix(x, xp, pair.alpha1())?, &mut c1);
                    model.forward_cached(&mix(x, xp, pair.alpha2())?, &mut c2);
                    let (h1, h2) = (c1.logits(), c2.logits());
                    let zx: Vec<T> = h1
                        .iter()
                        .zip(h2)
                        .map(|(&a, &b)| coef.x1 * a + coef.x2 * b)
                        .collect();
                    let zxp: Vec<T> = h1
                        .iter()
                        .zip(h2)
                        .map(|(&a, &b)| coef.xp1 * a + coef.xp2 * b)
                        .collect();
                    batch_loss +=
                        (cross_entropy(&zx, &targets[i]) + cross_entropy(&zxp, &targets[j])) * half;
                    let gx = softmax_minus(&zx, &targets[i], half);
                    let gxp = softmax_minus(&zxp, &targets[j], half);
                    let g1: Vec<T> = gx
                        .iter()
                        .zip(&gxp)
                        .map(|(&a, &b)| coef.x1 * a + coef.xp1 * b)
                        .collect();
                    let g2: Vec<T> = gx
                        .iter()
                        .zip(&gxp)
                        .map(|(&a, &b)| coef.x2 * a + coef.xp2 * b)
                        .collect();
                    model.backward(&c1, &g1, &mut grads);
                    model.backward(&c2, &g2, &mut grads);
                }
            } else {
                let lambda = beta_dist
                    .as_ref()
                    .map_or(T::one(), |d| T::lit(d.sample(&mut mix_rng)));
                for (&i, &j) in batch.iter().zip(&partners) {
                    let xm = mix(features.row(i), features.row(j), lambda)?;
                    let target: Vec<T> = targets[i]
                        .iter()
                        .zip(&targets[j])
                        .map(|(&a, &b)| lambda * a + (T::one() - lambda) * b)
                        .collect();
                    model.forward_cached(&xm, &mut c1);
                    batch_loss += cross_entropy(c1.logits(), &target);
                    let g = softmax_minus(c1.logits(), &target, T::one());
                    model.backward(&c1, &g, &mut grads);
                }
            }

            if let Some(temp) = &kd_temperature {
                let kd_w = T::lit(config.kd_weight);
                for &i in batch {
                    let x = features.row(i);
                    teacher.forward_cached(x, &mut ct);
                    model.forward_cached(x, &mut c1);
                    let mut pt = temp.scale(ct.logits());
                    softmax_in_place(&mut pt);
                    let zs = temp.scale(c1.logits());
                    let mut ps = zs.clone();
                    softmax_in_place(&mut ps);
                    let lse = log_sum_exp(&zs);
                    let kl: T = pt
                        .iter()
                        .zip(&zs)
                        .filter(|(&p, _)| p > T::zero())
                        .map(|(&p, &z)| p * (p.ln() - (z - lse)))
                        .sum();
                    batch_loss += kd_w * kl;
                    let Temperature::PerClass(ts) = temp else {
                        unreachable!()
                    };
                    let g: Vec<T> = ps
                        .iter()
                        .zip(&pt)
                        .zip(ts)
                        .map(|((&s, &t), &tau)| kd_w * (s - t) / tau)
                        .collect();
                    model.backward(&c1, &g, &mut grads);
                }
            }

            let scale = T::one() / T::from_usize_lossy(batch.len());
            model.sgd_step(&grads, scale, lr, wd);
            if config.use_kd {
                teacher.ema_from(&model, T::lit(config.kd_ema));
            }
            loss_sum += batch_loss;
            batch_index += 1;
        }

        let logits = model.logits_batch(features)?;
        let probs = probabilities(&logits, &Temperature::one())?;
        log.epochs.push(EpochLog {
            epoch,
            loss: (loss_sum / T::from_usize_lossy(n)).as_f64(),
            accuracy: id_accuracy(&logits, labels)?,
            ece: ece(&probs, labels, DEFAULT_ECE_BINS)?,
        });
    }
    Ok((model, log))
}
