//! Synthetic long-tailed benchmark with near- and far-OOD splits.
//!
//! Geometry, with `σ = 1` and a random orthonormal basis split into
//! `p = ⌈d/2⌉` "signal" directions and `d − p` "quiet" directions:
//!
//! * ID class `c` is a Gaussian around `±2.5σ` along signal direction
//!   `c mod p`, with spread σ along signal directions and 0.3σ along quiet
//!   ones. Class `c` of the training split has `⌈n·tail^c⌉` rows; the
//!   validation and test splits get half of that, rounded up.
//! * Near-OOD rows are drawn like class `c`, shifted by 2σ along a quiet
//!   direction, so they look like ID rows to a classifier.
//! * Far-OOD rows sit 10σ from the mean of the class centers along a quiet
//!   direction, with isotropic σ noise.
//! * Logits come from the nearest-center linear readout
//!   `z_c = μ_cᵀf − ‖μ_c‖²/2` plus N(0, 0.1²) noise.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use crate::data::FeatureSet;
use crate::error::{Error, Result};
use crate::linalg::{dot, orthonormalize_columns, Matrix};
use crate::rng::{stream_rng, Stream};

use super::manifest::{
    Manifest, SplitEntry, FAR_OOD, MANIFEST_VERSION, NEAR_OOD, TEST_ID, TRAIN_ID, VAL_ID,
};
use super::FileFormat;

const SIGMA: f64 = 1.0;
const QUIET_SCALE: f64 = 0.3;
const CENTER_RADIUS: f64 = 2.5;
const NEAR_SHIFT: f64 = 2.0;
const FAR_SHIFT: f64 = 10.0;
const LOGIT_NOISE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_per_class: usize,
    pub class_count: usize,
    pub dim: usize,
    pub tail_ratio: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_per_class: 500,
            class_count: 4,
            dim: 16,
            tail_ratio: 0.4,
        }
    }
}

impl SynthConfig {
    fn signal_dims(&self) -> usize {
        self.dim.div_ceil(2)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.class_count < 2 {
            return bad(format!(
                "class_count must be at least 2, got {}",
                self.class_count
            ));
        }
        if self.dim < 2 {
            return bad(format!("dim must be at least 2, got {}", self.dim));
        }
        if !(self.tail_ratio > 0.0 && self.tail_ratio <= 1.0) {
            return bad(format!(
                "tail_ratio must lie in (0, 1], got {}",
                self.tail_ratio
            ));
        }
        if self.n_per_class < 1 {
            return bad("n_per_class must be at least 1".into());
        }
        if self.class_count > 2 * self.signal_dims() {
            return bad(format!(
                "dim {} supports at most {} classes",
                self.dim,
                2 * self.signal_dims()
            ));
        }
        Ok(())
    }

    /// Training rows of class `c`.
    pub fn train_size(&self, c: usize) -> usize {
        let exact = self.n_per_class as f64 * self.tail_ratio.powi(c as i32);
        // guard against 500·0.4² landing a hair above 80
        let rounded = exact.round();
        if (exact - rounded).abs() < 1e-9 * exact.max(1.0) {
            rounded as usize
        } else {
            exact.ceil() as usize
        }
    }

    pub fn holdout_size(&self, c: usize) -> usize {
        self.train_size(c).div_ceil(2)
    }

    pub fn ood_size(&self) -> usize {
        self.n_per_class.div_ceil(2)
    }
}

/// Generated splits plus the ground-truth geometry.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub config: SynthConfig,
    /// Class centers, one row per class.
    pub centers: Matrix<f64>,
    pub splits: Vec<(String, FeatureSet<f64>)>,
}

impl SynthData {
    pub fn split(&self, name: &str) -> Option<&FeatureSet<f64>> {
        self.splits.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }
}

struct Geometry {
    basis: Matrix<f64>,
    signal: usize,
    centers: Matrix<f64>,
    biases: Vec<f64>,
}

impl Geometry {
    fn new(cfg: &SynthConfig) -> Result<Self> {
        let d = cfg.dim;
        let mut rng = stream_rng(cfg.seed, Stream::SynthCenters);
        let raw = Matrix::new(
            d,
            d,
            (0..d * d).map(|_| rng.sample(StandardNormal)).collect(),
        )?;
        let basis = orthonormalize_columns(&raw)?;
        let signal = cfg.signal_dims();
        let mut centers = Matrix::zeros(cfg.class_count, d);
        for c in 0..cfg.class_count {
            let sign = if c < signal { 1.0 } else { -1.0 };
            let axis = basis.column(c % signal);
            for (dst, a) in centers.row_mut(c).iter_mut().zip(axis) {
                *dst = sign * CENTER_RADIUS * SIGMA * a;
            }
        }
        let biases = centers.row_iter().map(|m| -0.5 * dot(m, m)).collect();
        Ok(Self {
            basis,
            signal,
            centers,
            biases,
        })
    }

    fn quiet_axis(&self, i: usize) -> Vec<f64> {
        let quiet = self.basis.cols() - self.signal;
        self.basis.column(self.signal + i % quiet)
    }

    /// `origin + Σ_j scale_j·z_j·b_j` with standard normal `z`.
    fn draw(&self, origin: &[f64], isotropic: bool, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut f = origin.to_vec();
        for j in 0..self.basis.cols() {
            let scale = if isotropic || j < self.signal {
                SIGMA
            } else {
                QUIET_SCALE * SIGMA
            };
            let z: f64 = rng.sample(StandardNormal);
            for (i, v) in f.iter_mut().enumerate() {
                *v += scale * z * self.basis[(i, j)];
            }
        }
        f
    }

    fn logits(&self, f: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.centers
            .row_iter()
            .zip(&self.biases)
            .map(|(m, &b)| dot(m, f) + b + LOGIT_NOISE * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

fn build(
    geo: &Geometry,
    rows: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
    classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FeatureSet<f64>> {
    let logits: Vec<Vec<f64>> = rows.iter().map(|f| geo.logits(f, rng)).collect();
    FeatureSet::new(
        Matrix::from_rows(&rows)?,
        Some(Matrix::from_rows(&logits)?),
        labels,
        classes,
    )
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let geo = Geometry::new(cfg)?;
    let n_classes = cfg.class_count;
    let mut splits = Vec::new();

    for (name, stream) in [
        (TRAIN_ID, Stream::SynthTrain),
        (VAL_ID, Stream::SynthVal),
        (TEST_ID, Stream::SynthTest),
    ] {
        let mut rng = stream_rng(cfg.seed, stream);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..n_classes {
            let count = if name == TRAIN_ID {
                cfg.train_size(c)
            } else {
                cfg.holdout_size(c)
            };
            for _ in 0..count {
                rows.push(geo.draw(geo.centers.row(c), false, &mut rng));
                labels.push(c);
            }
        }
        splits.push((
            name.to_string(),
            build(&geo, rows, Some(labels), n_classes, &mut rng)?,
        ));
    }

    let mut rng = stream_rng(cfg.seed, Stream::SynthNearOod);
    let rows = (0..cfg.ood_size())
        .map(|i| {
            let c = i % n_classes;
            let shift = geo.quiet_axis(c);
            let origin: Vec<f64> = geo
                .centers
                .row(c)
                .iter()
                .zip(&shift)
                .map(|(m, u)| m + NEAR_SHIFT * SIGMA * u)
                .collect();
            geo.draw(&origin, false, &mut rng)
        })
        .collect();
    splits.push((
        NEAR_OOD.to_string(),
        build(&geo, rows, None, n_classes, &mut rng)?,
    ));

    let mut rng = stream_rng(cfg.seed, Stream::SynthFarOod);
    let mean = crate::linalg::column_mean(&geo.centers);
    let far_axis = geo.quiet_axis(usize::MAX);
    let far_origin: Vec<f64> = mean
        .iter()
        .zip(&far_axis)
        .map(|(m, v)| m + FAR_SHIFT * SIGMA * v)
        .collect();
    let rows = (0..cfg.ood_size())
        .map(|_| geo.draw(&far_origin, true, &mut rng))
        .collect();
    splits.push((
        FAR_OOD.to_string(),
        build(&geo, rows, None, n_classes, &mut rng)?,
    ));

    Ok(SynthData {
        config: *cfg,
        centers: geo.centers,
        splits,
    })
}

/// Writes every split plus `manifest.json` into `dir`; returns the manifest path.
pub fn write_synthetic(data: &SynthData, dir: &Path, format: FileFormat) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = format.extension();
    let mut entries = Vec::new();
    for (name, set) in &data.splits {
        let features = PathBuf::from(format!("{name}_features.{ext}"));
        super::save_matrix(set.features(), &dir.join(&features))?;
        let logits = set
            .logits()
            .map(|z| {
                let p = PathBuf::from(format!("{name}_logits.{ext}"));
                super::save_matrix(z, &dir.join(&p)).map(|_| p)
            })
            .transpose()?;
        let labels = set
            .labels()
            .map(|y| {
                let p = PathBuf::from(format!("{name}_labels.{ext}"));
                super::save_labels(y, &dir.join(&p)).map(|_| p)
            })
            .transpose()?;
        entries.push(SplitEntry {
            name: name.clone(),
            features,
            logits,
            labels,
            index: None,
        });
    }
    let cfg = &data.config;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        class_count: cfg.class_count,
        splits: entries,
        metadata: json!({
            "generator": "synthetic",
            "seed": cfg.seed,
            "n_per_class": cfg.n_per_class,
            "class_count": cfg.class_count,
            "dim": cfg.dim,
            "tail_ratio": cfg.tail_ratio,
        })
        .as_object()
        .cloned()
        .unwrap_or_default(),
    };
    let path = dir.join("manifest.json");
    super::atomic_write(&path, manifest.to_json().as_bytes())?;
    Ok(path)
}
