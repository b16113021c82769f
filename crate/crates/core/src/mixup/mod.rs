//! Uncertainty-aware mixup.
//!
//! Two mixes of the same pair `(x, x′)` with coefficients `α₁ ∈ [0.5, 1]` and
//! `α₂ ∈ [0, 0.5]` give outputs `h₁, h₂`. Solving the 2×2 system
//! `[[α₁, 1−α₁], [α₂, 1−α₂]]·[h(x); h(x′)] = [h₁; h₂]` recovers per-sample
//! outputs, exactly so for maps that are affine along the segment. Training
//! then fits the recovered outputs to the original (unmixed) targets.

mod mlp;
mod train;

pub use mlp::{Dense, MlpModel};
pub use train::{
    evaluate_mlp, train_reference_mlp, train_with_pair_sampler, uamt_loss, EpochLog, TrainConfig,
    TrainingLog,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest `|α₁ − α₂|` accepted by [`decouple`].
pub const SINGULAR_TOL: f64 = 1e-9;

/// `alpha·x + (1 − alpha)·x′`.
pub fn mix<T: Scalar>(x: &[T], x_prime: &[T], alpha: T) -> Result<Vec<T>> {
    if x.len() != x_prime.len() {
        return Err(Error::Dimension(format!(
            "cannot mix vectors of length {} and {}",
            x.len(),
            x_prime.len()
        )));
    }
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::Parameter(format!(
            "mixing coefficient must lie in [0, 1], got {alpha}"
        )));
    }
    let beta = T::one() - alpha;
    Ok(x.iter()
        .zip(x_prime)
        .map(|(&a, &b)| alpha * a + beta * b)
        .collect())
}

/// Mixing coefficients for the two views of a pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaPair<T> {
    alpha1: T,
    alpha2: T,
    margin: T,
}

impl<T: Scalar> AlphaPair<T> {
    pub fn new(alpha1: T, alpha2: T, margin: T) -> Result<Self> {
        let half = T::lit(0.5);
        if !(alpha1 >= half && alpha1 <= T::one()) {
            return Err(Error::Parameter(format!(
                "alpha1 must lie in [0.5, 1], got {alpha1}"
            )));
        }
        if !(alpha2 >= T::zero() && alpha2 <= half) {
            return Err(Error::Parameter(format!(
                "alpha2 must lie in [0, 0.5], got {alpha2}"
            )));
        }
        if !(margin >= T::zero() && margin <= T::one()) {
            return Err(Error::Parameter(format!(
                "margin must lie in [0, 1], got {margin}"
            )));
        }
        if alpha1 - alpha2 < margin {
            return Err(Error::Parameter(format!(
                "alpha1 − alpha2 = {} is below the margin {margin}",
                alpha1 - alpha2
            )));
        }
        Ok(Self {
            alpha1,
            alpha2,
            margin,
        })
    }

    pub fn alpha1(&self) -> T {
        self.alpha1
    }

    pub fn alpha2(&self) -> T {
        self.alpha2
    }

    pub fn margin(&self) -> T {
        self.margin
    }
}

/// Draws `α₁ ~ U[0.5, 1]`, `α₂ ~ U[0, 0.5]` conditioned on `α₁ − α₂ ≥ margin`.
///
/// Rejection sampling; when the feasible corner is too small for rejection to
/// be practical (margin above ~0.993) the corner triangle is sampled directly,
/// which is the same uniform distribution.
pub fn sample_alpha_pair<R: Rng + ?Sized>(margin: f64, rng: &mut R) -> Result<AlphaPair<f64>> {
    if !(0.0..=1.0).contains(&margin) {
        return Err(Error::Parameter(format!(
            "margin must lie in [0, 1], got {margin}"
        )));
    }
    // acceptance probability of the rejection loop for margin > 0.5
    if margin > 0.5 && 2.0 * (1.0 - margin).powi(2) < 1e-4 {
        let side = 1.0 - margin;
        loop {
            let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let alpha1 = 1.0 - side * u;
            let alpha2 = side * v;
            // rounding can push a draw a few ulps past the edge
            if alpha1 - alpha2 >= margin {
                return AlphaPair::new(alpha1, alpha2, margin);
            }
        }
    }
    loop {
        let alpha1 = rng.random_range(0.5..=1.0);
        let alpha2 = rng.random_range(0.0..=0.5);
        if alpha1 - alpha2 >= margin {
            return AlphaPair::new(alpha1, alpha2, margin);
        }
    }
}

/// Recovers `(h(x), h(x′))` from the outputs on the two mixes.
pub fn decouple<T: Scalar>(h1: &[T], h2: &[T], pair: &AlphaPair<T>) -> Result<(Vec<T>, Vec<T>)> {
    if h1.len() != h2.len() {
        return Err(Error::Dimension(format!(
            "mixed outputs have lengths {} and {}",
            h1.len(),
            h2.len()
        )));
    }
    let c = DecoupleCoefficients::new(pair)?;
    let hx = h1
        .iter()
        .zip(h2)
        .map(|(&a, &b)| c.x1 * a + c.x2 * b)
        .collect();
    let hxp = h1
        .iter()
        .zip(h2)
        .map(|(&a, &b)| c.xp1 * a + c.xp2 * b)
        .collect();
    Ok((hx, hxp))
}

/// Rows of the inverse mixing matrix: `h(x) = x1·h₁ + x2·h₂`,
/// `h(x′) = xp1·h₁ + xp2·h₂`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DecoupleCoefficients<T> {
    pub x1: T,
    pub x2: T,
    pub xp1: T,
    pub xp2: T,
}

impl<T: Scalar> DecoupleCoefficients<T> {
    pub fn new(pair: &AlphaPair<T>) -> Result<Self> {
        let (a1, a2) = (pair.alpha1, pair.alpha2);
        let det = a1 - a2;
        if det.abs() < T::lit(SINGULAR_TOL) {
            return Err(Error::Numeric(format!(
                "decoupling system is singular (alpha1 = {a1}, alpha2 = {a2}); use a positive margin"
            )));
        }
        Ok(Self {
            x1: (T::one() - a2) / det,
            x2: -(T::one() - a1) / det,
            xp1: -a2 / det,
            xp2: a1 / det,
        })
    }
}
