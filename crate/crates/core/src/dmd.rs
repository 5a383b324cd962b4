//! Distribution-matching distillation gradient and losses.
//!
//! Critics are denoisers returning a predicted clean sample; the distillation
//! direction is `g = f_fake(x_t) − f_real(x_t)`. Losses regress `x0` onto the
//! stop-gradient target `x0 − ĝ`, so their gradient is the (weighted) `ĝ`.
//! Squared norms are averaged per element to keep magnitudes shape-independent.

use serde::Serialize;

use crate::decomposition::IntraWeight;
use crate::error::{Error, Result};
use crate::rng;
use crate::volume::{global_mean, VideoVolume};

pub const DEFAULT_GRAD_EPS: f64 = 1e-8;

/// A diffusion timestep with its signal and noise scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseLevel {
    pub t: u32,
    pub alpha: f64,
    pub sigma: f64,
}

impl NoiseLevel {
    pub fn new(t: u32, alpha: f64, sigma: f64) -> Result<Self> {
        if !(alpha.is_finite() && sigma.is_finite() && alpha >= 0.0 && sigma >= 0.0) {
            return Err(Error::NoiseLevel(format!("alpha={alpha}, sigma={sigma}")));
        }
        if alpha == 0.0 && sigma == 0.0 {
            return Err(Error::NoiseLevel("alpha and sigma are both zero".into()));
        }
        Ok(Self { t, alpha, sigma })
    }
}

/// Predicts the clean sample from a noisy one.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, x_t: &VideoVolume, level: NoiseLevel) -> Result<VideoVolume>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn denoise(&self, x_t: &VideoVolume, level: NoiseLevel) -> Result<VideoVolume> {
        (**self).denoise(x_t, level)
    }
}

#[derive(Debug, Clone)]
pub struct ScoreProviderPair<R, F> {
    pub real: R,
    pub fake: F,
}

impl<R: Denoiser, F: Denoiser> ScoreProviderPair<R, F> {
    pub fn new(real: R, fake: F) -> Self {
        Self { real, fake }
    }

    /// The same pair with the roles exchanged.
    pub fn swapped(self) -> ScoreProviderPair<F, R> {
        ScoreProviderPair {
            real: self.fake,
            fake: self.real,
        }
    }
}

/// A student output together with its noised copy `x_t = α·x0 + σ·ε`.
#[derive(Debug, Clone)]
pub struct DmdSample {
    pub x0: VideoVolume,
    pub x_t: VideoVolume,
    pub level: NoiseLevel,
    pub noise_seed: u64,
}

impl DmdSample {
    pub fn noised(x0: VideoVolume, level: NoiseLevel, noise_seed: u64) -> Self {
        let eps = Self::noise(&x0, noise_seed);
        let x_t = x0
            .zip_with(&eps, |x, e| level.alpha * x + level.sigma * e)
            .expect("noise has the sample's shape");
        Self {
            x0,
            x_t,
            level,
            noise_seed,
        }
    }

    /// Regenerates `ε` from the recorded seed.
    pub fn noise(x0: &VideoVolume, noise_seed: u64) -> VideoVolume {
        rng::normal_volume(x0.shape(), &mut rng::seeded(noise_seed))
    }
}

pub fn dmd_gradient<R: Denoiser, F: Denoiser>(
    pair: &ScoreProviderPair<R, F>,
    sample: &DmdSample,
) -> Result<VideoVolume> {
    let real = pair.real.denoise(&sample.x_t, sample.level)?;
    let fake = pair.fake.denoise(&sample.x_t, sample.level)?;
    sample.x_t.ensure_same_shape(&real)?;
    sample.x_t.ensure_same_shape(&fake)?;
    fake.sub(&real)
}

/// `g / (mean|g| + ε)`; an all-zero `g` stays zero.
pub fn normalize_gradient(g: &VideoVolume, eps: f64) -> Result<VideoVolume> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::config("epsilon", "must be >= 0"));
    }
    let scale = g.mean_abs();
    if scale == 0.0 {
        return Ok(g.clone());
    }
    let denom = scale + eps;
    Ok(g.map(|x| x / denom))
}

/// `½·mean((x0 − sg(x0 − ĝ))²)` and its gradient with respect to `x0`.
pub fn base_dmd_loss(x0: &VideoVolume, g_hat: &VideoVolume) -> Result<(f64, VideoVolume)> {
    x0.ensure_same_shape(g_hat)?;
    let target = x0.sub(g_hat)?;
    let residual = x0.sub(&target)?;
    let n = x0.len() as f64;
    let loss = 0.5 * (residual.as_slice().iter().map(|r| r * r).sum::<f64>() / n);
    Ok((loss, residual.map(|r| r / n)))
}

#[derive(Debug, Clone)]
pub struct WeightedLossReport {
    pub loss: f64,
    /// Gradient of the loss with respect to `x0`.
    pub gradient: VideoVolume,
    pub w_inter: f64,
    pub w_intra: IntraWeight,
    /// Raw distillation direction, when the caller has it.
    pub g: Option<VideoVolume>,
    pub g_hat: VideoVolume,
}

impl WeightedLossReport {
    pub const CSV_HEADER: [&'static str; 6] =
        ["step", "loss", "w_inter", "mean_w_intra", "mean_abs_g", "mean_abs_ghat"];

    pub fn csv_row(&self, step: usize) -> [String; 6] {
        let mean_abs_g = self.g.as_ref().map_or(f64::NAN, VideoVolume::mean_abs);
        [
            step.to_string(),
            self.loss.to_string(),
            self.w_inter.to_string(),
            global_mean(&self.w_intra.composed).to_string(),
            mean_abs_g.to_string(),
            self.g_hat.mean_abs().to_string(),
        ]
    }
}

/// `½·W_inter·mean(W_intra ⊙ (x0 − sg(x0 − ĝ))²)` and its gradient.
pub fn weighted_dmd_loss(
    x0: &VideoVolume,
    g_hat: &VideoVolume,
    w_inter: f64,
    w_intra: &IntraWeight,
) -> Result<WeightedLossReport> {
    x0.ensure_same_shape(g_hat)?;
    w_intra.composed.ensure_shape(x0.shape())?;
    if !(w_inter > 0.0 && w_inter.is_finite()) {
        return Err(Error::InvalidWeights(format!("w_inter={w_inter} must be > 0")));
    }
    let m = global_mean(&w_intra.composed);
    if (m - 1.0).abs() > 1e-6 || w_intra.composed.as_slice().iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidWeights(format!(
            "W_intra must be positive with mean 1, mean is {m}"
        )));
    }
    let target = x0.sub(g_hat)?;
    let residual = x0.sub(&target)?;
    let weights = w_intra.composed.as_slice();
    let n = x0.len() as f64;
    let weighted_sq: f64 = residual
        .as_slice()
        .iter()
        .zip(weights)
        .map(|(r, w)| w * (r * r))
        .sum();
    let loss = 0.5 * w_inter * (weighted_sq / n);
    let mut gradient = residual;
    for (r, w) in gradient.as_mut_slice().iter_mut().zip(weights) {
        *r = w_inter * (w * *r) / n;
    }
    Ok(WeightedLossReport {
        loss,
        gradient,
        w_inter,
        w_intra: w_intra.clone(),
        g: None,
        g_hat: g_hat.clone(),
    })
}
