//! Analytic distillation world.
//!
//! Teacher and student are isotropic Gaussians over video volumes, so both
//! critics have closed-form posterior means and the distillation direction is
//! exact. The student's mean is the only learned parameter.

mod experiment;
mod fig5;
mod tasks;
mod train;

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::dmd::{Denoiser, NoiseLevel, ScoreProviderPair};
use crate::error::{Error, Result};
use crate::rng;
use crate::volume::VideoVolume;

pub use experiment::{
    run_experiment, run_seed, ExperimentConfig, RewardSpec, SeedRun, StateSummary, Trajectory,
    TrajectoryRecord, SUMMARY_HEADER, TRAJECTORY_HEADER,
};
pub use fig5::{fig5_sweep, growing_lower_half_specs, Fig5Frame, Fig5Report};
pub use tasks::{TaskInstance, TaskKind, TWO_RATE_FACTOR};
pub use train::{
    train_step, Hyperparameters, StepOutcome, StepRandomness, TrainContext, WeightingMode,
};

/// Denoising timesteps used by the four-step student.
pub const DEFAULT_TIMESTEPS: [u32; 4] = [1000, 750, 500, 250];

/// Offset that keeps `σ < 1` at `t = 1000`.
pub const COSINE_OFFSET: f64 = 0.008;

/// Variance-preserving cosine map with phase `π/2 · (t/1000) / (1 + s)`.
pub fn cosine_noise_level(t: u32) -> NoiseLevel {
    let phase = FRAC_PI_2 * (f64::from(t) / 1000.0) / (1.0 + COSINE_OFFSET);
    NoiseLevel {
        t,
        alpha: phase.cos(),
        sigma: phase.sin(),
    }
}

/// `E[x0 | x_t]` for `x0 ~ N(μ, s²)` and `x_t = α·x0 + σ·ε`.
pub fn analytic_posterior_mean(
    x_t: &VideoVolume,
    alpha: f64,
    sigma: f64,
    mu: &VideoVolume,
    s: f64,
) -> Result<VideoVolume> {
    let denom = alpha * alpha * s * s + sigma * sigma;
    if !(denom > 0.0) {
        return Err(Error::NoiseLevel(format!(
            "posterior undefined for alpha={alpha}, sigma={sigma}, s={s}"
        )));
    }
    let (a, b) = (sigma * sigma, alpha * s * s);
    x_t.zip_with(mu, |x, m| (a * m + b * x) / denom)
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussianWorld {
    #[serde(skip)]
    pub mu_real: VideoVolume,
    pub s_real: f64,
    pub schedule: Vec<NoiseLevel>,
}

impl GaussianWorld {
    pub fn new(mu_real: VideoVolume, s_real: f64, schedule: Vec<NoiseLevel>) -> Result<Self> {
        if !(s_real > 0.0 && s_real.is_finite()) {
            return Err(Error::config("teacher_std", "must be > 0"));
        }
        if schedule.is_empty() {
            return Err(Error::config("timesteps", "schedule must be non-empty"));
        }
        for l in &schedule {
            if !(l.alpha > 0.0 && l.alpha <= 1.0 && (0.0..1.0).contains(&l.sigma)) {
                return Err(Error::config(
                    "timesteps",
                    format!("t={} gives alpha={}, sigma={}", l.t, l.alpha, l.sigma),
                ));
            }
        }
        Ok(Self {
            mu_real,
            s_real,
            schedule,
        })
    }

    pub fn with_timesteps(mu_real: VideoVolume, s_real: f64, timesteps: &[u32]) -> Result<Self> {
        Self::new(
            mu_real,
            s_real,
            timesteps.iter().map(|&t| cosine_noise_level(t)).collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct ToyStudent {
    pub theta: VideoVolume,
    pub s_fake: f64,
    pub lr: f64,
    pub ema_decay: Option<f64>,
    pub ema_theta: Option<VideoVolume>,
}

impl ToyStudent {
    pub fn new(theta: VideoVolume, s_fake: f64, lr: f64, ema_decay: Option<f64>) -> Result<Self> {
        if !(s_fake > 0.0 && s_fake.is_finite()) {
            return Err(Error::config("student_std", "must be > 0"));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config("lr", "must be > 0"));
        }
        if let Some(d) = ema_decay {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::config("ema_decay", "must lie in [0, 1)"));
            }
        }
        let ema_theta = ema_decay.map(|_| theta.clone());
        Ok(Self {
            theta,
            s_fake,
            lr,
            ema_decay,
            ema_theta,
        })
    }

    /// The parameters used for evaluation: the EMA copy when enabled.
    pub fn eval_theta(&self) -> &VideoVolume {
        self.ema_theta.as_ref().unwrap_or(&self.theta)
    }

    pub(crate) fn apply_gradient(&mut self, gradient: &VideoVolume) -> Result<()> {
        let lr = self.lr;
        self.theta = self.theta.zip_with(gradient, |t, g| t - lr * g)?;
        if let (Some(d), Some(ema)) = (self.ema_decay, self.ema_theta.as_mut()) {
            *ema = ema.zip_with(&self.theta, |e, t| d * e + (1.0 - d) * t)?;
        }
        Ok(())
    }
}

/// Closed-form critic for a Gaussian with the given mean and std.
#[derive(Debug, Clone, Copy)]
pub struct GaussianDenoiser<'a> {
    pub mean: &'a VideoVolume,
    pub std: f64,
}

impl Denoiser for GaussianDenoiser<'_> {
    fn denoise(&self, x_t: &VideoVolume, level: NoiseLevel) -> Result<VideoVolume> {
        analytic_posterior_mean(x_t, level.alpha, level.sigma, self.mean, self.std)
    }
}

pub fn make_score_pair<'a>(
    world: &'a GaussianWorld,
    student: &'a ToyStudent,
) -> Result<ScoreProviderPair<GaussianDenoiser<'a>, GaussianDenoiser<'a>>> {
    world.mu_real.ensure_same_shape(&student.theta)?;
    Ok(ScoreProviderPair::new(
        GaussianDenoiser {
            mean: &world.mu_real,
            std: world.s_real,
        },
        GaussianDenoiser {
            mean: &student.theta,
            std: student.s_fake,
        },
    ))
}

/// One student sample `θ + s_fake·ε(seed)`.
pub fn rollout(student: &ToyStudent, seed: u64) -> VideoVolume {
    let eps = rng::normal_volume(student.theta.shape(), &mut rng::seeded(seed));
    let s = student.s_fake;
    student
        .theta
        .zip_with(&eps, |t, e| t + s * e)
        .expect("noise has theta's shape")
}
