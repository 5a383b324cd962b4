//! Differentiable reward functions over video volumes.
//!
//! The built-in rewards are analytic proxies for the three quality axes:
//! [`SharpnessReward`] (visual quality), [`MotionReward`] (motion quality) and
//! [`TemplateReward`] (alignment with a reference). Each provides a closed-form
//! gradient; [`finite_diff_gradient`] is the independent check.

mod builtin;
mod degrade;

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::volume::VideoVolume;

pub use builtin::{laplacian_energy, MotionReward, SharpnessReward, TemplateReward};
pub use degrade::{apply_region_blur, DegradationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardAxis {
    Vq,
    Mq,
    Ta,
}

impl RewardAxis {
    pub const ALL: [RewardAxis; 3] = [RewardAxis::Vq, RewardAxis::Mq, RewardAxis::Ta];

    pub fn as_str(self) -> &'static str {
        match self {
            RewardAxis::Vq => "vq",
            RewardAxis::Mq => "mq",
            RewardAxis::Ta => "ta",
        }
    }
}

impl fmt::Display for RewardAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A value for each of the three reward axes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisMap<T> {
    pub vq: T,
    pub mq: T,
    pub ta: T,
}

impl<T> AxisMap<T> {
    pub fn new(vq: T, mq: T, ta: T) -> Self {
        Self { vq, mq, ta }
    }

    pub fn from_fn(mut f: impl FnMut(RewardAxis) -> T) -> Self {
        Self {
            vq: f(RewardAxis::Vq),
            mq: f(RewardAxis::Mq),
            ta: f(RewardAxis::Ta),
        }
    }

    pub fn try_from_fn<E>(mut f: impl FnMut(RewardAxis) -> Result<T, E>) -> Result<Self, E> {
        Ok(Self {
            vq: f(RewardAxis::Vq)?,
            mq: f(RewardAxis::Mq)?,
            ta: f(RewardAxis::Ta)?,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> AxisMap<U> {
        AxisMap {
            vq: f(&self.vq),
            mq: f(&self.mq),
            ta: f(&self.ta),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (RewardAxis, &T)> {
        RewardAxis::ALL.into_iter().map(move |a| (a, &self[a]))
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        [&self.vq, &self.mq, &self.ta].into_iter()
    }
}

impl AxisMap<f64> {
    pub fn mean(&self) -> f64 {
        (self.vq + self.mq + self.ta) / 3.0
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|x| x.is_finite())
    }
}

impl<T> Index<RewardAxis> for AxisMap<T> {
    type Output = T;

    fn index(&self, axis: RewardAxis) -> &T {
        match axis {
            RewardAxis::Vq => &self.vq,
            RewardAxis::Mq => &self.mq,
            RewardAxis::Ta => &self.ta,
        }
    }
}

impl<T> IndexMut<RewardAxis> for AxisMap<T> {
    fn index_mut(&mut self, axis: RewardAxis) -> &mut T {
        match axis {
            RewardAxis::Vq => &mut self.vq,
            RewardAxis::Mq => &mut self.mq,
            RewardAxis::Ta => &mut self.ta,
        }
    }
}

/// A scalar reward with an exact input gradient.
///
/// Implementations must be deterministic and safe to call concurrently.
pub trait DifferentiableReward: Send + Sync {
    fn score(&self, v: &VideoVolume) -> Result<f64>;

    fn gradient(&self, v: &VideoVolume) -> Result<VideoVolume>;

    fn score_and_gradient(&self, v: &VideoVolume) -> Result<(f64, VideoVolume)> {
        Ok((self.score(v)?, self.gradient(v)?))
    }
}

impl<R: DifferentiableReward + ?Sized> DifferentiableReward for Box<R> {
    fn score(&self, v: &VideoVolume) -> Result<f64> {
        (**self).score(v)
    }

    fn gradient(&self, v: &VideoVolume) -> Result<VideoVolume> {
        (**self).gradient(v)
    }

    fn score_and_gradient(&self, v: &VideoVolume) -> Result<(f64, VideoVolume)> {
        (**self).score_and_gradient(v)
    }
}

pub type BoxedReward = Box<dyn DifferentiableReward>;

/// One reward model per quality axis.
pub type RewardSet = AxisMap<BoxedReward>;

impl RewardSet {
    pub fn scores(&self, v: &VideoVolume) -> Result<AxisMap<f64>> {
        AxisMap::try_from_fn(|axis| self[axis].score(v))
    }
}

/// Central-difference gradient of `reward.score` at `v`.
pub fn finite_diff_gradient<R>(reward: &R, v: &VideoVolume, step: f64) -> Result<VideoVolume>
where
    R: DifferentiableReward + ?Sized,
{
    if !(step > 0.0) {
        return Err(crate::Error::config("step", "finite-difference step must be > 0"));
    }
    let mut probe = v.clone();
    let mut grad = VideoVolume::zeros(v.shape())?;
    for i in 0..v.len() {
        let x = v.as_slice()[i];
        probe.as_mut_slice()[i] = x + step;
        let plus = reward.score(&probe)?;
        probe.as_mut_slice()[i] = x - step;
        let minus = reward.score(&probe)?;
        probe.as_mut_slice()[i] = x;
        grad.as_mut_slice()[i] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞)`, zero when both are zero.
pub fn max_norm_relative_error(a: &VideoVolume, b: &VideoVolume) -> Result<f64> {
    let diff = a.sub(b)?.max_abs();
    let scale = a.max_abs().max(b.max_abs());
    Ok(if scale == 0.0 { 0.0 } else { diff / scale })
}
