//! Gradient saliency per reward axis and the reward-adaptive mixture that
//! fuses the three maps into one.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::reward::{AxisMap, DifferentiableReward, RewardAxis, RewardSet};
use crate::volume::{global_mean, Shape, VideoVolume};

/// Absolute input gradient of the reward together with the reward score.
pub fn extract_saliency<R>(reward: &R, v: &VideoVolume) -> Result<(VideoVolume, f64)>
where
    R: DifferentiableReward + ?Sized,
{
    let (score, grad) = reward.score_and_gradient(v)?;
    Ok((grad.abs(), score))
}

#[derive(Debug, Clone)]
pub struct AxisSaliency {
    pub saliency: VideoVolume,
    pub reward: f64,
}

/// Saliency maps and scalar rewards for all three axes, sharing one shape.
#[derive(Debug, Clone)]
pub struct SaliencyBundle {
    axes: AxisMap<AxisSaliency>,
}

impl SaliencyBundle {
    pub fn new(axes: AxisMap<AxisSaliency>) -> Result<Self> {
        let shape = axes.vq.saliency.shape();
        for (_, a) in axes.iter() {
            a.saliency.ensure_shape(shape)?;
            if a.saliency.as_slice().iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::InvalidVolume(
                    "saliency entries must be non-negative".into(),
                ));
            }
        }
        Ok(Self { axes })
    }

    /// Scores every axis on `v` and extracts its saliency.
    pub fn compute(rewards: &RewardSet, v: &VideoVolume) -> Result<Self> {
        let axes = AxisMap::try_from_fn(|axis| {
            extract_saliency(&rewards[axis], v)
                .map(|(saliency, reward)| AxisSaliency { saliency, reward })
        })?;
        Self::new(axes)
    }

    pub fn shape(&self) -> Shape {
        self.axes.vq.saliency.shape()
    }

    pub fn axis(&self, axis: RewardAxis) -> &AxisSaliency {
        &self.axes[axis]
    }

    pub fn rewards(&self) -> AxisMap<f64> {
        self.axes.map(|a| a.reward)
    }

    pub fn map_means(&self) -> AxisMap<f64> {
        self.axes.map(|a| global_mean(&a.saliency))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixtureWeights {
    pub alpha: AxisMap<f64>,
    pub temperature: f64,
}

/// `α_d ∝ exp(−r_d / τ)`, so lower-scoring axes receive more weight.
pub fn axis_mixture_weights(rewards: AxisMap<f64>, temperature: f64) -> Result<MixtureWeights> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::config("tau", format!("temperature must be > 0, got {temperature}")));
    }
    if !rewards.is_finite() {
        return Err(Error::Reward("non-finite reward in mixture".into()));
    }
    let logits = rewards.map(|&r| -r / temperature);
    let top = logits.values().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let expd = logits.map(|&x| (x - top).exp());
    let z = expd.vq + expd.mq + expd.ta;
    Ok(MixtureWeights {
        alpha: expd.map(|&e| e / z),
        temperature,
    })
}

/// Convex combination of the three saliency maps with reward-adaptive weights.
pub fn combine_saliency(
    bundle: &SaliencyBundle,
    temperature: f64,
) -> Result<(VideoVolume, MixtureWeights)> {
    let weights = axis_mixture_weights(bundle.rewards(), temperature)?;
    let combined = mix(bundle, &weights.alpha)?;
    Ok((combined, weights))
}

/// Weighted sum of the bundle's maps with explicit weights.
pub fn mix(bundle: &SaliencyBundle, alpha: &AxisMap<f64>) -> Result<VideoVolume> {
    let (vq, mq, ta) = (
        &bundle.axes.vq.saliency,
        &bundle.axes.mq.saliency,
        &bundle.axes.ta.saliency,
    );
    let mut out = VideoVolume::zeros(bundle.shape())?;
    for (i, o) in out.as_mut_slice().iter_mut().enumerate() {
        *o = alpha.vq * vq.as_slice()[i] + alpha.mq * mq.as_slice()[i] + alpha.ta * ta.as_slice()[i];
    }
    Ok(out)
}

/// Saliency of the single overall reward `mean_d r_d`: `|mean_d ∂r_d/∂V|`.
pub fn overall_saliency(rewards: &RewardSet, v: &VideoVolume) -> Result<(VideoVolume, AxisMap<f64>)> {
    let parts = AxisMap::try_from_fn(|axis| rewards[axis].score_and_gradient(v))?;
    let scores = parts.map(|(s, _)| *s);
    let summed = parts.vq.1.add(&parts.mq.1)?.add(&parts.ta.1)?;
    Ok((summed.map(|g| (g / 3.0).abs()), scores))
}
