use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::{laplacian_energy, AxisMap, MotionReward};
use crate::rng;
use crate::sim::RewardSpec;
use crate::volume::{Shape, VideoVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Random teacher mean, student starts at zero.
    Gaussian,
    /// Teacher with a textured, a moving and a template region; the student
    /// starts from a per-frame, per-region attenuated copy.
    Heterogeneous,
    /// Three template rewards, one of them five times narrower so its score
    /// moves five times faster.
    TwoRate,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Gaussian => "gaussian",
            TaskKind::Heterogeneous => "heterogeneous",
            TaskKind::TwoRate => "two-rate",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [TaskKind::Gaussian, TaskKind::Heterogeneous, TaskKind::TwoRate]
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::config("task", format!("unknown task `{s}`")))
    }
}

/// A seeded instance of a task: teacher mean, student start and reward defaults.
#[derive(Debug, Clone)]
pub struct TaskInstance {
    pub mu_real: VideoVolume,
    pub init_theta: VideoVolume,
    pub rewards: AxisMap<RewardSpec>,
}

/// Ratio between the fast and slow template widths of the two-rate task.
pub const TWO_RATE_FACTOR: f64 = 5.0;

impl TaskKind {
    pub fn instantiate(self, shape: Shape, seed: u64) -> Result<TaskInstance> {
        match self {
            TaskKind::Gaussian => gaussian(shape, seed),
            TaskKind::Heterogeneous => heterogeneous(shape, seed),
            TaskKind::TwoRate => two_rate(shape, seed),
        }
    }
}

fn check_shape(shape: Shape, min_frames: usize, min_side: usize) -> Result<()> {
    if shape.frames < min_frames || shape.height < min_side || shape.width < min_side {
        return Err(Error::config(
            "shape",
            format!(
                "task needs at least {min_frames} frames and {min_side}x{min_side} pixels, got {:?}",
                shape.as_tuple()
            ),
        ));
    }
    Ok(())
}

fn mean_sq_dist(a: &VideoVolume, b: &VideoVolume) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64
}

fn gaussian(shape: Shape, seed: u64) -> Result<TaskInstance> {
    check_shape(shape, 2, 3)?;
    let mu_real = rng::uniform_volume(shape, &mut rng::substream(seed, 0), 0.0, 1.0);
    let init_theta = VideoVolume::zeros(shape)?;
    let motion = MotionReward::motion_energy(&mu_real)?;
    let rewards = AxisMap::new(
        RewardSpec::Sharpness {
            scale: laplacian_energy(&mu_real)?,
        },
        RewardSpec::Motion {
            target: motion,
            width: motion,
        },
        RewardSpec::Template {
            width: mean_sq_dist(&init_theta, &mu_real),
            reference: None,
        },
    );
    Ok(TaskInstance {
        mu_real,
        init_theta,
        rewards,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Region {
    Texture,
    Motion,
    Template,
}

fn region_of(shape: Shape, h: usize, w: usize) -> Region {
    let (top, left) = (h < shape.height / 2, w < shape.width / 2);
    match (top, left) {
        (true, true) => Region::Texture,
        (false, false) => Region::Motion,
        _ => Region::Template,
    }
}

fn heterogeneous(shape: Shape, seed: u64) -> Result<TaskInstance> {
    check_shape(shape, 2, 6)?;
    let mut r = rng::substream(seed, 0);
    let left = shape.width / 2;
    let lane = shape.width - left;
    let offset = r.random_range(0.0..lane as f64);
    let phase = r.random_range(0.0..std::f64::consts::TAU);
    let mu_real = VideoVolume::from_fn(shape, |f, h, w| match region_of(shape, h, w) {
        Region::Texture => {
            if (h + w) % 2 == 0 {
                0.5
            } else {
                -0.5
            }
        }
        Region::Motion => {
            // Smooth bump travelling one pixel per frame, wrapping around the lane.
            let centre = (offset + f as f64) % lane as f64;
            let d = (w - left) as f64 - centre;
            let d = d - lane as f64 * (d / lane as f64).round();
            (-0.5 * d * d).exp()
        }
        Region::Template => {
            let u = std::f64::consts::PI * (h + w) as f64 / (shape.height + shape.width) as f64;
            0.4 * (2.0 * u + phase).cos()
        }
    })?;

    // The texture is attenuated uniformly over time and the template region by
    // a per-frame amount. The moving bump starts exact.
    let texture_severity = r.random_range(0.3..0.7);
    let frame_severity: Vec<f64> = (0..shape.frames).map(|_| r.random_range(0.05..0.95)).collect();
    let init_theta = VideoVolume::from_fn(shape, |f, h, w| {
        let c = match region_of(shape, h, w) {
            Region::Texture => texture_severity,
            Region::Motion => 0.0,
            Region::Template => frame_severity[f],
        };
        (1.0 - c) * mu_real.get(f, h, w)
    })?;

    let motion = MotionReward::motion_energy(&mu_real)?;
    let rewards = AxisMap::new(
        RewardSpec::Sharpness {
            scale: laplacian_energy(&mu_real)?,
        },
        RewardSpec::Motion {
            target: motion,
            width: motion,
        },
        RewardSpec::Template {
            width: mean_sq_dist(&init_theta, &mu_real),
            reference: None,
        },
    );
    Ok(TaskInstance {
        mu_real,
        init_theta,
        rewards,
    })
}

fn two_rate(shape: Shape, seed: u64) -> Result<TaskInstance> {
    check_shape(shape, 1, 1)?;
    let mut r = rng::substream(seed, 0);
    let mu_real = rng::uniform_volume(shape, &mut r, 0.0, 1.0);
    let offset = rng::uniform_volume(shape, &mut r, -0.5, 0.5);
    let init_theta = mu_real.add(&offset)?;
    // Slow axes stay in the near-linear regime of exp(-D/width).
    let slow = 50.0 * mean_sq_dist(&init_theta, &mu_real);
    let spec = |width| RewardSpec::Template {
        width,
        reference: None,
    };
    Ok(TaskInstance {
        mu_real,
        init_theta,
        rewards: AxisMap::new(spec(slow), spec(slow), spec(slow / TWO_RATE_FACTOR)),
    })
}
