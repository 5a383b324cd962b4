use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::balance::{
    balanced_reward_detail, inter_reliability_weight, BalanceConfig, BalancedReward,
    RewardHistory, DEFAULT_BETA, DEFAULT_LAMBDA, DEFAULT_WINDOW,
};
use crate::decomposition::{
    intra_weight_pipeline, spatial_only_pipeline, IntraWeight, DEFAULT_SPATIAL_FLOOR,
    DEFAULT_TEMPORAL_FLOOR,
};
use crate::dmd::{dmd_gradient, normalize_gradient, weighted_dmd_loss, DmdSample, WeightedLossReport,
    DEFAULT_GRAD_EPS};
use crate::error::{Error, Result};
use crate::reward::{AxisMap, RewardSet};
use crate::rng;
use crate::saliency::{combine_saliency, overall_saliency, MixtureWeights, SaliencyBundle};
use crate::sim::{make_score_pair, rollout, GaussianWorld, ToyStudent};

/// Ablation ladder: each mode adds one component to the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingMode {
    /// Plain distillation: `W_inter = 1`, `W_intra = 1`.
    UniformDmd,
    /// Reward weight plus spatial weights from the overall reward's saliency.
    Spatial,
    /// Adaptive per-axis saliency mixture plus the balance penalty.
    Balance,
    /// Adds the temporal factor.
    Full,
}

impl WeightingMode {
    pub const ALL: [WeightingMode; 4] = [
        WeightingMode::UniformDmd,
        WeightingMode::Spatial,
        WeightingMode::Balance,
        WeightingMode::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WeightingMode::UniformDmd => "uniform-dmd",
            WeightingMode::Spatial => "spatial",
            WeightingMode::Balance => "balance",
            WeightingMode::Full => "full",
        }
    }
}

impl fmt::Display for WeightingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeightingMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::config("mode", format!("unknown mode `{s}` (uniform-dmd|spatial|balance|full)"))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hyperparameters {
    pub tau: f64,
    pub tau_min: f64,
    pub sigma_min: f64,
    pub beta: f64,
    pub lambda: f64,
    pub window: usize,
    pub epsilon: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            tau: 1.0,
            tau_min: DEFAULT_TEMPORAL_FLOOR,
            sigma_min: DEFAULT_SPATIAL_FLOOR,
            beta: DEFAULT_BETA,
            lambda: DEFAULT_LAMBDA,
            window: DEFAULT_WINDOW,
            epsilon: DEFAULT_GRAD_EPS,
        }
    }
}

impl Hyperparameters {
    pub fn balance(&self) -> BalanceConfig {
        BalanceConfig {
            lambda: self.lambda,
            beta: self.beta,
            window: self.window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau", "must be > 0"));
        }
        crate::decomposition::check_floor("tau_min", self.tau_min)?;
        crate::decomposition::check_floor("sigma_min", self.sigma_min)?;
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("epsilon", "must be >= 0"));
        }
        self.balance().validate()
    }
}

pub struct TrainContext<'a> {
    pub world: &'a GaussianWorld,
    pub rewards: &'a RewardSet,
    pub hyper: Hyperparameters,
    pub mode: WeightingMode,
}

/// Every random choice one step makes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepRandomness {
    pub rollout_seed: u64,
    pub noise_seed: u64,
    pub level_index: usize,
}

impl StepRandomness {
    /// Derives the step's draws from `(seed, step)` alone.
    pub fn derive(seed: u64, step: usize, schedule_len: usize) -> Self {
        let mut r = rng::substream(seed, step as u64 + 1);
        Self {
            rollout_seed: r.random(),
            noise_seed: r.random(),
            level_index: r.random_range(0..schedule_len),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub rewards: AxisMap<f64>,
    pub balanced: BalancedReward,
    pub mixture: Option<MixtureWeights>,
    pub report: WeightedLossReport,
}

fn intra_weights(
    ctx: &TrainContext<'_>,
    x0: &crate::volume::VideoVolume,
) -> Result<(AxisMap<f64>, IntraWeight, Option<MixtureWeights>)> {
    let h = &ctx.hyper;
    match ctx.mode {
        WeightingMode::UniformDmd => Ok((
            ctx.rewards.scores(x0)?,
            IntraWeight::uniform(x0.shape())?,
            None,
        )),
        WeightingMode::Spatial => {
            let (saliency, scores) = overall_saliency(ctx.rewards, x0)?;
            Ok((scores, spatial_only_pipeline(&saliency, h.sigma_min)?, None))
        }
        WeightingMode::Balance | WeightingMode::Full => {
            let bundle = SaliencyBundle::compute(ctx.rewards, x0)?;
            let (combined, mixture) = combine_saliency(&bundle, h.tau)?;
            let w = if ctx.mode == WeightingMode::Full {
                intra_weight_pipeline(&combined, h.tau_min, h.sigma_min)?
            } else {
                spatial_only_pipeline(&combined, h.sigma_min)?
            };
            Ok((bundle.rewards(), w, Some(mixture)))
        }
    }
}

/// One distillation step: rollout, reward weighting, DMD gradient, update.
///
/// The balanced reward uses the history as it was before this step; the
/// step's rewards are recorded afterwards.
pub fn train_step(
    student: &mut ToyStudent,
    ctx: &TrainContext<'_>,
    history: &mut RewardHistory,
    draws: StepRandomness,
) -> Result<StepOutcome> {
    let x0 = rollout(student, draws.rollout_seed);
    let (rewards, w_intra, mixture) = intra_weights(ctx, &x0)?;
    if !rewards.is_finite() {
        return Err(Error::Reward("non-finite reward".into()));
    }
    let balance_cfg = ctx.hyper.balance();
    let balanced = balanced_reward_detail(&rewards, history, &balance_cfg);
    let w_inter = match ctx.mode {
        WeightingMode::UniformDmd => 1.0,
        WeightingMode::Spatial => inter_reliability_weight(balanced.mean, ctx.hyper.beta),
        WeightingMode::Balance | WeightingMode::Full => {
            inter_reliability_weight(balanced.value, ctx.hyper.beta)
        }
    };

    let level = *ctx
        .world
        .schedule
        .get(draws.level_index)
        .ok_or_else(|| Error::NoiseLevel(format!("no schedule entry {}", draws.level_index)))?;
    let sample = DmdSample::noised(x0, level, draws.noise_seed);
    let pair = make_score_pair(ctx.world, student)?;
    let g = dmd_gradient(&pair, &sample)?;
    let g_hat = normalize_gradient(&g, ctx.hyper.epsilon)?;
    let mut report = weighted_dmd_loss(&sample.x0, &g_hat, w_inter, &w_intra)?;
    report.g = Some(g);

    student.apply_gradient(&report.gradient)?;
    history.record_step(rewards);
    Ok(StepOutcome {
        rewards,
        balanced,
        mixture,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{BoxedReward, TemplateReward};
    use crate::sim::{analytic_posterior_mean, cosine_noise_level};
    use crate::volume::{Shape, VideoVolume};

    fn template_set(reference: &VideoVolume) -> RewardSet {
        AxisMap::from_fn(|_| {
            Box::new(TemplateReward::new(reference.clone(), 1.0).unwrap()) as BoxedReward
        })
    }

    #[test]
    fn mode_names_round_trip() {
        for m in WeightingMode::ALL {
            assert_eq!(m.as_str().parse::<WeightingMode>().unwrap(), m);
        }
        assert!("nope".parse::<WeightingMode>().is_err());
    }

    #[test]
    fn matched_world_is_a_fixed_point_in_every_mode() {
        let shape = Shape::new(3, 4, 4);
        let mu = rng::uniform_volume(shape, &mut rng::seeded(1), 0.0, 1.0);
        let world = GaussianWorld::with_timesteps(mu.clone(), 0.1, &[1000, 750, 500, 250]).unwrap();
        let rewards = template_set(&mu);
        for mode in WeightingMode::ALL {
            let ctx = TrainContext { world: &world, rewards: &rewards, hyper: Default::default(), mode };
            let mut student = ToyStudent::new(mu.clone(), 0.1, 5.0, None).unwrap();
            let mut history = RewardHistory::new(4).unwrap();
            for step in 0..6 {
                let draws = StepRandomness::derive(9, step, world.schedule.len());
                train_step(&mut student, &ctx, &mut history, draws).unwrap();
            }
            assert_eq!(student.theta, mu, "mode {mode}");
        }
    }

    #[test]
    fn uniform_step_in_noiseless_limit() {
        let shape = Shape::new(1, 3, 3);
        let mu = VideoVolume::zeros(shape).unwrap();
        let theta = rng::uniform_volume(shape, &mut rng::seeded(2), -1.0, 1.0);
        let world = GaussianWorld::with_timesteps(mu.clone(), 0.5, &[250]).unwrap();
        let rewards = template_set(&mu);
        let ctx = TrainContext {
            world: &world,
            rewards: &rewards,
            hyper: Hyperparameters { epsilon: 0.0, ..Default::default() },
            mode: WeightingMode::UniformDmd,
        };
        let mut student = ToyStudent::new(theta.clone(), 0.5, 3.0, None).unwrap();
        let mut history = RewardHistory::new(4).unwrap();
        let draws = StepRandomness::derive(4, 0, 1);
        let out = train_step(&mut student, &ctx, &mut history, draws).unwrap();

        // Independent route: both posterior means applied to the same x_t.
        let level = cosine_noise_level(250);
        let x0 = rollout(&ToyStudent::new(theta.clone(), 0.5, 3.0, None).unwrap(), draws.rollout_seed);
        let sample = DmdSample::noised(x0, level, draws.noise_seed);
        let fake = analytic_posterior_mean(&sample.x_t, level.alpha, level.sigma, &theta, 0.5).unwrap();
        let real = analytic_posterior_mean(&sample.x_t, level.alpha, level.sigma, &mu, 0.5).unwrap();
        let g = fake.sub(&real).unwrap();
        let g_hat = g.scale(1.0 / g.mean_abs());
        let n = shape.len() as f64;
        for i in 0..shape.len() {
            let expected = theta.as_slice()[i] - 3.0 * g_hat.as_slice()[i] / n;
            assert!((student.theta.as_slice()[i] - expected).abs() < 1e-12);
        }
        // The step moves θ toward μ_real.
        assert!(student.theta.l2_norm() < theta.l2_norm());
        assert_eq!(out.report.w_inter, 1.0);
        assert_eq!(history.len(), 1);
    }

    #[test]
    fn neutral_weights_match_uniform_direction() {
        // Constant rollouts and template rewards at a constant reference: all
        // saliency maps are constant, so W_intra is all-ones.
        let shape = Shape::new(2, 3, 3);
        let mu = VideoVolume::filled(shape, 1.0).unwrap();
        let theta = VideoVolume::filled(shape, 0.25).unwrap();
        let world = GaussianWorld::with_timesteps(mu.clone(), 0.5, &[500]).unwrap();
        let rewards = template_set(&VideoVolume::filled(shape, 0.6).unwrap());
        let mut updates = Vec::new();
        for mode in [WeightingMode::UniformDmd, WeightingMode::Full] {
            let ctx = TrainContext { world: &world, rewards: &rewards, hyper: Default::default(), mode };
            let mut student = ToyStudent::new(theta.clone(), 1e-300, 1.0, None).unwrap();
            let mut history = RewardHistory::new(4).unwrap();
            let out = train_step(&mut student, &ctx, &mut history, StepRandomness::derive(1, 0, 1)).unwrap();
            assert!(out.report.w_intra.composed.as_slice().iter().all(|&w| w == 1.0));
            updates.push((student.theta.sub(&theta).unwrap(), out.report.w_inter));
        }
        let (u, wu) = &updates[0];
        let (f, wf) = &updates[1];
        assert_eq!(*wu, 1.0);
        for (a, b) in u.as_slice().iter().zip(f.as_slice()) {
            assert!((b / wf - a).abs() < 1e-12 * a.abs().max(1e-12));
        }
    }
}
