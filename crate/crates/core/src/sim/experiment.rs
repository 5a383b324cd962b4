use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::RewardHistory;
use crate::error::{Error, Result};
use crate::reward::{
    AxisMap, BoxedReward, MotionReward, RewardSet, SharpnessReward, TemplateReward,
};
use crate::sim::{
    train_step, GaussianWorld, Hyperparameters, StepRandomness, TaskKind, ToyStudent,
    TrainContext, WeightingMode, DEFAULT_TIMESTEPS,
};
use crate::volume::{global_mean, Shape, VideoVolume};

/// How to build one axis's reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RewardSpec {
    Sharpness {
        scale: f64,
    },
    Motion {
        target: f64,
        width: f64,
    },
    Template {
        width: f64,
        /// `.vvol` path; absent or `"teacher"` means the teacher mean.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<String>,
    },
}

impl RewardSpec {
    pub fn build(&self, teacher: &VideoVolume) -> Result<BoxedReward> {
        Ok(match self {
            RewardSpec::Sharpness { scale } => Box::new(SharpnessReward::new(*scale)?),
            RewardSpec::Motion { target, width } => Box::new(MotionReward::new(*target, *width)?),
            RewardSpec::Template { width, reference } => {
                let reference = match reference.as_deref() {
                    None | Some("teacher") => teacher.clone(),
                    Some(path) => {
                        let v = VideoVolume::load(PathBuf::from(path))?;
                        v.ensure_shape(teacher.shape())?;
                        v
                    }
                };
                Box::new(TemplateReward::new(reference, *width)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub shape: Shape,
    pub mode: WeightingMode,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub lr: f64,
    pub teacher_std: f64,
    pub student_std: f64,
    pub ema_decay: Option<f64>,
    pub timesteps: Vec<u32>,
    pub hyper: Hyperparameters,
    /// Per-axis overrides of the task's reward defaults.
    pub rewards: AxisMap<Option<RewardSpec>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Heterogeneous,
            shape: Shape::new(8, 8, 8),
            mode: WeightingMode::Full,
            seeds: vec![1],
            steps: 200,
            lr: 0.02,
            teacher_std: 0.05,
            student_std: 0.05,
            ema_decay: None,
            timesteps: DEFAULT_TIMESTEPS.to_vec(),
            hyper: Hyperparameters::default(),
            rewards: AxisMap::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let s = self.shape;
        if s.frames == 0 || s.height == 0 || s.width == 0 {
            return Err(Error::config("shape", "all dimensions must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be > 0"));
        }
        for (key, v) in [("teacher_std", self.teacher_std), ("student_std", self.student_std)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be > 0"));
            }
        }
        if let Some(d) = self.ema_decay {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::config("ema_decay", "must lie in [0, 1)"));
            }
        }
        if self.timesteps.is_empty() {
            return Err(Error::config("timesteps", "must be non-empty"));
        }
        self.hyper.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateSummary {
    pub dist_to_real: f64,
    pub rewards: AxisMap<f64>,
    pub mean_reward: f64,
}

impl StateSummary {
    fn of(theta: &VideoVolume, mu: &VideoVolume, rewards: &RewardSet) -> Result<Self> {
        let r = rewards.scores(theta)?;
        Ok(Self {
            dist_to_real: theta.sub(mu)?.l2_norm(),
            rewards: r,
            mean_reward: r.mean(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub rewards: AxisMap<f64>,
    /// `None` during warmup.
    pub deltas: Option<AxisMap<f64>>,
    pub penalty: f64,
    pub r_final: f64,
    pub w_inter: f64,
    /// ‖θ − μ_real‖ after the update.
    pub dist_to_real: f64,
    pub loss: f64,
    pub mean_w_intra: f64,
    pub mean_abs_g: f64,
    pub mean_abs_ghat: f64,
}

pub const TRAJECTORY_HEADER: [&str; 11] = [
    "step", "r_vq", "r_mq", "r_ta", "delta_vq", "delta_mq", "delta_ta", "penalty", "r_final",
    "w_inter", "dist_to_real",
];

pub const SUMMARY_HEADER: [&str; 8] = [
    "seed",
    "mode",
    "steps",
    "initial_dist",
    "final_dist",
    "final_r_vq",
    "final_r_mq",
    "final_r_ta",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    /// Per-step rewards, balance terms and distance. Deltas print as 0 during warmup.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRAJECTORY_HEADER)?;
        for r in &self.records {
            let d = r.deltas.unwrap_or_default();
            let values = [
                r.rewards.vq,
                r.rewards.mq,
                r.rewards.ta,
                d.vq,
                d.mq,
                d.ta,
                r.penalty,
                r.r_final,
                r.w_inter,
                r.dist_to_real,
            ];
            w.write_record(
                std::iter::once(r.step.to_string()).chain(values.iter().map(f64::to_string)),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_loss_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(crate::dmd::WeightedLossReport::CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.loss.to_string(),
                r.w_inter.to_string(),
                r.mean_w_intra.to_string(),
                r.mean_abs_g.to_string(),
                r.mean_abs_ghat.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean balance penalty over the steps after warmup.
    pub fn mean_post_warmup_penalty(&self) -> Option<f64> {
        let post: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.deltas.is_some())
            .map(|r| r.penalty)
            .collect();
        (!post.is_empty()).then(|| post.iter().sum::<f64>() / post.len() as f64)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub mode: WeightingMode,
    pub rewards: AxisMap<RewardSpec>,
    pub initial: StateSummary,
    #[serde(skip)]
    pub trajectory: Trajectory,
    pub final_state: StateSummary,
}

impl SeedRun {
    pub fn summary_row(&self) -> [String; 8] {
        [
            self.seed.to_string(),
            self.mode.to_string(),
            self.trajectory.records.len().to_string(),
            self.initial.dist_to_real.to_string(),
            self.final_state.dist_to_real.to_string(),
            self.final_state.rewards.vq.to_string(),
            self.final_state.rewards.mq.to_string(),
            self.final_state.rewards.ta.to_string(),
        ]
    }
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    cfg.validate()?;
    let task = cfg.task.instantiate(cfg.shape, seed)?;
    let world = GaussianWorld::with_timesteps(task.mu_real, cfg.teacher_std, &cfg.timesteps)?;
    let specs = AxisMap::from_fn(|a| cfg.rewards[a].clone().unwrap_or_else(|| task.rewards[a].clone()));
    let rewards: RewardSet = AxisMap::try_from_fn(|a| specs[a].build(&world.mu_real))?;
    let mut student = ToyStudent::new(task.init_theta, cfg.student_std, cfg.lr, cfg.ema_decay)?;
    let mut history = RewardHistory::new(cfg.hyper.window)?;
    let ctx = TrainContext {
        world: &world,
        rewards: &rewards,
        hyper: cfg.hyper,
        mode: cfg.mode,
    };

    let initial = StateSummary::of(student.eval_theta(), &world.mu_real, &rewards)?;
    let mut records = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let draws = StepRandomness::derive(seed, step, world.schedule.len());
        let out = train_step(&mut student, &ctx, &mut history, draws)?;
        let report = &out.report;
        records.push(TrajectoryRecord {
            step,
            rewards: out.rewards,
            deltas: out.balanced.deltas,
            penalty: out.balanced.penalty,
            r_final: out.balanced.value,
            w_inter: report.w_inter,
            dist_to_real: student.theta.sub(&world.mu_real)?.l2_norm(),
            loss: report.loss,
            mean_w_intra: global_mean(&report.w_intra.composed),
            mean_abs_g: report.g.as_ref().map_or(f64::NAN, VideoVolume::mean_abs),
            mean_abs_ghat: report.g_hat.mean_abs(),
        });
    }
    let final_state = StateSummary::of(student.eval_theta(), &world.mu_real, &rewards)?;
    Ok(SeedRun {
        seed,
        mode: cfg.mode,
        rewards: specs,
        initial,
        trajectory: Trajectory { records },
        final_state,
    })
}

/// Runs every seed independently, in parallel on the current rayon pool.
/// Results come back in seed-list order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(task: TaskKind, mode: WeightingMode, steps: usize) -> ExperimentConfig {
        ExperimentConfig {
            task,
            mode,
            steps,
            seeds: vec![1, 2],
            ..Default::default()
        }
    }

    #[test]
    fn zero_steps_echo_initial_state() {
        let cfg = quick(TaskKind::Heterogeneous, WeightingMode::Full, 0);
        let run = run_seed(&cfg, 5).unwrap();
        assert!(run.trajectory.records.is_empty());
        assert_eq!(run.initial, run.final_state);
        let mut buf = Vec::new();
        run.trajectory.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn uniform_converges_monotonically_on_gaussian_task() {
        // Stable while lr < n · mean|θ0 − μ| / steps; here n = 256 and mean|μ| = 0.5.
        let cfg = ExperimentConfig {
            lr: 0.5,
            ..quick(TaskKind::Gaussian, WeightingMode::UniformDmd, 200)
        };
        for seed in [1, 2, 3] {
            let run = run_seed(&cfg, seed).unwrap();
            let mut prev = run.initial.dist_to_real;
            for r in &run.trajectory.records {
                assert!(r.dist_to_real < prev, "seed {seed} step {}", r.step);
                prev = r.dist_to_real;
            }
        }
    }

    #[test]
    fn runs_are_deterministic_and_ordered() {
        let cfg = quick(TaskKind::TwoRate, WeightingMode::Full, 30);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.trajectory, y.trajectory);
            let (mut cx, mut cy) = (Vec::new(), Vec::new());
            x.trajectory.write_csv(&mut cx).unwrap();
            y.trajectory.write_csv(&mut cy).unwrap();
            assert_eq!(cx, cy);
        }
        assert_eq!(a[0].seed, 1);
        assert_eq!(a[1].seed, 2);
    }

    #[test]
    fn warmup_rows_have_no_deltas() {
        let cfg = ExperimentConfig {
            hyper: Hyperparameters { window: 4, ..Default::default() },
            ..quick(TaskKind::TwoRate, WeightingMode::Balance, 8)
        };
        let run = run_seed(&cfg, 1).unwrap();
        for r in &run.trajectory.records {
            assert_eq!(r.deltas.is_some(), r.step >= 4);
            if r.deltas.is_none() {
                assert_eq!(r.penalty, 0.0);
            }
        }
    }

    #[test]
    fn reward_override_and_validation() {
        let mut cfg = quick(TaskKind::Gaussian, WeightingMode::UniformDmd, 1);
        cfg.rewards.vq = Some(RewardSpec::Template { width: 2.0, reference: Some("teacher".into()) });
        let run = run_seed(&cfg, 1).unwrap();
        assert!(matches!(run.rewards.vq, RewardSpec::Template { .. }));

        cfg.lr = 0.0;
        assert!(run_seed(&cfg, 1).unwrap_err().is_config());
        let bad: serde_json::Result<RewardSpec> =
            serde_json::from_str(r#"{"kind":"motion","target":1.0,"width":1.0,"extra":1}"#);
        assert!(bad.is_err());
    }
}
