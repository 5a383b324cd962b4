//! JSON run configuration, flag overrides and the provenance manifest.
//!
//! Every key is optional. Resolution order is default, then file, then flag.
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::reward::AxisMap;
use crate::sim::{ExperimentConfig, RewardSpec, TaskKind, WeightingMode};
use crate::volume::Shape;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardOverrides {
    pub vq: Option<RewardSpec>,
    pub mq: Option<RewardSpec>,
    pub ta: Option<RewardSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig5File {
    pub seed: Option<u64>,
    pub shape: Option<[usize; 3]>,
    pub radius: Option<usize>,
    pub template_width: Option<f64>,
}

/// The on-disk schema.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub task: Option<TaskKind>,
    pub shape: Option<[usize; 3]>,
    pub mode: Option<WeightingMode>,
    pub seeds: Option<Vec<u64>>,
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub teacher_std: Option<f64>,
    pub student_std: Option<f64>,
    pub ema_decay: Option<f64>,
    pub timesteps: Option<Vec<u32>>,
    pub tau: Option<f64>,
    pub tau_min: Option<f64>,
    pub sigma_min: Option<f64>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub window: Option<usize>,
    pub epsilon: Option<f64>,
    pub rewards: Option<RewardOverrides>,
    pub fig5: Option<Fig5File>,
}

impl FileConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }
}

/// Command-line overrides; same meaning as the file keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlagOverrides {
    pub mode: Option<WeightingMode>,
    pub task: Option<TaskKind>,
    pub seeds: Option<Vec<u64>>,
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub tau: Option<f64>,
    pub tau_min: Option<f64>,
    pub sigma_min: Option<f64>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub window: Option<usize>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    File,
    Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Setting {
    pub key: &'static str,
    pub value: Value,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig5Config {
    pub seed: u64,
    pub shape: Shape,
    pub radius: usize,
    pub template_width: f64,
}

impl Default for Fig5Config {
    fn default() -> Self {
        Self {
            seed: 0,
            shape: Shape::new(4, 32, 32),
            radius: 2,
            template_width: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub experiment: ExperimentConfig,
    pub fig5: Fig5Config,
    pub settings: Vec<Setting>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub settings: Vec<Setting>,
    pub rewards: AxisMap<Option<RewardSpec>>,
    pub fig5: Fig5Config,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, resolved: &Resolved) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            settings: resolved.settings.clone(),
            rewards: resolved.experiment.rewards.clone(),
            fig5: resolved.fig5.clone(),
            seeds: resolved.experiment.seeds.clone(),
            outputs: Vec::new(),
        }
    }

    pub fn source_of(&self, key: &str) -> Option<Source> {
        self.settings.iter().find(|s| s.key == key).map(|s| s.source)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

struct Resolver {
    settings: Vec<Setting>,
}

impl Resolver {
    fn pick<T: Serialize>(&mut self, key: &'static str, default: T, file: Option<T>, flag: Option<T>) -> T {
        let (value, source) = match (flag, file) {
            (Some(v), _) => (v, Source::Flag),
            (None, Some(v)) => (v, Source::File),
            (None, None) => (default, Source::Default),
        };
        self.settings.push(Setting {
            key,
            value: serde_json::to_value(&value).unwrap_or(Value::Null),
            source,
        });
        value
    }
}

fn shape_from(key: &str, dims: [usize; 3]) -> Result<Shape> {
    if dims.contains(&0) {
        return Err(Error::config(key, "all dimensions must be >= 1"));
    }
    Ok(Shape::new(dims[0], dims[1], dims[2]))
}

/// Applies defaults, the file and the flags, then validates every range.
pub fn resolve(file: FileConfig, flags: &FlagOverrides) -> Result<Resolved> {
    let d = ExperimentConfig::default();
    let mut r = Resolver { settings: Vec::new() };
    let mut cfg = ExperimentConfig {
        task: r.pick("task", d.task, file.task, flags.task),
        shape: {
            let dims = r.pick("shape", [d.shape.frames, d.shape.height, d.shape.width], file.shape, None);
            shape_from("shape", dims)?
        },
        mode: r.pick("mode", d.mode, file.mode, flags.mode),
        seeds: r.pick("seeds", d.seeds.clone(), file.seeds, flags.seeds.clone()),
        steps: r.pick("steps", d.steps, file.steps, flags.steps),
        lr: r.pick("lr", d.lr, file.lr, flags.lr),
        teacher_std: r.pick("teacher_std", d.teacher_std, file.teacher_std, None),
        student_std: r.pick("student_std", d.student_std, file.student_std, None),
        ema_decay: r.pick("ema_decay", d.ema_decay, file.ema_decay.map(Some), None),
        timesteps: r.pick("timesteps", d.timesteps.clone(), file.timesteps, None),
        hyper: d.hyper,
        rewards: AxisMap::default(),
    };
    let h = d.hyper;
    cfg.hyper.tau = r.pick("tau", h.tau, file.tau, flags.tau);
    cfg.hyper.tau_min = r.pick("tau_min", h.tau_min, file.tau_min, flags.tau_min);
    cfg.hyper.sigma_min = r.pick("sigma_min", h.sigma_min, file.sigma_min, flags.sigma_min);
    cfg.hyper.beta = r.pick("beta", h.beta, file.beta, flags.beta);
    cfg.hyper.lambda = r.pick("lambda", h.lambda, file.lambda, flags.lambda);
    cfg.hyper.window = r.pick("window", h.window, file.window, flags.window);
    cfg.hyper.epsilon = r.pick("epsilon", h.epsilon, file.epsilon, flags.epsilon);
    if let Some(ro) = file.rewards {
        cfg.rewards = AxisMap::new(ro.vq, ro.mq, ro.ta);
    }
    cfg.validate()?;

    let fd = Fig5Config::default();
    let ff = file.fig5.unwrap_or_default();
    let fig5_shape = match ff.shape {
        Some(dims) => shape_from("fig5.shape", dims)?,
        None => fd.shape,
    };
    let fig5 = Fig5Config {
        seed: ff.seed.unwrap_or(fd.seed),
        shape: fig5_shape,
        radius: ff.radius.unwrap_or(fd.radius),
        template_width: ff.template_width.unwrap_or(fd.template_width),
    };
    if fig5.radius == 0 {
        return Err(Error::config("fig5.radius", "must be >= 1"));
    }
    if !(fig5.template_width > 0.0 && fig5.template_width.is_finite()) {
        return Err(Error::config("fig5.template_width", "must be > 0"));
    }
    if fig5.shape.width < fig5.shape.frames || fig5.shape.height < 2 {
        return Err(Error::config(
            "fig5.shape",
            "need height >= 2 and width >= frames for strictly growing regions",
        ));
    }
    Ok(Resolved {
        experiment: cfg,
        fig5,
        settings: r.settings,
    })
}

pub fn load_config(path: Option<&Path>, flags: &FlagOverrides) -> Result<Resolved> {
    let file = match path {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    resolve(file, flags)
}

/// Defaults as a JSON object, handy for writing a starting config.
pub fn default_config_json() -> Value {
    let d = ExperimentConfig::default();
    json!({
        "task": d.task,
        "shape": [d.shape.frames, d.shape.height, d.shape.width],
        "mode": d.mode,
        "seeds": d.seeds,
        "steps": d.steps,
        "lr": d.lr,
        "teacher_std": d.teacher_std,
        "student_std": d.student_std,
        "timesteps": d.timesteps,
        "tau": d.hyper.tau,
        "tau_min": d.hyper.tau_min,
        "sigma_min": d.hyper.sigma_min,
        "beta": d.hyper.beta,
        "lambda": d.hyper.lambda,
        "window": d.hyper.window,
        "epsilon": d.hyper.epsilon,
    })
}
