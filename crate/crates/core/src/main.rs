use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rpdmd::artifacts::{write_frame_pgms, write_temporal_csv};
use rpdmd::checks::run_checks;
use rpdmd::config::{load_config, FlagOverrides, Resolved, RunManifest};
use rpdmd::decomposition::intra_weight_pipeline;
use rpdmd::reward::{AxisMap, RewardSet};
use rpdmd::saliency::{combine_saliency, SaliencyBundle};
use rpdmd::sim::{
    fig5_sweep, growing_lower_half_specs, run_experiment, RewardSpec, TaskKind, WeightingMode,
    SUMMARY_HEADER,
};
use rpdmd::volume::VideoVolume;
use rpdmd::{rng, Error, Result};

#[derive(Parser)]
#[command(name = "rpdmd", version, about = "Reward-weighted distillation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Intra weights for a `.vvol` volume.
    Weights {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Treat the input as an already combined saliency map.
        #[arg(long)]
        saliency: bool,
        #[command(flatten)]
        hyper: HyperFlags,
    },
    /// Run the toy distillation for every seed.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<WeightingMode>,
        #[arg(long)]
        task: Option<TaskKind>,
        /// Comma-separated list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        hyper: HyperFlags,
    },
    /// Region-blur sweep with growing degraded area.
    Fig5 {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        hyper: HyperFlags,
    },
    /// Run the built-in invariant suite.
    Check {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args, Default, Clone)]
struct HyperFlags {
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    tau_min: Option<f64>,
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
}

impl HyperFlags {
    fn overrides(&self) -> FlagOverrides {
        FlagOverrides {
            tau: self.tau,
            tau_min: self.tau_min,
            sigma_min: self.sigma_min,
            beta: self.beta,
            lambda: self.lambda,
            window: self.window,
            epsilon: self.epsilon,
            ..Default::default()
        }
    }
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn write_manifest(out: &Path, mut manifest: RunManifest, outputs: Vec<String>) -> Result<()> {
    manifest.outputs = outputs;
    fs::write(out.join("manifest.json"), manifest.to_json()?)?;
    Ok(())
}

fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("RPDMD_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config {
                key: "RPDMD_THREADS".into(),
                reason: format!("expected a positive integer, got `{s}`"),
            }),
        },
    }
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config {
        key: "RPDMD_THREADS".into(),
        reason: e.to_string(),
    })?;
    Ok(pool.install(f))
}

/// Rewards for `weights`: the teacher is the all-zeros volume.
fn weights_rewards(resolved: &Resolved, input: &VideoVolume) -> Result<RewardSet> {
    let defaults = AxisMap::new(
        RewardSpec::Sharpness { scale: 1.0 },
        RewardSpec::Motion { target: 0.0, width: 1.0 },
        RewardSpec::Template { width: 1.0, reference: None },
    );
    let zeros = VideoVolume::zeros(input.shape())?;
    AxisMap::try_from_fn(|a| {
        resolved.experiment.rewards[a]
            .clone()
            .unwrap_or_else(|| defaults[a].clone())
            .build(&zeros)
    })
}

fn cmd_weights(
    input: &Path,
    config: Option<&Path>,
    out: &Path,
    is_saliency: bool,
    hyper: &HyperFlags,
) -> Result<()> {
    let resolved = load_config(config, &hyper.overrides())?;
    let h = resolved.experiment.hyper;
    let v = VideoVolume::load(input)?;
    let (combined, alpha) = if is_saliency {
        if v.as_slice().iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidVolume("saliency entries must be non-negative".into()));
        }
        (v, None)
    } else {
        let rewards = weights_rewards(&resolved, &v)?;
        let bundle = SaliencyBundle::compute(&rewards, &v)?;
        let (combined, mixture) = combine_saliency(&bundle, h.tau)?;
        (combined, Some(mixture))
    };
    let w = intra_weight_pipeline(&combined, h.tau_min, h.sigma_min)?;
    w.check_invariants(1e-9)?;

    prepare_out(out)?;
    let mut outputs = vec!["temporal.csv".to_string()];
    write_temporal_csv(&w.temporal, fs::File::create(out.join("temporal.csv"))?)?;
    for (name, vol) in [
        ("combined.vvol", &combined),
        ("spatial.vvol", &w.spatial),
        ("composed.vvol", &w.composed),
    ] {
        vol.save(out.join(name))?;
        outputs.push(name.to_string());
    }
    outputs.extend(write_frame_pgms(&w.composed, out, "weights")?);
    outputs.extend(write_frame_pgms(&combined, out, "saliency")?);
    if let Some(m) = alpha {
        fs::write(out.join("mixture.json"), serde_json::to_string_pretty(&m)? + "\n")?;
        outputs.push("mixture.json".into());
    }
    write_manifest(out, RunManifest::new("weights", &resolved), outputs)?;
    println!("temporal weights: {:?}", w.temporal);
    Ok(())
}

fn cmd_train(config: Option<&Path>, out: &Path, flags: FlagOverrides) -> Result<()> {
    let resolved = load_config(config, &flags)?;
    let cfg = &resolved.experiment;
    let runs = with_pool(|| run_experiment(cfg))??;

    prepare_out(out)?;
    let mode = cfg.mode;
    let mut outputs = Vec::new();
    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record(SUMMARY_HEADER)?;
    for run in &runs {
        let traj = format!("trajectory_{mode}_seed{}.csv", run.seed);
        let loss = format!("loss_{mode}_seed{}.csv", run.seed);
        run.trajectory.write_csv(fs::File::create(out.join(&traj))?)?;
        run.trajectory.write_loss_csv(fs::File::create(out.join(&loss))?)?;
        summary.write_record(run.summary_row())?;
        outputs.push(traj);
        outputs.push(loss);
        println!(
            "seed {}: mean reward {:.6} -> {:.6}, dist {:.6} -> {:.6}",
            run.seed,
            run.initial.mean_reward,
            run.final_state.mean_reward,
            run.initial.dist_to_real,
            run.final_state.dist_to_real
        );
    }
    let summary_name = format!("summary_{mode}.csv");
    fs::write(
        out.join(&summary_name),
        summary.into_inner().map_err(|e| Error::Io(e.into_error()))?,
    )?;
    outputs.push(summary_name);
    let manifest_runs: Vec<_> = runs.iter().collect();
    fs::write(
        out.join(format!("runs_{mode}.json")),
        serde_json::to_string_pretty(&manifest_runs)? + "\n",
    )?;
    outputs.push(format!("runs_{mode}.json"));
    write_manifest(out, RunManifest::new("train", &resolved), outputs)
}

fn cmd_fig5(config: Option<&Path>, out: &Path, hyper: &HyperFlags) -> Result<()> {
    let resolved = load_config(config, &hyper.overrides())?;
    let h = resolved.experiment.hyper;
    let f = &resolved.fig5;
    let base = rng::uniform_volume(f.shape, &mut rng::seeded(f.seed), 0.0, 1.0);
    let reward = rpdmd::reward::TemplateReward::new(base.clone(), f.template_width)?;
    let specs = growing_lower_half_specs(f.shape, f.radius);
    let report = fig5_sweep(&base, &specs, &reward, h.tau_min, h.sigma_min)?;

    prepare_out(out)?;
    let mut outputs = vec!["fig5.csv".to_string(), "temporal.csv".to_string()];
    report.write_csv(fs::File::create(out.join("fig5.csv"))?)?;
    write_temporal_csv(report.temporal(), fs::File::create(out.join("temporal.csv"))?)?;
    report.degraded.save(out.join("degraded.vvol"))?;
    report.weights.composed.save(out.join("composed.vvol"))?;
    outputs.push("degraded.vvol".into());
    outputs.push("composed.vvol".into());
    outputs.extend(write_frame_pgms(&report.saliency, out, "saliency")?);
    outputs.extend(write_frame_pgms(&report.weights.composed, out, "weights")?);
    for fr in &report.frames {
        println!(
            "frame {}: area {:>4}  temporal {:.6}  lower {:.6e}  upper {:.6e}",
            fr.frame, fr.degraded_area, fr.temporal_weight, fr.lower_mass, fr.upper_mass
        );
    }
    write_manifest(out, RunManifest::new("fig5", &resolved), outputs)
}

fn cmd_check(config: Option<&Path>) -> Result<bool> {
    let resolved = load_config(config, &FlagOverrides::default())?;
    let results = run_checks(&resolved.experiment.hyper);
    for c in &results {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(results.iter().all(|c| c.passed))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Weights {
            input,
            config,
            out,
            saliency,
            hyper,
        } => cmd_weights(&input, config.as_deref(), &out, saliency, &hyper).map(|_| true),
        Command::Train {
            config,
            mode,
            task,
            seeds,
            steps,
            lr,
            out,
            hyper,
        } => {
            let flags = FlagOverrides {
                mode,
                task,
                seeds,
                steps,
                lr,
                ..hyper.overrides()
            };
            cmd_train(config.as_deref(), &out, flags).map(|_| true)
        }
        Command::Fig5 { config, out, hyper } => {
            cmd_fig5(config.as_deref(), &out, &hyper).map(|_| true)
        }
        Command::Check { config } => cmd_check(config.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
