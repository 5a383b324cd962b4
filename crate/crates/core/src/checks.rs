//! Self-test suite behind `rpdmd check`.

use serde::Serialize;

use crate::balance::{balance_penalty, inter_reliability_weight, RewardHistory};
use crate::decomposition::{
    intra_weight_pipeline, population_variance, temporal_weights, IntraWeight,
};
use crate::dmd::{base_dmd_loss, normalize_gradient, weighted_dmd_loss};
use crate::error::Result;
use crate::reward::{
    finite_diff_gradient, max_norm_relative_error, AxisMap, BoxedReward, DifferentiableReward,
    MotionReward, SharpnessReward, TemplateReward,
};
use crate::rng;
use crate::saliency::axis_mixture_weights;
use crate::sim::{
    fig5_sweep, growing_lower_half_specs, train_step, GaussianWorld, Hyperparameters,
    StepRandomness, ToyStudent, TrainContext, WeightingMode, DEFAULT_TIMESTEPS,
};
use crate::volume::{global_mean, Shape, TemporalProfile};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, r: Result<(bool, String)>) -> CheckOutcome {
    match r {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn worked_examples() -> Result<(bool, String)> {
    let a = axis_mixture_weights(AxisMap::new(0.2, 0.5, 0.8), 1.0)?.alpha;
    let alpha_ok = (a.vq - 0.4367518).abs() < 1e-4
        && (a.mq - 0.3235537).abs() < 1e-4
        && (a.ta - 0.2396945).abs() < 1e-4;
    let t = temporal_weights(&TemporalProfile::new(vec![1.0, 2.0, 3.0, 4.0])?, 0.2)?;
    let expect = [0.2 / 0.55, (1.0 / 3.0) / 0.55, (2.0 / 3.0) / 0.55, 1.0 / 0.55];
    let t_ok = t.iter().zip(expect).all(|(x, y)| (x - y).abs() < 1e-9);
    let p = balance_penalty(&AxisMap::new(0.1, 0.3, 0.2));
    let p_ok = (p - 0.0816497).abs() < 1e-7;
    let w = inter_reliability_weight(0.5 - 0.5 * p, 2.0);
    let w_ok = (w - (2.0f64 * (0.5 - 0.5 * p)).exp()).abs() < 1e-12 && (w - 2.505154).abs() < 1e-4;
    Ok((
        alpha_ok && t_ok && p_ok && w_ok,
        format!("alpha={a:?} temporal={t:?} penalty={p} w_inter={w}"),
    ))
}

fn reward_gradients() -> Result<(bool, String)> {
    let shape = Shape::new(4, 8, 8);
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let v = rng::uniform_volume(shape, &mut rng::seeded(seed), 0.0, 1.0);
        let reference = rng::uniform_volume(shape, &mut rng::substream(seed, 1), 0.0, 1.0);
        let rewards: [BoxedReward; 3] = [
            Box::new(SharpnessReward::new(1.0)?),
            Box::new(MotionReward::new(0.1, 0.2)?),
            Box::new(TemplateReward::new(reference, 0.5)?),
        ];
        for r in &rewards {
            let err = max_norm_relative_error(&r.gradient(&v)?, &finite_diff_gradient(r, &v, 1e-5)?)?;
            worst = worst.max(err);
        }
    }
    Ok((worst < 1e-4, format!("worst relative error {worst:.3e}")))
}

fn weight_normalization(hyper: &Hyperparameters) -> Result<(bool, String)> {
    let shape = Shape::new(4, 6, 6);
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let s = rng::uniform_volume(shape, &mut rng::seeded(seed), 0.0, 1.0);
        let w = intra_weight_pipeline(&s, hyper.tau_min, hyper.sigma_min)?;
        worst = worst.max((crate::volume::mean(&w.temporal) - 1.0).abs());
        for f in 0..shape.frames {
            worst = worst.max((crate::volume::mean(w.spatial.frame(f)) - 1.0).abs());
        }
        worst = worst.max((global_mean(&w.composed) - 1.0).abs());
        if w.composed.as_slice().iter().any(|&x| !(x > 0.0)) {
            return Ok((false, format!("non-positive weight at seed {seed}")));
        }
    }
    Ok((worst < 1e-9, format!("worst mean deviation {worst:.3e}")))
}

fn loss_reduction() -> Result<(bool, String)> {
    let shape = Shape::new(2, 4, 4);
    let x0 = rng::uniform_volume(shape, &mut rng::seeded(1), -1.0, 1.0);
    let g = rng::uniform_volume(shape, &mut rng::seeded(2), -1.0, 1.0);
    let g_hat = normalize_gradient(&g, 1e-8)?;
    let (loss, grad) = base_dmd_loss(&x0, &g_hat)?;
    let report = weighted_dmd_loss(&x0, &g_hat, 1.0, &IntraWeight::uniform(shape)?)?;
    let same = report.loss.to_bits() == loss.to_bits() && report.gradient == grad;
    Ok((same, format!("loss {loss}")))
}

fn fixed_point(hyper: &Hyperparameters) -> Result<(bool, String)> {
    let shape = Shape::new(3, 6, 6);
    let mu = rng::uniform_volume(shape, &mut rng::seeded(7), 0.0, 1.0);
    let world = GaussianWorld::with_timesteps(mu.clone(), 0.1, &DEFAULT_TIMESTEPS)?;
    let rewards: AxisMap<BoxedReward> = AxisMap::new(
        Box::new(SharpnessReward::new(1.0)?),
        Box::new(MotionReward::new(0.1, 0.2)?),
        Box::new(TemplateReward::new(mu.clone(), 1.0)?),
    );
    for mode in WeightingMode::ALL {
        let ctx = TrainContext { world: &world, rewards: &rewards, hyper: *hyper, mode };
        let mut student = ToyStudent::new(mu.clone(), 0.1, 1.0, None)?;
        let mut history = RewardHistory::new(hyper.window)?;
        for step in 0..5 {
            let draws = StepRandomness::derive(3, step, world.schedule.len());
            train_step(&mut student, &ctx, &mut history, draws)?;
        }
        if student.theta != mu {
            return Ok((false, format!("mode {mode} moved away from the teacher")));
        }
    }
    Ok((true, "theta unchanged in all modes".into()))
}

fn floor_sensitivity() -> Result<(bool, String)> {
    for seed in 0..200 {
        let mut r = rng::seeded(seed);
        let values = rng::uniform_volume(Shape::new(1, 1, 8), &mut r, 0.0, 1.0).into_vec();
        let p = TemporalProfile::new(values)?;
        let low = population_variance(&temporal_weights(&p, 0.2)?);
        let high = population_variance(&temporal_weights(&p, 0.4)?);
        if high > low + 1e-12 {
            return Ok((false, format!("seed {seed}: {high} > {low}")));
        }
    }
    Ok((true, "variance never grows with the floor".into()))
}

fn fig5(hyper: &Hyperparameters) -> Result<(bool, String)> {
    for seed in 0..5 {
        let base = rng::uniform_volume(Shape::new(4, 16, 16), &mut rng::seeded(seed), 0.0, 1.0);
        let reward = TemplateReward::new(base.clone(), 0.1)?;
        let specs = growing_lower_half_specs(base.shape(), 1);
        let report = fig5_sweep(&base, &specs, &reward, hyper.tau_min, hyper.sigma_min)?;
        let t = report.temporal();
        let monotone = t.windows(2).all(|p| p[0] <= p[1]);
        let lower = report.frames.iter().all(|f| f.lower_mass > f.upper_mass);
        if !(monotone && lower) {
            return Ok((false, format!("seed {seed}: temporal {t:?}")));
        }
    }
    Ok((true, "monotone temporal weights, lower half dominant".into()))
}

pub fn run_checks(hyper: &Hyperparameters) -> Vec<CheckOutcome> {
    vec![
        outcome("worked-examples", worked_examples()),
        outcome("reward-gradients", reward_gradients()),
        outcome("weight-normalization", weight_normalization(hyper)),
        outcome("loss-reduction", loss_reduction()),
        outcome("fixed-point", fixed_point(hyper)),
        outcome("floor-sensitivity", floor_sensitivity()),
        outcome("region-blur-sweep", fig5(hyper)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_defaults() {
        for c in run_checks(&Hyperparameters::default()) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
