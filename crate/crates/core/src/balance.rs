//! Sliding-window balanced reward and the per-rollout reliability weight.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::reward::AxisMap;

pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 2.0;
pub const DEFAULT_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceConfig {
    pub lambda: f64,
    pub beta: f64,
    pub window: usize,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            beta: DEFAULT_BETA,
            window: DEFAULT_WINDOW,
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", "must be >= 0"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be > 0"));
        }
        if self.window < 2 {
            return Err(Error::config("window", "must be >= 2"));
        }
        Ok(())
    }
}

/// Ring buffer of the last `window` per-axis rewards.
///
/// One entry holds all three axes, so the per-axis histories always have
/// equal length.
#[derive(Debug, Clone)]
pub struct RewardHistory {
    window: usize,
    entries: VecDeque<AxisMap<f64>>,
    steps: usize,
}

impl RewardHistory {
    pub fn new(window: usize) -> Result<Self> {
        if window < 2 {
            return Err(Error::config("window", "must be >= 2"));
        }
        Ok(Self {
            window,
            entries: VecDeque::with_capacity(window),
            steps: 0,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of records ever made.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn in_warmup(&self) -> bool {
        self.steps < self.window
    }

    pub fn entries(&self) -> impl Iterator<Item = &AxisMap<f64>> {
        self.entries.iter()
    }

    pub fn record_step(&mut self, rewards: AxisMap<f64>) {
        if self.entries.len() == self.window {
            self.entries.pop_front();
        }
        self.entries.push_back(rewards);
        self.steps += 1;
    }

    /// Mean of the recent half minus mean of the baseline half, per axis.
    /// For odd windows the middle entry belongs to neither half.
    pub fn improvement_deltas(&self) -> Result<AxisMap<f64>> {
        if self.entries.len() < self.window {
            return Err(Error::Warmup {
                recorded: self.entries.len(),
                window: self.window,
            });
        }
        let half = self.window / 2;
        let mut baseline = AxisMap::<f64>::default();
        let mut recent = AxisMap::<f64>::default();
        for e in self.entries.iter().take(half) {
            baseline.vq += e.vq;
            baseline.mq += e.mq;
            baseline.ta += e.ta;
        }
        for e in self.entries.iter().skip(self.window - half) {
            recent.vq += e.vq;
            recent.mq += e.mq;
            recent.ta += e.ta;
        }
        let h = half as f64;
        Ok(AxisMap::new(
            recent.vq / h - baseline.vq / h,
            recent.mq / h - baseline.mq / h,
            recent.ta / h - baseline.ta / h,
        ))
    }
}

/// Population standard deviation of the three improvements.
pub fn balance_penalty(deltas: &AxisMap<f64>) -> f64 {
    let m = deltas.mean();
    let var = deltas.values().map(|d| (d - m) * (d - m)).sum::<f64>() / 3.0;
    var.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalancedReward {
    pub mean: f64,
    /// `None` during warmup.
    pub deltas: Option<AxisMap<f64>>,
    pub penalty: f64,
    pub value: f64,
}

/// Mean reward minus `λ · penalty`; the penalty is zero until the window is full.
pub fn balanced_reward_detail(
    rewards: &AxisMap<f64>,
    history: &RewardHistory,
    cfg: &BalanceConfig,
) -> BalancedReward {
    let mean = rewards.mean();
    if history.in_warmup() {
        return BalancedReward {
            mean,
            deltas: None,
            penalty: 0.0,
            value: mean,
        };
    }
    let deltas = history
        .improvement_deltas()
        .expect("history is full once warmup is over");
    let penalty = balance_penalty(&deltas);
    BalancedReward {
        mean,
        deltas: Some(deltas),
        penalty,
        value: mean - cfg.lambda * penalty,
    }
}

pub fn balanced_reward(rewards: &AxisMap<f64>, history: &RewardHistory, cfg: &BalanceConfig) -> f64 {
    balanced_reward_detail(rewards, history, cfg).value
}

pub fn inter_reliability_weight(r_final: f64, beta: f64) -> f64 {
    (beta * r_final).exp()
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn penalty_ignores_common_offsets(d in prop::array::uniform3(-1.0f64..1.0), c in -5.0f64..5.0) {
            let p = balance_penalty(&AxisMap::new(d[0], d[1], d[2]));
            let q = balance_penalty(&AxisMap::new(d[0] + c, d[1] + c, d[2] + c));
            prop_assert!(p >= 0.0);
            prop_assert!((p - q).abs() < 1e-9);
        }

        #[test]
        fn inter_weight_is_monotone(a in -2.0f64..2.0, b in -2.0f64..2.0, beta in 0.0f64..5.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(inter_reliability_weight(lo, beta) <= inter_reliability_weight(hi, beta));
            prop_assert!(inter_reliability_weight(lo, beta) > 0.0);
        }

        #[test]
        fn history_keeps_only_the_window(n in 0usize..60, window in 2usize..25) {
            let mut h = RewardHistory::new(window).unwrap();
            for i in 0..n {
                let x = i as f64;
                h.record_step(AxisMap::new(x, x, x));
            }
            prop_assert_eq!(h.len(), n.min(window));
            prop_assert_eq!(h.in_warmup(), n < window);
        }
    }
}
