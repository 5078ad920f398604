use serde::{Deserialize, Serialize};

use super::control::PurePursuitParams;
use super::env::{DoneCause, Env, StepInfo};
use crate::error::{Error, Result};
use crate::geometry::MAX_CURVATURE;

/// Safety cap on steps per rollout trial, for agents that never move.
const MAX_TRIAL_STEPS: u64 = 1_000_000;

/// A closed-loop controller. It may observe or query the env before
/// returning its curvature command.
pub trait Policy {
    fn act(&mut self, env: &mut Env) -> Result<f64>;
}

impl<F: FnMut(&mut Env) -> Result<f64>> Policy for F {
    fn act(&mut self, env: &mut Env) -> Result<f64> {
        self(env)
    }
}

/// Pure pursuit on the true centerline.
#[derive(Debug, Clone, Copy, Default)]
pub struct PrivilegedPolicy(pub PurePursuitParams);

impl Policy for PrivilegedPolicy {
    fn act(&mut self, env: &mut Env) -> Result<f64> {
        Ok(env.privileged_control(&self.0))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub f64);

impl Policy for ConstantPolicy {
    fn act(&mut self, _: &mut Env) -> Result<f64> {
        Ok(self.0)
    }
}

/// Replays the recorded curvature at the agent's arc length.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReplayPolicy;

impl Policy for ReplayPolicy {
    fn act(&mut self, env: &mut Env) -> Result<f64> {
        Ok(env.trace().controls_at_arc(env.state().along).1)
    }
}

/// Linear feedback on the reported deviation and heading error. Needs only
/// what a remote client sees, so it also runs behind the socket server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralFeedbackPolicy {
    pub k_lateral: f64,
    pub k_heading: f64,
}

impl Default for LateralFeedbackPolicy {
    fn default() -> Self {
        Self { k_lateral: 0.04, k_heading: 0.3 }
    }
}

impl LateralFeedbackPolicy {
    pub fn command(&self, deviation: f64, heading_error: f64) -> f64 {
        (-(self.k_lateral * deviation + self.k_heading * heading_error)).clamp(-MAX_CURVATURE, MAX_CURVATURE)
    }
}

impl Policy for LateralFeedbackPolicy {
    fn act(&mut self, env: &mut Env) -> Result<f64> {
        let s = env.state();
        Ok(self.command(s.lateral, s.heading_error))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutMetrics {
    pub trials: u64,
    pub steps: u64,
    /// Mean absolute lateral deviation over all measured steps, meters.
    pub mean_deviation: f64,
    pub crash_rate: f64,
    /// Crash-triggered resets; in simulation every crash is one.
    pub interventions: u64,
}

/// Running totals behind [`RolloutMetrics`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsAccumulator {
    trials: u64,
    crashes: u64,
    steps: u64,
    abs_sum: f64,
}

impl MetricsAccumulator {
    pub fn start_trial(&mut self) {
        self.trials += 1;
    }

    pub fn record(&mut self, info: &StepInfo) {
        if info.measured {
            self.steps += 1;
            self.abs_sum += info.deviation.abs();
        }
        if info.cause == Some(DoneCause::Crash) {
            self.crashes += 1;
        }
    }

    pub fn metrics(&self) -> RolloutMetrics {
        RolloutMetrics {
            trials: self.trials,
            steps: self.steps,
            mean_deviation: if self.steps > 0 { self.abs_sum / self.steps as f64 } else { 0.0 },
            crash_rate: if self.trials > 0 { self.crashes as f64 / self.trials as f64 } else { 0.0 },
            interventions: self.crashes,
        }
    }
}

/// Runs `n_trials` closed-loop episodes; trial `i` resets with seed
/// `seed + i`.
pub fn rollout_metrics(env: &mut Env, policy: &mut dyn Policy, n_trials: u64, seed: u64) -> Result<RolloutMetrics> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let mut acc = MetricsAccumulator::default();
    for i in 0..n_trials {
        env.reset_seeded(seed.wrapping_add(i))?;
        acc.start_trial();
        for _ in 0..MAX_TRIAL_STEPS {
            let k = policy.act(env)?;
            let info = env.step(k)?;
            acc.record(&info);
            if info.done {
                break;
            }
        }
    }
    Ok(acc.metrics())
}

/// Mean squared difference between predicted and recorded curvatures.
pub fn open_loop_mse(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let sum: f64 = predictions.iter().zip(labels).map(|(p, l)| (p - l) * (p - l)).sum();
    Ok(sum / labels.len() as f64)
}
