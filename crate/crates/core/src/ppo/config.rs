use super::env::ActionDesign;
use serde::{Deserialize, Serialize};

/// Row permutation applied to sampled states during updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Augment {
    Off,
    /// Fresh uniformly random permutation per sample per epoch.
    MovementShuffle,
    /// Goes through the shuffle path with the identity permutation.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub clip_eps: f64,
    pub lr: f32,
    pub epochs: usize,
    pub minibatch: usize,
    /// Decisions collected per environment per iteration.
    pub rollout_len: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f32,
    /// Total agent decisions across all environments, rounded up to a whole
    /// step of every environment.
    pub total_steps: u64,
    pub augment: Augment,
    /// `None` keeps the one-step advantage.
    pub gae_lambda: Option<f64>,
    pub design: ActionDesign,
    pub seed: u64,
    /// Completed episodes averaged in the curve's reward column.
    pub curve_window: usize,
    /// Scenarios are repeated round-robin until at least this many
    /// environments step in parallel.
    pub min_envs: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            clip_eps: 0.2,
            lr: 1e-3,
            epochs: 4,
            minibatch: 64,
            rollout_len: 128,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            total_steps: 300_000,
            augment: Augment::MovementShuffle,
            gae_lambda: None,
            design: ActionDesign::SetDuration,
            seed: 0,
            curve_window: 16,
            min_envs: 8,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(format!("clip epsilon must be in (0, 1), got {}", self.clip_eps));
        }
        if self.epochs == 0 || self.minibatch == 0 || self.rollout_len == 0 {
            return Err("epochs, minibatch and rollout_len must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(format!("learning rate must be positive, got {}", self.lr));
        }
        if let Some(l) = self.gae_lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(format!("gae_lambda must be in [0, 1], got {l}"));
            }
        }
        if self.curve_window == 0 || self.min_envs == 0 {
            return Err("curve_window and min_envs must be positive".into());
        }
        Ok(())
    }
}
