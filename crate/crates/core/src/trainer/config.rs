use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reward weights and regularization strengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub w_goal: f64,
    pub w_collided: f64,
    pub w_offroad: f64,
    /// Weight of the reference log-likelihood of the taken token.
    pub w_humanlike: f64,
    /// Weight of the forward KL from the reference to the policy.
    pub kl_beta: f64,
    pub goal_dropout_p: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { w_goal: 0.0, w_collided: 0.75, w_offroad: 0.75, w_humanlike: 0.0, kl_beta: 1.0, goal_dropout_p: 0.5 }
    }
}

impl RewardConfig {
    /// Plain self-play: goal reward, infraction penalties, no anchoring.
    pub fn plain() -> Self {
        Self { w_goal: 1.0, kl_beta: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_goal, self.w_collided, self.w_offroad, self.w_humanlike, self.kl_beta];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("reward weights must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.goal_dropout_p) {
            return Err(Error::Config("goal_dropout_p must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_coef: f64,
    pub update_epochs: usize,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub lr: f64,
    pub norm_adv: bool,
    pub minibatch_size: usize,
    /// Worlds simulated per update; each runs one full episode.
    pub n_parallel_worlds: usize,
    /// Training stops once this many agent transitions have been collected.
    pub total_env_steps: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_coef: 0.2,
            update_epochs: 4,
            ent_coef: 1e-4,
            vf_coef: 0.3,
            max_grad_norm: 0.5,
            lr: 3e-4,
            norm_adv: true,
            minibatch_size: 1024,
            n_parallel_worlds: 16,
            total_env_steps: 2_000_000,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Config("gae_lambda must lie in [0, 1]".into()));
        }
        if !(self.clip_coef > 0.0) {
            return Err(Error::Config("clip_coef must be positive".into()));
        }
        if self.minibatch_size == 0 || self.n_parallel_worlds == 0 {
            return Err(Error::Config("minibatch_size and n_parallel_worlds must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("lr and max_grad_norm must be positive".into()));
        }
        Ok(())
    }
}
