//! Self-play PPO with anchoring to a frozen reference model.

mod config;
mod ppo;
mod rollout;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Checkpoint};
use crate::policy::{FusionArch, PolicyNet, ReferenceNet};
use crate::rng::{derive_seed, rng_from};
use crate::sim::{PreparedScenario, SimConfig};
use crate::tokenizer::TokenVocab;

pub use config::{PpoConfig, RewardConfig};
pub use ppo::{minibatch_loss, ppo_update, LossParts, UpdateStats};
pub use rollout::{
    assemble_rewards, collect_rollouts, compute_gae, gae, world_scenario, EpisodeStats, RolloutBuffer, Transition,
};

/// Everything that shapes a training run apart from the seed and the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub sim: SimConfig,
    pub reward: RewardConfig,
    pub ppo: PpoConfig,
    /// Write a resumable checkpoint every this many updates (0 = only at the end).
    pub checkpoint_every: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.reward.validate()?;
        self.ppo.validate()
    }
}

/// One row per update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub update: u64,
    pub env_steps: u64,
    pub task_reward: f64,
    pub reward: f64,
    /// Mean forward KL from the reference to the collecting policy.
    pub kl: f64,
    pub entropy: f64,
    pub value_loss: f64,
    pub policy_loss: f64,
    pub clip_frac: f64,
    pub collision_rate: f64,
    pub offroad_rate: f64,
    pub goal_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub rows: Vec<TrainRow>,
}

pub const TRAIN_REPORT_HEADER: &str = "update,env_steps,task_reward,reward,kl,entropy,value_loss,policy_loss,clip_frac,collision_rate,offroad_rate,goal_rate";

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAIN_REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.update,
                r.env_steps,
                r.task_reward,
                r.reward,
                r.kl,
                r.entropy,
                r.value_loss,
                r.policy_loss,
                r.clip_frac,
                r.collision_rate,
                r.offroad_rate,
                r.goal_rate
            )
            .expect("writing to a String cannot fail");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Trailing moving average of the KL column.
    pub fn smoothed_kl(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        (0..self.rows.len())
            .map(|i| {
                let lo = (i + 1).saturating_sub(w);
                let s = &self.rows[lo..=i];
                s.iter().map(|r| r.kl).sum::<f64>() / s.len() as f64
            })
            .collect()
    }
}

/// Training state: policy, optimizer, counters and history.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub config: TrainConfig,
    pub seed: u64,
    pub policy: PolicyNet,
    pub opt: Adam,
    pub update: u64,
    pub env_steps: u64,
    pub report: TrainReport,
}

impl Trainer {
    pub fn new(config: TrainConfig, num_tokens: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut policy = PolicyNet::new(FusionArch::policy(num_tokens), derive_seed(seed, &[0x9011c7]))?;
        policy.net.zero_actor_head();
        let opt = Adam::new(&policy.net.params, config.ppo.lr, Some(config.ppo.max_grad_norm));
        Ok(Self { config, seed, policy, opt, update: 0, env_steps: 0, report: TrainReport::default() })
    }

    pub fn finished(&self) -> bool {
        self.env_steps >= self.config.ppo.total_env_steps
    }

    /// Collect, score, estimate advantages and update once.
    pub fn run_update(
        &mut self,
        reference: &ReferenceNet,
        vocab: &TokenVocab,
        scenarios: &[Arc<PreparedScenario>],
        pool: Option<&rayon::ThreadPool>,
    ) -> Result<TrainRow> {
        let c = self.config;
        let mut buf = collect_rollouts(
            &self.policy,
            reference,
            vocab,
            scenarios,
            &c.sim,
            &c.reward,
            &c.ppo,
            self.update,
            self.seed,
            pool,
        )?;
        assemble_rewards(&mut buf, &c.reward);
        compute_gae(&mut buf, c.ppo.gamma, c.ppo.gae_lambda, c.ppo.norm_adv);
        let mut rng = rng_from(derive_seed(self.seed, &[self.update, 0x990]));
        let st = ppo_update(&mut self.policy, &mut self.opt, &buf, &c.ppo, &c.reward, &mut rng)?;
        self.env_steps += buf.len() as u64;
        let n = buf.len().max(1) as f64;
        let eps = buf.episodes.len().max(1) as f64;
        let rate = |f: fn(&EpisodeStats) -> bool| buf.episodes.iter().filter(|e| f(e)).count() as f64 / eps;
        let row = TrainRow {
            update: self.update,
            env_steps: self.env_steps,
            task_reward: buf.transitions.iter().map(|t| t.task_reward(&c.reward)).sum::<f64>() / n,
            reward: buf.transitions.iter().map(|t| t.reward).sum::<f64>() / n,
            kl: buf.collect_kl,
            entropy: st.entropy,
            value_loss: st.value_loss,
            policy_loss: st.policy_loss,
            clip_frac: st.clip_frac,
            collision_rate: rate(|e| e.collided),
            offroad_rate: rate(|e| e.offroad),
            goal_rate: rate(|e| e.goal),
        };
        self.update += 1;
        self.report.rows.push(row);
        Ok(row)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = self.policy.to_checkpoint();
        ck.optimizer = Some(self.opt.clone());
        ck.counters.insert("update".into(), self.update);
        ck.counters.insert("env_steps".into(), self.env_steps);
        ck.counters.insert("seed".into(), self.seed);
        ck.extra = serde_json::json!({ "config": self.config, "report": self.report });
        Ok(ck)
    }

    /// Restores a trainer written by [`Trainer::to_checkpoint`]. The stored
    /// config is kept; the caller may only extend the step budget.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let policy = PolicyNet::from_checkpoint(ck)?;
        let opt = ck
            .optimizer
            .clone()
            .ok_or_else(|| Error::Config("checkpoint has no optimizer state; cannot resume".into()))?;
        let counter = |k: &str| {
            ck.counters.get(k).copied().ok_or_else(|| Error::Config(format!("checkpoint is missing counter {k}")))
        };
        let config: TrainConfig = serde_json::from_value(ck.extra["config"].clone())
            .map_err(|e| Error::Config(format!("checkpoint config: {e}")))?;
        let report: TrainReport = serde_json::from_value(ck.extra["report"].clone())
            .map_err(|e| Error::Config(format!("checkpoint report: {e}")))?;
        Ok(Self {
            config,
            seed: counter("seed")?,
            policy,
            opt,
            update: counter("update")?,
            env_steps: counter("env_steps")?,
            report,
        })
    }
}

/// Runs updates until the step budget is spent, writing `policy.json`,
/// `train_report.csv` and periodic `checkpoint.json` into `out`.
pub fn train(
    trainer: &mut Trainer,
    reference: &ReferenceNet,
    vocab: &TokenVocab,
    scenarios: &[Arc<PreparedScenario>],
    out: &Path,
    pool: Option<&rayon::ThreadPool>,
) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let every = trainer.config.checkpoint_every;
    while !trainer.finished() {
        trainer.run_update(reference, vocab, scenarios, pool)?;
        if every > 0 && trainer.update.is_multiple_of(every) {
            trainer.to_checkpoint()?.save(&out.join("checkpoint.json"))?;
            trainer.report.write_csv(&out.join("train_report.csv"))?;
        }
    }
    trainer.to_checkpoint()?.save(&out.join("checkpoint.json"))?;
    trainer.policy.to_checkpoint().save(&out.join("policy.json"))?;
    trainer.report.write_csv(&out.join("train_report.csv"))
}

#[cfg(test)]
mod tests;
