use std::sync::Arc;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::nn::{kl_from_log_probs, LOG_PROB_FLOOR};
use crate::policy::{PolicyNet, ReferenceNet};
use crate::rng::{derive_seed, rng_from, Rng};
use crate::sim::{reset, step_batch, Action, FeatureSet, PreparedScenario, SimConfig, WorldState};
use crate::tokenizer::{TokenId, TokenVocab};

use super::config::{PpoConfig, RewardConfig};

/// One agent's experience at one policy step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub world: usize,
    pub agent: usize,
    pub step: usize,
    pub obs: FeatureSet,
    pub goal_dropped: bool,
    pub action: TokenId,
    pub logp: f64,
    pub value: f64,
    pub collided: bool,
    pub offroad: bool,
    pub goal_first: bool,
    /// Reference log-probability of the taken token.
    pub humanlike_logp: f64,
    /// Full reference log-probability row.
    pub ref_log_probs: Vec<f64>,
    pub done: bool,
    pub reward: f64,
    pub advantage: f64,
    pub ret: f64,
}

impl Transition {
    pub fn task_reward(&self, rc: &RewardConfig) -> f64 {
        rc.w_goal * self.goal_first as u8 as f64
            - rc.w_collided * self.collided as u8 as f64
            - rc.w_offroad * self.offroad as u8 as f64
    }
}

/// Per-episode outcome of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeStats {
    pub collided: bool,
    pub offroad: bool,
    pub goal: bool,
}

/// Experience ordered world, then agent, then step; each (world, agent)
/// trajectory is contiguous.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    pub episodes: Vec<EpisodeStats>,
    /// Mean forward KL from the reference to the collecting policy.
    pub collect_kl: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Scenario index of world `w` at update `update` (round robin).
pub fn world_scenario(update: u64, w: usize, n_worlds: usize, n_scenarios: usize) -> usize {
    ((update as usize) * n_worlds + w) % n_scenarios
}

#[allow(clippy::too_many_arguments)]
pub fn collect_rollouts(
    policy: &PolicyNet,
    reference: &ReferenceNet,
    vocab: &TokenVocab,
    scenarios: &[Arc<PreparedScenario>],
    sim: &SimConfig,
    rc: &RewardConfig,
    ppo: &PpoConfig,
    update: u64,
    seed: u64,
    pool: Option<&rayon::ThreadPool>,
) -> Result<RolloutBuffer> {
    if policy.num_tokens() != vocab.len() || reference.num_tokens() != vocab.len() {
        return Err(Error::Config(format!(
            "vocabulary has {} tokens but policy has {} and reference {}",
            vocab.len(),
            policy.num_tokens(),
            reference.num_tokens()
        )));
    }
    if scenarios.is_empty() {
        return Err(Error::MissingInput("no training scenarios".into()));
    }
    let nw = ppo.n_parallel_worlds;
    let prepared: Vec<Arc<PreparedScenario>> =
        (0..nw).map(|w| scenarios[world_scenario(update, w, nw, scenarios.len())].clone()).collect();
    let mut rngs: Vec<Rng> = (0..nw).map(|w| rng_from(derive_seed(seed, &[update, w as u64]))).collect();
    let mut worlds: Vec<WorldState> = prepared.iter().map(|p| reset(p, sim)).collect::<Result<_>>()?;
    let dropped: Vec<Vec<bool>> = worlds
        .iter()
        .zip(&mut rngs)
        .map(|(w, rng)| (0..w.num_agents()).map(|_| rng.random::<f64>() < rc.goal_dropout_p).collect())
        .collect();

    let mut pending: Vec<Transition> = Vec::new();
    let mut policy_rows: Vec<Vec<f64>> = Vec::new();
    let mut contexts: Vec<FeatureSet> = Vec::new();
    let mut stats: Vec<Vec<EpisodeStats>> =
        worlds.iter().map(|w| vec![EpisodeStats::default(); w.num_agents()]).collect();

    for k in 0..sim.policy_steps() {
        let mut who: Vec<(usize, usize)> = Vec::new();
        let mut obs: Vec<FeatureSet> = Vec::new();
        for (wi, w) in worlds.iter().enumerate() {
            for a in w.acting_agents() {
                obs.push(PolicyNet::observe(w, a, &prepared[wi], dropped[wi][a])?);
                contexts.push(reference.context(w, a, &prepared[wi])?);
                who.push((wi, a));
            }
        }
        if who.is_empty() {
            break;
        }
        let (dists, values) = policy.act(&obs.iter().collect::<Vec<_>>())?;
        let mut actions: Vec<Vec<Option<Action>>> = worlds.iter().map(|w| vec![None; w.num_agents()]).collect();
        let first = pending.len();
        for (((&(wi, a), d), v), o) in who.iter().zip(&dists).zip(&values).zip(obs) {
            let id = d.sample(&mut rngs[wi]);
            actions[wi][a] = Some(Action::Token(TokenId(id)));
            policy_rows.push(d.log_probs.clone());
            pending.push(Transition {
                world: wi,
                agent: a,
                step: k,
                obs: o,
                goal_dropped: dropped[wi][a],
                action: TokenId(id),
                logp: d.log_probs[id],
                value: *v,
                collided: false,
                offroad: false,
                goal_first: false,
                humanlike_logp: 0.0,
                ref_log_probs: Vec::new(),
                done: false,
                reward: 0.0,
                advantage: 0.0,
                ret: 0.0,
            });
        }
        let events = step_batch(&mut worlds, &actions, vocab, &prepared, sim, pool)?;
        for tr in &mut pending[first..] {
            let e = events[tr.world].agents[tr.agent];
            tr.collided = e.collided;
            tr.offroad = e.offroad;
            tr.goal_first = e.goal_first;
            tr.done = worlds[tr.world].done[tr.agent];
            let st = &mut stats[tr.world][tr.agent];
            st.collided |= e.collided;
            st.offroad |= e.offroad;
            st.goal |= e.goal_first;
        }
    }

    // One batched reference pass over every stored context.
    let ctx_refs: Vec<&FeatureSet> = contexts.iter().collect();
    let ref_rows = reference.log_probs_chunked(&ctx_refs, 1024)?;
    let mut kl_sum = 0.0;
    for ((tr, row), q) in pending.iter_mut().zip(ref_rows).zip(&policy_rows) {
        kl_sum += kl_from_log_probs(&row, q);
        tr.humanlike_logp = row[tr.action.index()];
        tr.ref_log_probs = row;
    }
    let collect_kl = if pending.is_empty() { 0.0 } else { kl_sum / pending.len() as f64 };
    pending.sort_by_key(|t| (t.world, t.agent, t.step));
    let episodes = stats.into_iter().flatten().collect();
    Ok(RolloutBuffer { transitions: pending, episodes, collect_kl })
}

/// Per-transition reward: task terms plus the weighted, floored reference log-likelihood.
pub fn assemble_rewards(buf: &mut RolloutBuffer, rc: &RewardConfig) {
    for t in &mut buf.transitions {
        let mut r = t.task_reward(rc);
        if rc.w_humanlike != 0.0 {
            r += rc.w_humanlike * t.humanlike_logp.max(LOG_PROB_FLOOR);
        }
        t.reward = r;
    }
}

/// Backward GAE recursion over each contiguous trajectory. The last
/// transition of a trajectory bootstraps from `bootstrap` unless it is done.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Fills advantages and returns, optionally normalizing advantages over the batch.
pub fn compute_gae(buf: &mut RolloutBuffer, gamma: f64, lambda: f64, normalize: bool) {
    let tr = &mut buf.transitions;
    let mut start = 0;
    while start < tr.len() {
        let mut end = start + 1;
        while end < tr.len() && tr[end].world == tr[start].world && tr[end].agent == tr[start].agent {
            end += 1;
        }
        let seg = &tr[start..end];
        let r: Vec<f64> = seg.iter().map(|t| t.reward).collect();
        let v: Vec<f64> = seg.iter().map(|t| t.value).collect();
        let d: Vec<bool> = seg.iter().map(|t| t.done).collect();
        let (adv, ret) = gae(&r, &v, &d, 0.0, gamma, lambda);
        for (t, (a, rt)) in tr[start..end].iter_mut().zip(adv.into_iter().zip(ret)) {
            t.advantage = a;
            t.ret = rt;
        }
        start = end;
    }
    if normalize && tr.len() > 1 {
        let n = tr.len() as f64;
        let mean = tr.iter().map(|t| t.advantage).sum::<f64>() / n;
        let var = tr.iter().map(|t| (t.advantage - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt() + 1e-8;
        tr.iter_mut().for_each(|t| t.advantage = (t.advantage - mean) / sd);
    }
}
