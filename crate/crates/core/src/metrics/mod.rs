//! Distributional realism scores, displacement error and infraction rates
//! computed from sets of sampled closed-loop rollouts.

mod features;
mod realism;

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::policy::{Controller, SampleMode};
use crate::rng::{derive_seed, rng_from, Rng};
use crate::sim::{reset, reset_with_modes, step, ControlMode, PreparedScenario, SimConfig, SubstepRecord, WorldState};
use crate::tokenizer::TokenVocab;

pub use features::{extract_feature, FeatureCategory, FeatureKind, FeatureSpec};
pub use realism::{
    aggregate_reports, realism_score, AgentFeatureScore, FeatureScore, RealismReport, RealismSummary,
    REALISM_CSV_HEADER,
};

/// S sampled rollouts of one scenario. Each rollout starts with the shared
/// initial record followed by one record per simulated step.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSet {
    pub scenario_id: String,
    pub seeds: Vec<u64>,
    pub rollouts: Vec<Vec<SubstepRecord>>,
}

impl RolloutSet {
    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.rollouts.first().map_or(0, |r| r.len().saturating_sub(1))
    }

    fn check(&self) -> Result<()> {
        if self.rollouts.len() < 2 {
            return Err(Error::InvalidArgument("a rollout set needs at least two rollouts".into()));
        }
        let h = self.rollouts[0].len();
        if self.rollouts.iter().any(|r| r.len() != h) {
            return Err(Error::Shape("rollouts have different horizons".into()));
        }
        Ok(())
    }
}

pub(crate) fn initial_record(w: &WorldState) -> SubstepRecord {
    let n = w.num_agents();
    SubstepRecord {
        step: w.step,
        agents: w.agents.clone(),
        collided: vec![false; n],
        offroad: vec![false; n],
        at_goal: vec![false; n],
    }
}

/// Runs S rollouts in lockstep, one world per seed, sharing each forward pass.
pub fn simulate_rollout_set(
    controller: Controller<'_>,
    prepared: &PreparedScenario,
    vocab: &TokenVocab,
    sim: &SimConfig,
    seeds: &[u64],
    mode: SampleMode,
) -> Result<RolloutSet> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument("at least two rollout seeds are required".into()));
    }
    if seeds.iter().collect::<BTreeSet<_>>().len() != seeds.len() {
        return Err(Error::InvalidArgument("rollout seeds must be distinct".into()));
    }
    if controller.num_tokens() != vocab.len() {
        return Err(Error::Config(format!(
            "controller has {} tokens, vocabulary {}",
            controller.num_tokens(),
            vocab.len()
        )));
    }
    let mut worlds: Vec<WorldState> = seeds.iter().map(|_| reset(prepared, sim)).collect::<Result<_>>()?;
    let mut rngs: Vec<Rng> = seeds.iter().map(|&s| rng_from(s)).collect();
    let mut rollouts: Vec<Vec<SubstepRecord>> = worlds.iter().map(|w| vec![initial_record(w)]).collect();
    let refs: Vec<&PreparedScenario> = vec![prepared; seeds.len()];
    for _ in 0..sim.policy_steps() {
        let actions = controller.act_worlds(&worlds, &refs, &mut rngs, mode)?;
        for (wi, (w, a)) in worlds.iter_mut().zip(&actions).enumerate() {
            let ev = step(w, a, vocab, prepared, sim)?;
            rollouts[wi].extend(ev.substeps);
        }
    }
    Ok(RolloutSet { scenario_id: prepared.scenario.id.clone(), seeds: seeds.to_vec(), rollouts })
}

/// The logged future as a rollout, with events computed by the simulator.
pub fn log_rollout(prepared: &PreparedScenario, vocab: &TokenVocab, sim: &SimConfig) -> Result<Vec<SubstepRecord>> {
    let n = prepared.scenario.num_agents();
    let mut w = reset_with_modes(prepared, sim, vec![ControlMode::Log; n])?;
    let mut out = vec![initial_record(&w)];
    for _ in 0..sim.policy_steps() {
        out.extend(step(&mut w, &vec![None; n], vocab, prepared, sim)?.substeps);
    }
    Ok(out)
}

/// Realism reports for a controller over many scenarios, `n_rollouts` each.
/// Rollout seeds derive from `seed` and the scenario index, so the result
/// does not depend on the pool.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_controller(
    controller: Controller<'_>,
    scenarios: &[Arc<PreparedScenario>],
    vocab: &TokenVocab,
    sim: &SimConfig,
    n_rollouts: usize,
    mode: SampleMode,
    specs: &[FeatureSpec],
    seed: u64,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<RealismReport>> {
    let run = || -> Result<Vec<RealismReport>> {
        scenarios
            .par_iter()
            .enumerate()
            .map(|(k, p)| {
                let seeds: Vec<u64> = (0..n_rollouts as u64).map(|r| derive_seed(seed, &[k as u64, r])).collect();
                let set = simulate_rollout_set(controller, p, vocab, sim, &seeds, mode)?;
                let gt = log_rollout(p, vocab, sim)?;
                realism_score(&set, p, &gt, specs)
            })
            .collect()
    };
    match pool {
        Some(pool) => pool.install(run),
        None => run(),
    }
}

/// Mean over target agents of the best (over rollouts) average displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct AdeResult {
    pub min_ade: f64,
    pub per_agent: Vec<(usize, f64)>,
    /// Target agents with no step valid in both log and rollout.
    pub excluded: Vec<usize>,
}

pub fn min_ade(set: &RolloutSet, gt: &PreparedScenario) -> Result<AdeResult> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty rollout set".into()));
    }
    let s = &gt.scenario;
    let mut per_agent = Vec::new();
    let mut excluded = Vec::new();
    for a in s.controlled_ids() {
        let mut best = f64::INFINITY;
        for r in &set.rollouts {
            let mut sum = 0.0;
            let mut n = 0usize;
            for rec in &r[1..] {
                let st = &rec.agents[a];
                if st.valid && s.tracks[a].is_valid(rec.step) {
                    sum += st.pose.position().dist(&s.tracks[a].states[rec.step].pose.position());
                    n += 1;
                }
            }
            if n > 0 {
                best = best.min(sum / n as f64);
            }
        }
        if best.is_finite() {
            per_agent.push((a, best));
        } else {
            excluded.push(a);
        }
    }
    if per_agent.is_empty() {
        return Err(Error::InvalidArgument(format!("scenario {} has no scorable target agent", s.id)));
    }
    let min_ade = per_agent.iter().map(|p| p.1).sum::<f64>() / per_agent.len() as f64;
    Ok(AdeResult { min_ade, per_agent, excluded })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InfractionRates {
    pub collision: f64,
    pub offroad: f64,
    pub goal: f64,
}

/// Fractions of (target agent, rollout) pairs with at least one event.
pub fn infraction_rates(set: &RolloutSet, targets: &[usize]) -> InfractionRates {
    let pairs = (targets.len() * set.len()) as f64;
    if pairs == 0.0 {
        return InfractionRates::default();
    }
    let mut out = InfractionRates::default();
    for r in &set.rollouts {
        for &a in targets {
            let any = |f: fn(&SubstepRecord, usize) -> bool| r[1..].iter().any(|rec| f(rec, a));
            out.collision += any(|rec, a| rec.collided[a]) as u8 as f64;
            out.offroad += any(|rec, a| rec.offroad[a]) as u8 as f64;
            out.goal += any(|rec, a| rec.at_goal[a]) as u8 as f64;
        }
    }
    out.collision /= pairs;
    out.offroad /= pairs;
    out.goal /= pairs;
    out
}
