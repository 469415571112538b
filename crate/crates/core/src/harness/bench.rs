use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Controller, SampleMode};
use crate::rng::{derive_seed, rng_from, Rng};
use crate::sim::{reset, step_batch, PreparedScenario, SimConfig, WorldState};
use crate::tokenizer::TokenVocab;

/// Run shape echoed with every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub controller: String,
    pub n_worlds: usize,
    pub episodes: usize,
    pub warmup: usize,
    pub seeds: Vec<u64>,
    pub policy_hz: f64,
    pub policy_steps: usize,
    pub mean_agents: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub config: BenchConfig,
    /// Scenarios per second, one entry per seed.
    pub per_seed: Vec<f64>,
    pub scenarios_per_sec: f64,
    pub scenarios_per_sec_std: f64,
    pub agent_steps_per_sec: f64,
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 { x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Runs `n_worlds` full episodes in lockstep; returns the number of agent decisions.
fn run_round(
    controller: Controller<'_>,
    batch: &[Arc<PreparedScenario>],
    vocab: &TokenVocab,
    sim: &SimConfig,
    rngs: &mut [Rng],
    pool: Option<&rayon::ThreadPool>,
) -> Result<usize> {
    let mut worlds: Vec<WorldState> = batch.iter().map(|p| reset(p, sim)).collect::<Result<_>>()?;
    let refs: Vec<&PreparedScenario> = batch.iter().map(|p| p.as_ref()).collect();
    let mut decisions = 0;
    for _ in 0..sim.policy_steps() {
        let actions = controller.act_worlds(&worlds, &refs, rngs, SampleMode::Sample)?;
        decisions += actions.iter().flatten().filter(|a| a.is_some()).count();
        step_batch(&mut worlds, &actions, vocab, batch, sim, pool)?;
    }
    Ok(decisions)
}

struct BenchPlan<'a> {
    scenarios: &'a [Arc<PreparedScenario>],
    vocab: &'a TokenVocab,
    sim: &'a SimConfig,
    n_worlds: usize,
    episodes: usize,
    warmup: usize,
    pool: Option<&'a rayon::ThreadPool>,
}

impl BenchPlan<'_> {
    fn check(&self, controller: Controller<'_>, seeds: &[u64]) -> Result<()> {
        if seeds.len() < 3 {
            return Err(Error::InvalidArgument("throughput needs at least 3 seeds".into()));
        }
        if self.scenarios.is_empty() || self.n_worlds == 0 || self.episodes == 0 {
            return Err(Error::InvalidArgument("throughput needs scenarios, worlds and episodes".into()));
        }
        if controller.num_tokens() != self.vocab.len() {
            return Err(Error::Config("controller and vocabulary disagree".into()));
        }
        Ok(())
    }

    fn batch_for(&self, round: usize) -> Vec<Arc<PreparedScenario>> {
        (0..self.n_worlds).map(|w| self.scenarios[(round * self.n_worlds + w) % self.scenarios.len()].clone()).collect()
    }

    /// Scenarios/sec and agent-steps/sec for one seed.
    fn rates(&self, controller: Controller<'_>, seed: u64) -> Result<(f64, f64)> {
        let mut rngs: Vec<Rng> = (0..self.n_worlds).map(|w| rng_from(derive_seed(seed, &[w as u64]))).collect();
        for r in 0..self.warmup {
            run_round(controller, &self.batch_for(r), self.vocab, self.sim, &mut rngs, self.pool)?;
        }
        let start = Instant::now();
        let mut decisions = 0;
        for r in 0..self.episodes {
            decisions +=
                run_round(controller, &self.batch_for(self.warmup + r), self.vocab, self.sim, &mut rngs, self.pool)?;
        }
        let secs = Instant::now()
            .checked_duration_since(start)
            .ok_or_else(|| Error::Timer("clock went backwards".into()))?
            .as_secs_f64();
        if !(secs > 0.0) || !secs.is_finite() {
            return Err(Error::Timer(format!("non-positive elapsed time {secs}")));
        }
        Ok(((self.episodes * self.n_worlds) as f64 / secs, (decisions * self.sim.policy_every) as f64 / secs))
    }

    fn result(&self, name: &str, seeds: &[u64], rates: Vec<(f64, f64)>) -> BenchResult {
        let (per_seed, agent_rates): (Vec<f64>, Vec<f64>) = rates.into_iter().unzip();
        let (mean, std) = mean_std(&per_seed);
        let mean_agents = self.scenarios.iter().map(|p| p.scenario.controlled_ids().len() as f64).sum::<f64>()
            / self.scenarios.len() as f64;
        BenchResult {
            config: BenchConfig {
                controller: name.to_string(),
                n_worlds: self.n_worlds,
                episodes: self.episodes,
                warmup: self.warmup,
                seeds: seeds.to_vec(),
                policy_hz: 1.0 / (self.sim.policy_every as f64 * crate::scenario::DT),
                policy_steps: self.sim.policy_steps(),
                mean_agents,
            },
            per_seed,
            scenarios_per_sec: mean,
            scenarios_per_sec_std: std,
            agent_steps_per_sec: mean_std(&agent_rates).0,
        }
    }
}

/// Wall-clock throughput of closed-loop episodes driven by `controller`.
/// Each seed runs `warmup` untimed rounds, then `episodes` timed rounds of
/// `n_worlds` worlds each.
#[allow(clippy::too_many_arguments)]
pub fn throughput_bench(
    name: &str,
    controller: Controller<'_>,
    scenarios: &[Arc<PreparedScenario>],
    vocab: &TokenVocab,
    sim: &SimConfig,
    n_worlds: usize,
    episodes: usize,
    warmup: usize,
    seeds: &[u64],
    pool: Option<&rayon::ThreadPool>,
) -> Result<BenchResult> {
    let plan = BenchPlan { scenarios, vocab, sim, n_worlds, episodes, warmup, pool };
    plan.check(controller, seeds)?;
    let rates = seeds.iter().map(|&s| plan.rates(controller, s)).collect::<Result<Vec<_>>>()?;
    Ok(plan.result(name, seeds, rates))
}

/// Benchmarks two controllers with their seeds interleaved, so slow drift in
/// machine speed lands on both rather than on whichever ran second.
#[allow(clippy::too_many_arguments)]
pub fn paired_bench(
    policy: Controller<'_>,
    reference: Controller<'_>,
    scenarios: &[Arc<PreparedScenario>],
    vocab: &TokenVocab,
    sim: &SimConfig,
    n_worlds: usize,
    episodes: usize,
    warmup: usize,
    seeds: &[u64],
    pool: Option<&rayon::ThreadPool>,
) -> Result<BenchReport> {
    let plan = BenchPlan { scenarios, vocab, sim, n_worlds, episodes, warmup, pool };
    plan.check(policy, seeds)?;
    plan.check(reference, seeds)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for &seed in seeds {
        a.push(plan.rates(policy, seed)?);
        b.push(plan.rates(reference, seed)?);
    }
    Ok(bench_report(plan.result("policy", seeds, a), plan.result("reference", seeds, b)))
}

impl fmt::Display for BenchResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "{}: {:.3} ± {:.3} scenarios/sec, {:.1} agent-steps/sec",
            c.controller, self.scenarios_per_sec, self.scenarios_per_sec_std, self.agent_steps_per_sec
        )?;
        write!(
            f,
            "  config: worlds={} episodes={} warmup={} seeds={:?} policy_hz={} policy_steps={} mean_agents={:.2}",
            c.n_worlds, c.episodes, c.warmup, c.seeds, c.policy_hz, c.policy_steps, c.mean_agents
        )
    }
}

/// Policy and reference throughput side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub policy: BenchResult,
    pub reference: BenchResult,
    /// Policy scenarios/sec over reference scenarios/sec.
    pub ratio: f64,
}

pub fn bench_report(policy: BenchResult, reference: BenchResult) -> BenchReport {
    let ratio = policy.scenarios_per_sec / reference.scenarios_per_sec;
    BenchReport { policy, reference, ratio }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.policy)?;
        writeln!(f, "{}", self.reference)?;
        write!(f, "policy/reference ratio: {:.3}", self.ratio)
    }
}
