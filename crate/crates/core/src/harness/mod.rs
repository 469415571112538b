//! Closed-loop planner evaluation under different background-traffic
//! strategies, correlation of scores across strategies, and throughput.

mod bench;
mod stats;

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::initial_record;
use crate::planners::{frenet_plan, pdm_score, FrenetParams, IdmParams, IdmPlanner, PdmBreakdown, PdmWeights, Route};
use crate::policy::{Controller, PolicyNet, ReferenceNet, SampleMode};
use crate::rng::{derive_seed, rng_from};
use crate::sim::{reset_with_modes, step, Action, ControlMode, PreparedScenario, SimConfig, SubstepRecord};
use crate::tokenizer::TokenVocab;

pub use bench::{bench_report, paired_bench, throughput_bench, BenchConfig, BenchReport, BenchResult};
pub use stats::{correlation_stats, pearson, spearman, CorrelationReport, MetricCorrelation};

/// Who drives the non-ego agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStrategy {
    LogReplay,
    ReferenceRollout,
    PolicyRollout,
}

impl EvalStrategy {
    pub const ALL: [EvalStrategy; 3] = [Self::LogReplay, Self::ReferenceRollout, Self::PolicyRollout];

    pub fn name(self) -> &'static str {
        match self {
            Self::LogReplay => "log_replay",
            Self::ReferenceRollout => "reference_rollout",
            Self::PolicyRollout => "policy_rollout",
        }
    }
}

impl std::str::FromStr for EvalStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy '{s}'")))
    }
}

/// The ego controller under test.
#[derive(Debug, Clone)]
pub enum PlannerKind {
    Idm(IdmParams),
    Frenet(FrenetParams),
    Policy(Arc<PolicyNet>),
    /// Brakes as hard as allowed and holds the lane; a degenerate baseline.
    MaxBrake,
}

#[derive(Debug, Clone)]
pub struct EvalPlanner {
    pub name: String,
    pub kind: PlannerKind,
}

/// Shared inputs of every cell.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub vocab: &'a TokenVocab,
    pub reference: Option<&'a ReferenceNet>,
    pub background_policy: Option<&'a PolicyNet>,
    pub sim: SimConfig,
    pub weights: PdmWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellOutcome {
    Scored(PdmBreakdown),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub planner: usize,
    pub strategy: EvalStrategy,
    pub scenario: usize,
    pub outcome: CellOutcome,
}

/// Planner × (strategy, scenario) scores. Every cell is present; failures are explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub planners: Vec<String>,
    pub strategies: Vec<EvalStrategy>,
    pub scenarios: Vec<String>,
    pub cells: Vec<Cell>,
}

pub const SCORE_MATRIX_HEADER: &str =
    "planner,strategy,scenario,status,score,progress,ttc,comfort,no_collision,drivable";

impl ScoreMatrix {
    pub fn get(&self, planner: usize, strategy: EvalStrategy, scenario: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.planner == planner && c.strategy == strategy && c.scenario == scenario)
    }

    /// Every (planner, strategy, scenario) triple has exactly one cell.
    pub fn is_complete(&self) -> bool {
        self.cells.len() == self.planners.len() * self.strategies.len() * self.scenarios.len()
            && (0..self.planners.len()).all(|p| {
                self.strategies.iter().all(|&s| (0..self.scenarios.len()).all(|k| self.get(p, s, k).is_some()))
            })
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| matches!(c.outcome, CellOutcome::Failed(_))).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(SCORE_MATRIX_HEADER);
        s.push('\n');
        for c in &self.cells {
            let head = format!("{},{},{}", self.planners[c.planner], c.strategy.name(), self.scenarios[c.scenario]);
            match &c.outcome {
                CellOutcome::Scored(b) => writeln!(
                    s,
                    "{head},ok,{},{},{},{},{},{}",
                    b.score, b.progress, b.ttc, b.comfort, b.no_collision as u8, b.drivable as u8
                ),
                CellOutcome::Failed(msg) => writeln!(s, "{head},failed: {},,,,,,", msg.replace([',', '\n'], ";")),
            }
            .expect("string write");
        }
        s
    }
}

/// Index of the agent driven by the planner under test.
pub fn ego_index(prepared: &PreparedScenario) -> Result<usize> {
    prepared
        .scenario
        .controlled_ids()
        .first()
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("scenario {} has no controlled agent", prepared.scenario.id)))
}

/// One closed-loop episode with the planner on the ego. Returns every record.
pub fn run_episode(
    planner: &EvalPlanner,
    strategy: EvalStrategy,
    prepared: &PreparedScenario,
    ctx: &EvalContext<'_>,
    seed: u64,
) -> Result<Vec<SubstepRecord>> {
    let s = &prepared.scenario;
    let ego = ego_index(prepared)?;
    let background = match strategy {
        EvalStrategy::LogReplay => None,
        EvalStrategy::ReferenceRollout => Some(Controller::Reference(
            ctx.reference
                .ok_or_else(|| Error::MissingInput("reference_rollout needs a reference checkpoint".into()))?,
        )),
        EvalStrategy::PolicyRollout => Some(Controller::Policy(
            ctx.background_policy
                .ok_or_else(|| Error::MissingInput("policy_rollout needs a policy checkpoint".into()))?,
        )),
    };
    if let Some(c) = &background {
        if c.num_tokens() != ctx.vocab.len() {
            return Err(Error::Config("background controller and vocabulary disagree".into()));
        }
    }
    let modes = (0..s.num_agents())
        .map(|i| {
            if i == ego {
                match planner.kind {
                    PlannerKind::Policy(_) => ControlMode::Token,
                    _ => ControlMode::Planner,
                }
            } else if s.controlled[i] && background.is_some() {
                ControlMode::Token
            } else {
                ControlMode::Log
            }
        })
        .collect();
    let mut world = reset_with_modes(prepared, &ctx.sim, modes)?;
    let mut rng = rng_from(seed);
    let route = Route::from_log(s, ego)?;
    let mut idm = match &planner.kind {
        PlannerKind::Idm(p) => Some(IdmPlanner::new(*p)?),
        _ => None,
    };
    let brake = FrenetParams::default();
    let n = ctx.sim.policy_every;
    let mut records = vec![initial_record(&world)];
    for _ in 0..ctx.sim.policy_steps() {
        let mut actions: Vec<Option<Action>> = vec![None; s.num_agents()];
        if let Some(c) = &background {
            let others: Vec<usize> = world.acting_agents().into_iter().filter(|&i| i != ego).collect();
            for (a, tok) in others.iter().zip(c.act_agents(&world, &others, prepared, &mut rng, SampleMode::Sample)?) {
                actions[*a] = Some(Action::Token(tok));
            }
        }
        if world.needs_action(ego) {
            actions[ego] = Some(match &planner.kind {
                PlannerKind::Idm(_) => {
                    Action::Trajectory(idm.as_mut().expect("idm state").plan(&world, ego, &route, n)?)
                }
                PlannerKind::Frenet(p) => Action::Trajectory(frenet_plan(&world, ego, &route, p, n)?),
                PlannerKind::MaxBrake => {
                    let c =
                        crate::planners::max_brake_candidate(&world, ego, &FrenetParams { horizon_steps: n, ..brake });
                    Action::Trajectory(c.states)
                }
                PlannerKind::Policy(p) => {
                    let tok =
                        Controller::Policy(p).act_agents(&world, &[ego], prepared, &mut rng, SampleMode::Sample)?;
                    Action::Token(tok[0])
                }
            });
        }
        records.extend(step(&mut world, &actions, ctx.vocab, prepared, &ctx.sim)?.substeps);
    }
    Ok(records)
}

/// Depends on strategy and scenario only, so every planner faces the same traffic.
fn cell_seed(seed: u64, strategy: EvalStrategy, scenario: usize) -> u64 {
    derive_seed(seed, &[strategy as u64, scenario as u64])
}

/// Scores every planner on every scenario under every strategy. Cell
/// failures are recorded rather than aborting the run.
pub fn planner_eval_matrix(
    planners: &[EvalPlanner],
    scenarios: &[Arc<PreparedScenario>],
    strategies: &[EvalStrategy],
    ctx: &EvalContext<'_>,
    seed: u64,
    pool: Option<&rayon::ThreadPool>,
) -> Result<ScoreMatrix> {
    if planners.is_empty() || scenarios.is_empty() || strategies.is_empty() {
        return Err(Error::InvalidArgument("planner matrix needs planners, scenarios and strategies".into()));
    }
    let mut jobs = Vec::new();
    for p in 0..planners.len() {
        for &st in strategies {
            for k in 0..scenarios.len() {
                jobs.push((p, st, k));
            }
        }
    }
    let run = || -> Vec<Cell> {
        jobs.par_iter()
            .map(|&(p, st, k)| {
                let outcome =
                    run_episode(&planners[p], st, &scenarios[k], ctx, cell_seed(seed, st, k)).and_then(|recs| {
                        let ego = ego_index(&scenarios[k])?;
                        pdm_score(&recs, ego, &scenarios[k].scenario, &ctx.weights)
                    });
                Cell {
                    planner: p,
                    strategy: st,
                    scenario: k,
                    outcome: match outcome {
                        Ok(b) => CellOutcome::Scored(b),
                        Err(e) => CellOutcome::Failed(e.to_string()),
                    },
                }
            })
            .collect()
    };
    let cells = match pool {
        Some(pool) => pool.install(run),
        None => run(),
    };
    Ok(ScoreMatrix {
        planners: planners.iter().map(|p| p.name.clone()).collect(),
        strategies: strategies.to_vec(),
        scenarios: scenarios.iter().map(|s| s.scenario.id.clone()).collect(),
        cells,
    })
}

#[cfg(test)]
mod tests;
