use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::CategoricalDist;
use crate::rng::Rng;
use crate::sim::{Action, FeatureSet, PreparedScenario, WorldState};
use crate::tokenizer::TokenId;

use super::{PolicyNet, ReferenceNet};

/// How a token is picked from a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    #[default]
    Sample,
    Argmax,
}

/// Anything that maps agent views to token distributions.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// Trained policy; evaluation always shows the goal.
    Policy(&'a PolicyNet),
    Reference(&'a ReferenceNet),
}

impl Controller<'_> {
    pub fn num_tokens(&self) -> usize {
        match self {
            Controller::Policy(p) => p.num_tokens(),
            Controller::Reference(r) => r.num_tokens(),
        }
    }

    pub fn features(&self, world: &WorldState, agent: usize, prepared: &PreparedScenario) -> Result<FeatureSet> {
        match self {
            Controller::Policy(_) => PolicyNet::observe(world, agent, prepared, false),
            Controller::Reference(r) => r.context(world, agent, prepared),
        }
    }

    pub fn distributions(&self, batch: &[&FeatureSet]) -> Result<Vec<CategoricalDist>> {
        match self {
            Controller::Policy(p) => p.act(batch).map(|(d, _)| d),
            Controller::Reference(r) => r.forward(batch),
        }
    }

    /// Tokens for the listed agents of one world, in order.
    pub fn act_agents(
        &self,
        world: &WorldState,
        agents: &[usize],
        prepared: &PreparedScenario,
        rng: &mut Rng,
        mode: SampleMode,
    ) -> Result<Vec<TokenId>> {
        if agents.is_empty() {
            return Ok(Vec::new());
        }
        let feats = agents.iter().map(|&a| self.features(world, a, prepared)).collect::<Result<Vec<_>>>()?;
        let dists = self.distributions(&feats.iter().collect::<Vec<_>>())?;
        Ok(dists
            .iter()
            .map(|d| match mode {
                SampleMode::Sample => TokenId(d.sample(rng)),
                SampleMode::Argmax => TokenId(d.argmax()),
            })
            .collect())
    }

    /// Token actions for every acting agent of every world, using one
    /// batched forward pass. `rngs[w]` drives sampling in world `w`.
    pub fn act_worlds(
        &self,
        worlds: &[WorldState],
        prepared: &[&PreparedScenario],
        rngs: &mut [Rng],
        mode: SampleMode,
    ) -> Result<Vec<Vec<Option<Action>>>> {
        let mut who = Vec::new();
        let mut feats = Vec::new();
        for (wi, w) in worlds.iter().enumerate() {
            for a in w.acting_agents() {
                feats.push(self.features(w, a, prepared[wi])?);
                who.push((wi, a));
            }
        }
        let mut actions: Vec<Vec<Option<Action>>> = worlds.iter().map(|w| vec![None; w.num_agents()]).collect();
        if who.is_empty() {
            return Ok(actions);
        }
        let dists = self.distributions(&feats.iter().collect::<Vec<_>>())?;
        for (&(wi, a), d) in who.iter().zip(&dists) {
            let id = match mode {
                SampleMode::Sample => d.sample(&mut rngs[wi]),
                SampleMode::Argmax => d.argmax(),
            };
            actions[wi][a] = Some(Action::Token(TokenId(id)));
        }
        Ok(actions)
    }
}
