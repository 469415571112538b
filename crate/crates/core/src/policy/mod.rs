//! Decentralized actor-critic, centralized reference model and behavior cloning.

mod bc;
mod control;
mod net;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{CategoricalDist, Checkpoint};
use crate::sim::{build_global_context, build_observation, FeatureSet, PreparedScenario, WorldState};

pub use bc::{bc_train, build_bc_dataset, log_world, BcConfig, BcDataset, BcEpoch, BcReport, BcSample};
pub use control::{Controller, SampleMode};
pub use net::{FusionArch, FusionCache, LateFusionNet, NetOutput};

/// Shared decentralized policy with a value head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub net: LateFusionNet,
}

impl PolicyNet {
    pub fn new(arch: FusionArch, seed: u64) -> Result<Self> {
        if !arch.with_critic {
            return Err(Error::Config("policy network needs a critic head".into()));
        }
        Ok(Self { net: LateFusionNet::new(arch, seed)? })
    }

    pub fn num_tokens(&self) -> usize {
        self.net.num_tokens()
    }

    /// Action distributions and values for a batch of observations.
    pub fn act(&self, batch: &[&FeatureSet]) -> Result<(Vec<CategoricalDist>, Vec<f64>)> {
        let out = self.net.forward(batch)?;
        let dists = (0..batch.len())
            .map(|r| CategoricalDist::from_logits(out.logits.row(r).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok((dists, out.values.expect("policy has a critic")))
    }

    pub fn observe(
        world: &WorldState,
        agent: usize,
        prepared: &PreparedScenario,
        goal_dropout: bool,
    ) -> Result<FeatureSet> {
        build_observation(world, agent, prepared, goal_dropout).map(|o| o.0)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new("policy", serde_json::json!({ "arch": self.net.arch }), &self.net.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("policy")?;
        let arch: FusionArch = serde_json::from_value(ck.arch["arch"].clone())
            .map_err(|e| Error::Config(format!("bad policy architecture: {e}")))?;
        let mut p = Self::new(arch, ck.params.seed)?;
        p.net.params.load_values(&ck.params)?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// What the reference model conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceInput {
    /// Privileged view of every agent (centralized reference).
    #[default]
    Global,
    /// The same local view the policy sees, minus the goal (decentralized baseline).
    Local,
}

/// Frozen model of human driving over the shared token vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceNet {
    pub net: LateFusionNet,
    pub input: ReferenceInput,
}

impl ReferenceNet {
    pub fn new(arch: FusionArch, input: ReferenceInput, seed: u64) -> Result<Self> {
        Ok(Self { net: LateFusionNet::new(FusionArch { with_critic: false, ..arch }, seed)?, input })
    }

    pub fn num_tokens(&self) -> usize {
        self.net.num_tokens()
    }

    pub fn context(&self, world: &WorldState, agent: usize, prepared: &PreparedScenario) -> Result<FeatureSet> {
        match self.input {
            ReferenceInput::Global => build_global_context(world, agent, prepared).map(|c| c.0),
            ReferenceInput::Local => build_observation(world, agent, prepared, true).map(|o| o.0),
        }
    }

    /// One distribution per context row.
    pub fn forward(&self, batch: &[&FeatureSet]) -> Result<Vec<CategoricalDist>> {
        let out = self.net.forward(batch)?;
        (0..batch.len()).map(|r| CategoricalDist::from_logits(out.logits.row(r).to_vec())).collect()
    }

    /// Log-probability rows for a large batch, evaluated in chunks.
    pub fn log_probs_chunked(&self, batch: &[&FeatureSet], chunk: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(batch.len());
        for part in batch.chunks(chunk.max(1)) {
            let o = self.net.forward(part)?;
            for r in 0..part.len() {
                out.push(o.log_probs(r));
            }
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            "reference",
            serde_json::json!({ "arch": self.net.arch, "input": self.input }),
            &self.net.params,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("reference")?;
        let arch: FusionArch = serde_json::from_value(ck.arch["arch"].clone())
            .map_err(|e| Error::Config(format!("bad reference architecture: {e}")))?;
        let input: ReferenceInput = serde_json::from_value(ck.arch["input"].clone())
            .map_err(|e| Error::Config(format!("bad reference input kind: {e}")))?;
        let mut r = Self::new(arch, input, ck.params.seed)?;
        r.net.params.load_values(&ck.params)?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
