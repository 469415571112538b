use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Tensor};
use crate::rng::{derive_seed, rng_from};
use crate::sim::{chord_speed, ControlMode, EventCounters, FeatureSet, PreparedScenario, WorldState};
use crate::tokenizer::{track_segment, TokenId, TokenVocab};

use super::{ReferenceInput, ReferenceNet};

/// World rebuilt from the logs at step `t`, with speeds measured the way tokens measure them.
pub fn log_world(prepared: &PreparedScenario, t: usize, horizon: usize) -> WorldState {
    let s = &prepared.scenario;
    let agents = (0..s.num_agents())
        .map(|i| {
            let mut st = s.tracks[i].states[t];
            if let Some(v) = chord_speed(s, i, t, horizon) {
                st.speed = v;
            }
            st
        })
        .collect::<Vec<_>>();
    let n = agents.len();
    WorldState {
        step: t,
        agents,
        modes: vec![ControlMode::Token; n],
        done: vec![false; n],
        removed: vec![false; n],
        events: vec![EventCounters::default(); n],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcSample {
    pub features: FeatureSet,
    pub target: TokenId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcDataset {
    pub samples: Vec<BcSample>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl BcDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Context/target pairs from every logged step of every controlled agent.
/// Whole scenarios go to either the training or the validation split.
pub fn build_bc_dataset(
    scenarios: &[Arc<PreparedScenario>],
    vocab: &TokenVocab,
    input: ReferenceInput,
    val_fraction: f64,
    seed: u64,
) -> Result<BcDataset> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config("val_fraction must lie in [0, 1)".into()));
    }
    let h = vocab.horizon();
    let probe = ReferenceNet::new(super::FusionArch::reference(vocab.len()), input, 0)?;
    let mut order: Vec<usize> = (0..scenarios.len()).collect();
    order.shuffle(&mut rng_from(derive_seed(seed, &[0xb0])));
    let n_val = ((scenarios.len() as f64) * val_fraction).round() as usize;
    let val_set: Vec<usize> = order[scenarios.len() - n_val..].to_vec();

    let mut samples = Vec::new();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (si, p) in scenarios.iter().enumerate() {
        let s = &p.scenario;
        let is_val = val_set.contains(&si);
        for t in h..s.track_len().saturating_sub(h) {
            let world = log_world(p, t, h);
            for a in s.controlled_ids() {
                if !world.agents[a].valid {
                    continue;
                }
                let Some(seg) = track_segment(&s.tracks[a], t, h) else { continue };
                let target = vocab.encode(&seg)?;
                let features = compact(probe.context(&world, a, p)?);
                if is_val {
                    val.push(samples.len());
                } else {
                    train.push(samples.len());
                }
                samples.push(BcSample { features, target });
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no behavior-cloning samples".into()));
    }
    Ok(BcDataset { samples, train, val })
}

/// Drops padded rows; the network only reads present entities.
fn compact(mut f: FeatureSet) -> FeatureSet {
    let keep_p: Vec<usize> = (0..f.partners.len()).filter(|&i| f.partner_mask[i]).collect();
    f.partners = keep_p.iter().map(|&i| f.partners[i]).collect();
    f.partner_mask = vec![true; f.partners.len()];
    let keep_r: Vec<usize> = (0..f.road.len()).filter(|&i| f.road_mask[i]).collect();
    f.road = keep_r.iter().map(|&i| f.road[i]).collect();
    f.road_mask = vec![true; f.road.len()];
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Learning rate in the last epoch as a fraction of `lr`; decay is linear.
    pub final_lr_frac: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self { epochs: 30, lr: 1e-3, final_lr_frac: 0.05, batch_size: 256, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcEpoch {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
    pub val_acc: f64,
}

/// Per-epoch losses; row 0 is the untrained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcReport {
    pub epochs: Vec<BcEpoch>,
}

impl BcReport {
    pub fn final_row(&self) -> &BcEpoch {
        self.epochs.last().expect("report has the initial row")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_nll,val_nll,val_acc\n");
        for e in &self.epochs {
            writeln!(s, "{},{},{},{}", e.epoch, e.train_nll, e.val_nll, e.val_acc).expect("string write");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Mean NLL and top-1 accuracy of `net` on a subset.
pub fn evaluate(net: &ReferenceNet, ds: &BcDataset, idx: &[usize]) -> Result<(f64, f64)> {
    if idx.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut nll = 0.0;
    let mut hits = 0usize;
    for chunk in idx.chunks(512) {
        let batch: Vec<&FeatureSet> = chunk.iter().map(|&i| &ds.samples[i].features).collect();
        let rows = net.log_probs_chunked(&batch, 512)?;
        for (lp, &i) in rows.iter().zip(chunk) {
            let y = ds.samples[i].target.index();
            nll -= lp[y];
            let arg = (0..lp.len()).fold(0, |b, k| if lp[k] > lp[b] { k } else { b });
            hits += (arg == y) as usize;
        }
    }
    Ok((nll / idx.len() as f64, hits as f64 / idx.len() as f64))
}

/// Minimizes token cross-entropy with Adam. Deterministic given the seed.
pub fn bc_train(net: &mut ReferenceNet, ds: &BcDataset, cfg: &BcConfig) -> Result<BcReport> {
    if ds.train.is_empty() {
        return Err(Error::InvalidArgument("empty behavior-cloning training split".into()));
    }
    let k = net.num_tokens();
    if ds.samples.iter().any(|s| s.target.index() >= k) {
        return Err(Error::Shape("target token outside the vocabulary".into()));
    }
    let mut rng = rng_from(derive_seed(cfg.seed, &[0xbc]));
    let mut opt = Adam::new(&net.net.params, cfg.lr, None);
    let mut epochs = Vec::with_capacity(cfg.epochs + 1);
    let (val_nll, val_acc) = evaluate(net, ds, &ds.val)?;
    let (train_nll, _) = evaluate(net, ds, &ds.train)?;
    epochs.push(BcEpoch { epoch: 0, train_nll, val_nll, val_acc });
    let mut order = ds.train.clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let frac = if cfg.epochs > 1 { (epoch - 1) as f64 / (cfg.epochs - 1) as f64 } else { 0.0 };
        opt.lr = cfg.lr * (1.0 - frac * (1.0 - cfg.final_lr_frac));
        let mut total = 0.0;
        for mb in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&FeatureSet> = mb.iter().map(|&i| &ds.samples[i].features).collect();
            net.net.params.zero_grad();
            let (out, cache) = net.net.forward_train(&batch, Some(&mut rng))?;
            let inv = 1.0 / mb.len() as f64;
            let mut d = Tensor::zeros(mb.len(), k);
            for (r, &i) in mb.iter().enumerate() {
                let lp = out.log_probs(r);
                let y = ds.samples[i].target.index();
                total -= lp[y];
                for (j, g) in d.row_mut(r).iter_mut().enumerate() {
                    *g = (lp[j].exp() - (j == y) as u8 as f64) * inv;
                }
            }
            net.net.backward(&cache, &d, None)?;
            opt.step(&mut net.net.params);
        }
        if !net.net.params.all_finite() {
            return Err(Error::NonFiniteLoss(format!("behavior cloning diverged in epoch {epoch}")));
        }
        let (val_nll, val_acc) = evaluate(net, ds, &ds.val)?;
        epochs.push(BcEpoch { epoch, train_nll: total / order.len() as f64, val_nll, val_acc });
    }
    Ok(BcReport { epochs })
}
