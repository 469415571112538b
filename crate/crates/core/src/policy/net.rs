use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{dropout_mask, log_softmax, Linear, Mlp, MlpCache, ParamSet, Tensor};
use crate::rng::{rng_from, Rng};
use crate::sim::{FeatureSet, EGO_DIM, PARTNER_DIM, ROAD_DIM};

/// Sizes of a late-fusion actor(-critic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionArch {
    pub embed_dim: usize,
    pub trunk_dim: usize,
    pub num_tokens: usize,
    pub with_critic: bool,
    /// Dropout applied to the fused embedding in training passes.
    pub dropout: f64,
}

impl FusionArch {
    pub fn policy(num_tokens: usize) -> Self {
        Self { embed_dim: 64, trunk_dim: 128, num_tokens, with_critic: true, dropout: 0.01 }
    }

    /// Twice the policy trunk, no critic.
    pub fn reference(num_tokens: usize) -> Self {
        Self { embed_dim: 64, trunk_dim: 256, num_tokens, with_critic: false, dropout: 0.01 }
    }
}

/// Batched network output.
#[derive(Debug, Clone, PartialEq)]
pub struct NetOutput {
    /// `[B, K]` action logits.
    pub logits: Tensor,
    /// One value per row when the network has a critic.
    pub values: Option<Vec<f64>>,
}

impl NetOutput {
    pub fn log_probs(&self, row: usize) -> Vec<f64> {
        log_softmax(self.logits.row(row))
    }
}

/// Entities gathered from a batch, keeping only present rows.
struct Packed {
    ego: Tensor,
    partners: Tensor,
    partner_owner: Vec<usize>,
    partner_count: Vec<usize>,
    road: Tensor,
    road_owner: Vec<usize>,
    road_count: Vec<usize>,
}

fn pack(batch: &[&FeatureSet]) -> Packed {
    let b = batch.len();
    let mut ego = Tensor::zeros(b, EGO_DIM);
    let mut pdata = Vec::new();
    let mut partner_owner = Vec::new();
    let mut partner_count = vec![0; b];
    let mut rdata = Vec::new();
    let mut road_owner = Vec::new();
    let mut road_count = vec![0; b];
    for (i, f) in batch.iter().enumerate() {
        ego.row_mut(i).copy_from_slice(&f.ego);
        for row in f.present_partners() {
            pdata.extend_from_slice(row);
            partner_owner.push(i);
            partner_count[i] += 1;
        }
        for row in f.present_road() {
            rdata.extend_from_slice(row);
            road_owner.push(i);
            road_count[i] += 1;
        }
    }
    Packed {
        ego,
        partners: Tensor { shape: vec![partner_owner.len(), PARTNER_DIM], data: pdata },
        partner_owner,
        partner_count,
        road: Tensor { shape: vec![road_owner.len(), ROAD_DIM], data: rdata },
        road_owner,
        road_count,
    }
}

fn mean_pool(rows: &Tensor, owner: &[usize], count: &[usize]) -> Tensor {
    let d = rows.cols();
    let mut out = Tensor::zeros(count.len(), d);
    for (r, &o) in owner.iter().enumerate() {
        for (acc, v) in out.row_mut(o).iter_mut().zip(rows.row(r)) {
            *acc += v;
        }
    }
    for (i, &c) in count.iter().enumerate() {
        if c > 0 {
            let inv = 1.0 / c as f64;
            out.row_mut(i).iter_mut().for_each(|v| *v *= inv);
        }
    }
    out
}

fn unpool(d_pooled: &Tensor, owner: &[usize], count: &[usize]) -> Tensor {
    let d = d_pooled.cols();
    let mut out = Tensor::zeros(owner.len(), d);
    for (r, &o) in owner.iter().enumerate() {
        let inv = 1.0 / count[o] as f64;
        for (g, v) in out.row_mut(r).iter_mut().zip(d_pooled.row(o)) {
            *g = v * inv;
        }
    }
    out
}

/// Activations from a training forward pass.
pub struct FusionCache {
    packed_owner: (Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>),
    ego: MlpCache,
    partner: Option<MlpCache>,
    road: Option<MlpCache>,
    mask: Vec<f64>,
    trunk: MlpCache,
    trunk_out: Tensor,
}

/// Late-fusion network: per-entity encoders, mean pooling, shared trunk, heads.
#[derive(Debug, Clone, PartialEq)]
pub struct LateFusionNet {
    pub arch: FusionArch,
    pub params: ParamSet,
    ego: Mlp,
    partner: Mlp,
    road: Mlp,
    trunk: Mlp,
    actor: Linear,
    critic: Option<Linear>,
}

impl LateFusionNet {
    pub fn new(arch: FusionArch, seed: u64) -> Result<Self> {
        if arch.num_tokens == 0 || arch.embed_dim == 0 || arch.trunk_dim == 0 {
            return Err(Error::Config("network sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&arch.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        let mut rng = rng_from(seed);
        let mut ps = ParamSet::new(seed);
        let e = arch.embed_dim;
        let t = arch.trunk_dim;
        let ego = Mlp::new(&mut ps, "ego", &[EGO_DIM, e, e], true, &mut rng);
        let partner = Mlp::new(&mut ps, "partner", &[PARTNER_DIM, e, e], true, &mut rng);
        let road = Mlp::new(&mut ps, "road", &[ROAD_DIM, e, e], true, &mut rng);
        let trunk = Mlp::new(&mut ps, "trunk", &[3 * e, t, t], true, &mut rng);
        let actor = Linear::new(&mut ps, "actor", t, arch.num_tokens, &mut rng);
        let critic = arch.with_critic.then(|| Linear::new(&mut ps, "critic", t, 1, &mut rng));
        Ok(Self { arch, params: ps, ego, partner, road, trunk, actor, critic })
    }

    pub fn num_tokens(&self) -> usize {
        self.arch.num_tokens
    }

    /// Sets the actor head to zero so every state maps to the uniform distribution.
    pub fn zero_actor_head(&mut self) {
        for idx in [self.actor.w, self.actor.b] {
            self.params.params[idx].value.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Inference pass: no dropout, no cache.
    pub fn forward(&self, batch: &[&FeatureSet]) -> Result<NetOutput> {
        let p = pack(batch);
        let ps = &self.params;
        let e = self.ego.forward(ps, &p.ego)?;
        let pe = if p.partners.rows() > 0 {
            mean_pool(&self.partner.forward(ps, &p.partners)?, &p.partner_owner, &p.partner_count)
        } else {
            Tensor::zeros(batch.len(), self.arch.embed_dim)
        };
        let re = if p.road.rows() > 0 {
            mean_pool(&self.road.forward(ps, &p.road)?, &p.road_owner, &p.road_count)
        } else {
            Tensor::zeros(batch.len(), self.arch.embed_dim)
        };
        let h = Tensor::hcat(&[&e, &pe, &re])?;
        let t = self.trunk.forward(ps, &h)?;
        self.heads(&t)
    }

    fn heads(&self, t: &Tensor) -> Result<NetOutput> {
        let logits = self.actor.forward(&self.params, t)?;
        if !logits.all_finite() {
            return Err(Error::NonFinite("network logits"));
        }
        let values = match &self.critic {
            Some(c) => Some(c.forward(&self.params, t)?.data),
            None => None,
        };
        Ok(NetOutput { logits, values })
    }

    /// Training pass. Dropout is drawn from `rng` when given.
    pub fn forward_train(&self, batch: &[&FeatureSet], rng: Option<&mut Rng>) -> Result<(NetOutput, FusionCache)> {
        let p = pack(batch);
        let ps = &self.params;
        let b = batch.len();
        let (e, ego_c) = self.ego.forward_cached(ps, p.ego)?;
        let (pe, partner_c) = if p.partners.rows() > 0 {
            let (y, c) = self.partner.forward_cached(ps, p.partners)?;
            (mean_pool(&y, &p.partner_owner, &p.partner_count), Some(c))
        } else {
            (Tensor::zeros(b, self.arch.embed_dim), None)
        };
        let (re, road_c) = if p.road.rows() > 0 {
            let (y, c) = self.road.forward_cached(ps, p.road)?;
            (mean_pool(&y, &p.road_owner, &p.road_count), Some(c))
        } else {
            (Tensor::zeros(b, self.arch.embed_dim), None)
        };
        let mut h = Tensor::hcat(&[&e, &pe, &re])?;
        let mask = match rng {
            Some(rng) if self.arch.dropout > 0.0 => dropout_mask(h.data.len(), self.arch.dropout, rng),
            _ => Vec::new(),
        };
        if !mask.is_empty() {
            h.data.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        }
        let (t, trunk_c) = self.trunk.forward_cached(ps, h)?;
        let out = self.heads(&t)?;
        Ok((
            out,
            FusionCache {
                packed_owner: (p.partner_owner, p.partner_count, p.road_owner, p.road_count),
                ego: ego_c,
                partner: partner_c,
                road: road_c,
                mask,
                trunk: trunk_c,
                trunk_out: t,
            },
        ))
    }

    /// Accumulates parameter gradients for upstream gradients on logits and values.
    pub fn backward(&mut self, cache: &FusionCache, d_logits: &Tensor, d_values: Option<&[f64]>) -> Result<()> {
        let ps = &mut self.params;
        let mut dt = self.actor.backward(ps, &cache.trunk_out, d_logits, true).expect("input gradient requested");
        if let (Some(c), Some(dv)) = (&self.critic, d_values) {
            let dv = Tensor { shape: vec![dv.len(), 1], data: dv.to_vec() };
            let dtc = c.backward(ps, &cache.trunk_out, &dv, true).expect("input gradient requested");
            dt.data.iter_mut().zip(&dtc.data).for_each(|(a, b)| *a += b);
        }
        let mut dh = self.trunk.backward(ps, &cache.trunk, dt, true).expect("input gradient requested");
        if !cache.mask.is_empty() {
            dh.data.iter_mut().zip(&cache.mask).for_each(|(v, m)| *v *= m);
        }
        let e = self.arch.embed_dim;
        let parts = dh.hsplit(&[e, e, e]);
        let (po, pc, ro, rc) = &cache.packed_owner;
        self.ego.backward(ps, &cache.ego, parts[0].clone(), false);
        if let Some(c) = &cache.partner {
            self.partner.backward(ps, c, unpool(&parts[1], po, pc), false);
        }
        if let Some(c) = &cache.road {
            self.road.backward(ps, c, unpool(&parts[2], ro, rc), false);
        }
        Ok(())
    }
}
