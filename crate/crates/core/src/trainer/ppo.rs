use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::{kl_from_log_probs, kl_grad_q_logits, Adam, Tensor};
use crate::policy::PolicyNet;
use crate::rng::Rng;
use crate::sim::FeatureSet;

use super::config::{PpoConfig, RewardConfig};
use super::rollout::{RolloutBuffer, Transition};

/// Loss terms of one minibatch, each averaged over its rows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub kl: f64,
    pub clip_frac: f64,
}

/// Forward pass plus gradient accumulation for one minibatch. Gradients are
/// added to the policy's parameter buffers; the caller zeroes them.
pub fn minibatch_loss(
    policy: &mut PolicyNet,
    batch: &[&Transition],
    ppo: &PpoConfig,
    rc: &RewardConfig,
    rng: Option<&mut Rng>,
) -> Result<LossParts> {
    let n = batch.len();
    if n == 0 {
        return Ok(LossParts::default());
    }
    let k = policy.num_tokens();
    let feats: Vec<&FeatureSet> = batch.iter().map(|t| &t.obs).collect();
    let (out, cache) = policy.net.forward_train(&feats, rng)?;
    let values = out.values.as_ref().expect("policy has a critic");
    let inv = 1.0 / n as f64;
    let mut d_logits = Tensor::zeros(n, k);
    let mut d_values = vec![0.0; n];
    let mut parts = LossParts::default();
    let mut kl_grad = vec![0.0; k];
    for (r, t) in batch.iter().enumerate() {
        let lp = out.log_probs(r);
        let a = t.action.index();
        let ratio = (lp[a] - t.logp).exp();
        let s1 = ratio * t.advantage;
        let s2 = ratio.clamp(1.0 - ppo.clip_coef, 1.0 + ppo.clip_coef) * t.advantage;
        parts.policy -= s1.min(s2) * inv;
        if (ratio - 1.0).abs() > ppo.clip_coef {
            parts.clip_frac += inv;
        }
        // Gradient of the chosen log-prob wrt logits is onehot(a) - p.
        let g_lp = if s1 <= s2 { -t.advantage * ratio * inv } else { 0.0 };
        let h: f64 = -lp.iter().map(|&l| l.exp() * l).sum::<f64>();
        parts.entropy += h * inv;
        let row = d_logits.row_mut(r);
        for j in 0..k {
            let p = lp[j].exp();
            row[j] = g_lp * ((j == a) as u8 as f64 - p) + ppo.ent_coef * p * (lp[j] + h) * inv;
        }
        if rc.kl_beta != 0.0 {
            parts.kl += kl_from_log_probs(&t.ref_log_probs, &lp) * inv;
            kl_grad_q_logits(&t.ref_log_probs, &lp, &mut kl_grad);
            row.iter_mut().zip(&kl_grad).for_each(|(g, kg)| *g += rc.kl_beta * kg * inv);
        }
        let dv = values[r] - t.ret;
        parts.value += dv * dv * inv;
        d_values[r] = ppo.vf_coef * 2.0 * dv * inv;
    }
    parts.total = parts.policy + ppo.vf_coef * parts.value - ppo.ent_coef * parts.entropy + rc.kl_beta * parts.kl;
    if !parts.total.is_finite() {
        return Err(Error::NonFiniteLoss(format!(
            "policy {} value {} entropy {} kl {}",
            parts.policy, parts.value, parts.entropy, parts.kl
        )));
    }
    policy.net.backward(&cache, &d_logits, Some(&d_values))?;
    Ok(parts)
}

/// Averages of the minibatch terms over one full update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub clip_frac: f64,
    pub grad_norm: f64,
}

/// Clipped-surrogate epochs over shuffled minibatches.
pub fn ppo_update(
    policy: &mut PolicyNet,
    opt: &mut Adam,
    buf: &RolloutBuffer,
    ppo: &PpoConfig,
    rc: &RewardConfig,
    rng: &mut Rng,
) -> Result<UpdateStats> {
    if buf.transitions.iter().any(|t| !t.advantage.is_finite() || !t.ret.is_finite()) {
        return Err(Error::NonFiniteLoss("advantages or returns are not finite".into()));
    }
    let mut order: Vec<usize> = (0..buf.len()).collect();
    let mut stats = UpdateStats::default();
    let mut count = 0usize;
    for _ in 0..ppo.update_epochs {
        order.shuffle(rng);
        for mb in order.chunks(ppo.minibatch_size.max(1)) {
            let batch: Vec<&Transition> = mb.iter().map(|&i| &buf.transitions[i]).collect();
            policy.net.params.zero_grad();
            let p = minibatch_loss(policy, &batch, ppo, rc, Some(rng))?;
            let norm = opt.step(&mut policy.net.params);
            stats.policy_loss += p.policy;
            stats.value_loss += p.value;
            stats.entropy += p.entropy;
            stats.kl += p.kl;
            stats.clip_frac += p.clip_frac;
            stats.grad_norm += norm;
            count += 1;
        }
    }
    if !policy.net.params.all_finite() {
        return Err(Error::NonFiniteLoss("policy parameters diverged".into()));
    }
    if count > 0 {
        let c = count as f64;
        stats.policy_loss /= c;
        stats.value_loss /= c;
        stats.entropy /= c;
        stats.kl /= c;
        stats.clip_frac /= c;
        stats.grad_norm /= c;
    }
    Ok(stats)
}
