use rand::Rng as _;

use super::*;
use crate::nn::{kl_categorical, CategoricalDist};
use crate::policy::ReferenceInput;
use crate::scenario::{generate_synthetic_scenario, Template};
use crate::sim::{reset, FeatureSet};
use crate::tokenizer::{collect_segments, fit_kdisk_target_k, TokenId};

struct Fixture {
    scenarios: Vec<Arc<PreparedScenario>>,
    vocab: TokenVocab,
    reference: ReferenceNet,
}

fn tiny_arch(k: usize, with_critic: bool) -> FusionArch {
    FusionArch { embed_dim: 8, trunk_dim: 8, num_tokens: k, with_critic, dropout: 0.0 }
}

fn fixture(n_agents: usize, n_scen: u64) -> Fixture {
    let scenarios: Vec<_> = (0..n_scen)
        .map(|i| {
            let t = Template::ALL[i as usize % 3];
            PreparedScenario::new(generate_synthetic_scenario(t, n_agents, 50 + i).unwrap()).unwrap()
        })
        .collect();
    let segs = collect_segments(scenarios.iter().flat_map(|p| p.scenario.tracks.iter()), 2);
    let vocab = fit_kdisk_target_k(&segs, 12, 1.0, 0).unwrap().vocab;
    let reference = ReferenceNet::new(tiny_arch(vocab.len(), false), ReferenceInput::Global, 9).unwrap();
    Fixture { scenarios, vocab, reference }
}

fn small_config(worlds: usize, horizon: usize) -> TrainConfig {
    TrainConfig {
        sim: SimConfig { horizon_steps: horizon, ..SimConfig::default() },
        ppo: PpoConfig { n_parallel_worlds: worlds, minibatch_size: 32, update_epochs: 2, ..PpoConfig::default() },
        ..TrainConfig::default()
    }
}

fn collect(fx: &Fixture, policy: &PolicyNet, cfg: &TrainConfig, seed: u64) -> RolloutBuffer {
    collect_rollouts(policy, &fx.reference, &fx.vocab, &fx.scenarios, &cfg.sim, &cfg.reward, &cfg.ppo, 0, seed, None)
        .unwrap()
}

#[test]
fn one_agent_full_episode_fills_forty_slots() {
    let fx = fixture(1, 1);
    let cfg = small_config(1, 80);
    let policy = PolicyNet::new(tiny_arch(fx.vocab.len(), true), 1).unwrap();
    let buf = collect(&fx, &policy, &cfg, 3);
    assert_eq!(buf.len(), 40);
    assert!(buf.transitions.last().unwrap().done);
    assert_eq!(buf.transitions.iter().filter(|t| t.done).count(), 1);
}

#[test]
fn full_goal_dropout_hides_every_goal() {
    let fx = fixture(3, 2);
    let mut cfg = small_config(2, 20);
    cfg.reward.goal_dropout_p = 1.0;
    let policy = PolicyNet::new(tiny_arch(fx.vocab.len(), true), 1).unwrap();
    let buf = collect(&fx, &policy, &cfg, 4);
    assert!(!buf.is_empty());
    assert!(buf.transitions.iter().all(|t| t.goal_dropped && t.obs.ego[1..4] == [0.0; 3]));
    cfg.reward.goal_dropout_p = 0.0;
    let buf = collect(&fx, &policy, &cfg, 4);
    assert!(buf.transitions.iter().all(|t| !t.goal_dropped && t.obs.ego[3] == 1.0));
}

#[test]
fn stored_likelihood_matches_stored_reference_row() {
    let fx = fixture(4, 3);
    let cfg = small_config(3, 30);
    let policy = PolicyNet::new(tiny_arch(fx.vocab.len(), true), 2).unwrap();
    let buf = collect(&fx, &policy, &cfg, 5);
    for t in &buf.transitions {
        assert_eq!(t.ref_log_probs.len(), fx.vocab.len());
        assert_eq!(t.humanlike_logp, t.ref_log_probs[t.action.index()]);
        let z: f64 = t.ref_log_probs.iter().map(|l| l.exp()).sum();
        assert!((z - 1.0).abs() < 1e-12);
    }
}

#[test]
fn collection_is_deterministic_and_rejects_vocab_mismatch() {
    let fx = fixture(3, 2);
    let cfg = small_config(2, 20);
    let policy = PolicyNet::new(tiny_arch(fx.vocab.len(), true), 2).unwrap();
    assert_eq!(collect(&fx, &policy, &cfg, 7), collect(&fx, &policy, &cfg, 7));
    let wrong = PolicyNet::new(tiny_arch(fx.vocab.len() + 1, true), 2).unwrap();
    let r =
        collect_rollouts(&wrong, &fx.reference, &fx.vocab, &fx.scenarios, &cfg.sim, &cfg.reward, &cfg.ppo, 0, 0, None);
    assert!(matches!(r, Err(Error::Config(_))));
}

fn bare_transition(obs: FeatureSet, k: usize) -> Transition {
    Transition {
        world: 0,
        agent: 0,
        step: 0,
        obs,
        goal_dropped: false,
        action: TokenId(0),
        logp: 0.0,
        value: 0.0,
        collided: false,
        offroad: false,
        goal_first: false,
        humanlike_logp: -(k as f64).ln(),
        ref_log_probs: vec![-(k as f64).ln(); k],
        done: false,
        reward: 0.0,
        advantage: 0.0,
        ret: 0.0,
    }
}

fn some_obs() -> FeatureSet {
    let p = PreparedScenario::new(generate_synthetic_scenario(Template::Straight, 2, 1).unwrap()).unwrap();
    let w = reset(&p, &SimConfig::default()).unwrap();
    PolicyNet::observe(&w, 0, &p, false).unwrap()
}

#[test]
fn reward_examples() {
    let clean = bare_transition(some_obs(), 64);
    let mut crash = clean.clone();
    crash.collided = true;
    let mut buf = RolloutBuffer { transitions: vec![clean.clone(), crash], ..RolloutBuffer::default() };
    assemble_rewards(&mut buf, &RewardConfig::default());
    assert_eq!(buf.transitions[0].reward, 0.0);
    assert_eq!(buf.transitions[1].reward, -0.75);

    let mut buf = RolloutBuffer { transitions: vec![clean], ..RolloutBuffer::default() };
    let rc = RewardConfig { w_humanlike: 1.0, ..RewardConfig::default() };
    assemble_rewards(&mut buf, &rc);
    assert!((buf.transitions[0].reward + 64f64.ln()).abs() < 1e-12);
    assert!((buf.transitions[0].reward + 4.159).abs() < 1e-3);

    buf.transitions[0].humanlike_logp = f64::NEG_INFINITY;
    assemble_rewards(&mut buf, &rc);
    assert_eq!(buf.transitions[0].reward, crate::nn::LOG_PROB_FLOOR);
}

#[test]
fn gae_single_terminal_step() {
    let (a, r) = gae(&[1.0], &[0.0], &[true], 123.0, 0.99, 0.95);
    assert_eq!(a, vec![1.0]);
    assert_eq!(r, vec![1.0]);
}

#[test]
fn gae_with_zero_lambda_is_td_error() {
    let mut rng = rng_from(3);
    let r: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
    let d: Vec<bool> = (0..10).map(|i| i == 4 || i == 9).collect();
    let (a, _) = gae(&r, &v, &d, 0.0, 0.9, 0.0);
    for t in 0..10 {
        let next = if d[t] { 0.0 } else { v[t + 1] };
        assert_eq!(a[t], r[t] + 0.9 * next - v[t]);
    }
}

/// Direct sum of discounted TD errors, cut at the first terminal.
fn brute_gae(r: &[f64], v: &[f64], d: &[bool], boot: f64, g: f64, l: f64) -> Vec<f64> {
    let n = r.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if d[t] {
                0.0
            } else if t + 1 < n {
                v[t + 1]
            } else {
                boot
            };
            r[t] + g * next - v[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut s = 0.0;
            for k in 0..n - t {
                s += (g * l).powi(k as i32) * delta[t + k];
                if d[t + k] {
                    break;
                }
            }
            s
        })
        .collect()
}

#[test]
fn gae_matches_double_loop() {
    let mut rng = rng_from(11);
    for trial in 0..20 {
        let r: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut d = vec![false; 20];
        if trial % 2 == 0 {
            d[19] = true;
        }
        if trial % 3 == 0 {
            d[7] = true;
        }
        let boot = rng.random_range(-1.0..1.0);
        let (a, ret) = gae(&r, &v, &d, boot, 0.99, 0.95);
        let want = brute_gae(&r, &v, &d, boot, 0.99, 0.95);
        for t in 0..20 {
            assert!((a[t] - want[t]).abs() < 1e-10);
            assert!((ret[t] - (want[t] + v[t])).abs() < 1e-10);
        }
    }
}

#[test]
fn batch_advantages_are_normalized() {
    let fx = fixture(3, 2);
    let cfg = small_config(2, 20);
    let policy = PolicyNet::new(tiny_arch(fx.vocab.len(), true), 2).unwrap();
    let mut buf = collect(&fx, &policy, &cfg, 1);
    assemble_rewards(&mut buf, &cfg.reward);
    compute_gae(&mut buf, 0.99, 0.95, true);
    let n = buf.len() as f64;
    let mean = buf.transitions.iter().map(|t| t.advantage).sum::<f64>() / n;
    let var = buf.transitions.iter().map(|t| (t.advantage - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 1e-9);
    assert!((var - 1.0).abs() < 1e-6);
}

#[test]
fn kl_argument_order_is_reference_first() {
    let p = CategoricalDist::from_log_probs(vec![0.7f64.ln(), 0.2f64.ln(), 0.1f64.ln()]).unwrap();
    let q = CategoricalDist::from_log_probs(vec![0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()]).unwrap();
    let by_hand = 0.7 * (0.7f64 / 0.2).ln() + 0.2 * (0.2f64 / 0.3).ln() + 0.1 * (0.1f64 / 0.5).ln();
    assert!((kl_categorical(&p, &q).unwrap() - by_hand).abs() < 1e-12);
    // The loss reports the KL of stored reference rows against the current policy.
    let k = 3;
    let mut pol = PolicyNet::new(tiny_arch(k, true), 0).unwrap();
    pol.net.zero_actor_head();
    let mut t = bare_transition(some_obs(), k);
    t.ref_log_probs = p.log_probs.clone();
    let ppo = PpoConfig::default();
    let parts = minibatch_loss(&mut pol, &[&t], &ppo, &RewardConfig::default(), None).unwrap();
    let uniform = CategoricalDist::from_logits(vec![0.0; 3]).unwrap();
    assert!((parts.kl - kl_categorical(&p, &uniform).unwrap()).abs() < 1e-12);
    assert!((parts.kl - kl_categorical(&uniform, &p).unwrap()).abs() > 1e-3);
}

fn random_batch(k: usize, n: usize, seed: u64) -> Vec<Transition> {
    let fx_scen = PreparedScenario::new(generate_synthetic_scenario(Template::Intersection, 4, seed).unwrap()).unwrap();
    let w = reset(&fx_scen, &SimConfig::default()).unwrap();
    let mut rng = rng_from(seed);
    (0..n)
        .map(|i| {
            let mut t = bare_transition(PolicyNet::observe(&w, i % 4, &fx_scen, i % 3 == 0).unwrap(), k);
            t.action = TokenId(rng.random_range(0..k));
            t.logp = rng.random_range(-2.5..-0.5);
            t.advantage = rng.random_range(-1.5..1.5);
            t.ret = rng.random_range(-1.0..1.0);
            let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            t.ref_log_probs = crate::nn::log_softmax(&logits);
            t
        })
        .collect()
}

#[test]
fn total_loss_gradient_matches_finite_differences() {
    let k = 4;
    let batch = random_batch(k, 8, 21);
    let refs: Vec<&Transition> = batch.iter().collect();
    let ppo = PpoConfig { ent_coef: 0.05, clip_coef: 0.3, ..PpoConfig::default() };
    let rc = RewardConfig::default();
    let mut pol = PolicyNet::new(tiny_arch(k, true), 5).unwrap();
    pol.net.params.zero_grad();
    let base = minibatch_loss(&mut pol, &refs, &ppo, &rc, None).unwrap();
    assert!(base.clip_frac > 0.0 && base.clip_frac < 1.0, "both surrogate branches exercised");
    let grads = pol.net.params.flat_grads();
    let theta = pol.net.params.flat_values();
    let h = 1e-5;
    let mut rng = rng_from(0);
    let mut checked = 0;
    for _ in 0..200 {
        let i = rng.random_range(0..theta.len());
        let mut tp = theta.clone();
        tp[i] += h;
        pol.net.params.set_flat_values(&tp).unwrap();
        let lp = minibatch_loss(&mut pol, &refs, &ppo, &rc, None).unwrap().total;
        tp[i] -= 2.0 * h;
        pol.net.params.set_flat_values(&tp).unwrap();
        let lm = minibatch_loss(&mut pol, &refs, &ppo, &rc, None).unwrap().total;
        let fd = (lp - lm) / (2.0 * h);
        let g = grads[i];
        if fd.abs().max(g.abs()) < 1e-7 {
            continue;
        }
        assert!((fd - g).abs() <= 1e-3 * fd.abs().max(g.abs()) + 1e-8, "coord {i}: fd {fd} vs analytic {g}");
        checked += 1;
    }
    assert!(checked > 50);
}

#[test]
fn zero_advantage_fresh_policy_has_no_surrogate_gradient() {
    let k = 5;
    let mut batch = random_batch(k, 6, 2);
    let mut pol = PolicyNet::new(tiny_arch(k, true), 5).unwrap();
    let feats: Vec<&FeatureSet> = batch.iter().map(|t| &t.obs).collect();
    let (d, _) = pol.act(&feats).unwrap();
    for (t, d) in batch.iter_mut().zip(d) {
        t.logp = d.log_probs[t.action.index()];
        t.advantage = 0.0;
    }
    let ppo = PpoConfig { ent_coef: 0.0, vf_coef: 0.0, ..PpoConfig::default() };
    let rc = RewardConfig { kl_beta: 0.0, ..RewardConfig::default() };
    pol.net.params.zero_grad();
    let refs: Vec<&Transition> = batch.iter().collect();
    let parts = minibatch_loss(&mut pol, &refs, &ppo, &rc, None).unwrap();
    assert_eq!(parts.clip_frac, 0.0);
    assert!(pol.net.params.grad_norm() < 1e-12);
}

#[test]
fn unanchored_config_has_no_reference_terms() {
    let k = 4;
    let batch = random_batch(k, 8, 4);
    let refs: Vec<&Transition> = batch.iter().collect();
    let ppo = PpoConfig::default();
    let rc = RewardConfig { kl_beta: 0.0, w_humanlike: 0.0, ..RewardConfig::default() };
    let mut a = PolicyNet::new(tiny_arch(k, true), 5).unwrap();
    let mut b = a.clone();
    a.net.params.zero_grad();
    let pa = minibatch_loss(&mut a, &refs, &ppo, &rc, None).unwrap();
    // Scrambled reference rows must not matter.
    let scrambled: Vec<Transition> =
        batch.iter().map(|t| Transition { ref_log_probs: vec![-9.0; k], humanlike_logp: -9.0, ..t.clone() }).collect();
    let refs2: Vec<&Transition> = scrambled.iter().collect();
    b.net.params.zero_grad();
    let pb = minibatch_loss(&mut b, &refs2, &ppo, &rc, None).unwrap();
    assert_eq!(pa, pb);
    assert_eq!(pa.kl, 0.0);
    assert_eq!(a.net.params.flat_grads(), b.net.params.flat_grads());
    let mut buf = RolloutBuffer { transitions: scrambled, ..RolloutBuffer::default() };
    assemble_rewards(&mut buf, &rc);
    assert!(buf.transitions.iter().all(|t| t.reward == t.task_reward(&rc)));
}

#[test]
fn reference_stays_frozen_and_report_is_sane() {
    let fx = fixture(3, 3);
    let cfg = small_config(2, 20);
    let before = fx.reference.clone();
    let mut tr = Trainer::new(cfg, fx.vocab.len(), 3).unwrap();
    for _ in 0..2 {
        let row = tr.run_update(&fx.reference, &fx.vocab, &fx.scenarios, None).unwrap();
        assert!(row.clip_frac >= 0.0 && row.clip_frac <= 1.0);
        assert!(row.entropy >= 0.0 && row.entropy <= (fx.vocab.len() as f64).ln() + 1e-9);
        assert!(row.kl.is_finite() && row.kl >= 0.0);
    }
    assert_eq!(fx.reference, before);
    assert_eq!(tr.report.rows.len(), 2);
    assert_eq!(tr.report.rows[1].env_steps, tr.env_steps);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let fx = fixture(3, 3);
    let cfg = small_config(2, 20);
    let mut straight = Trainer::new(cfg, fx.vocab.len(), 8).unwrap();
    for _ in 0..2 {
        straight.run_update(&fx.reference, &fx.vocab, &fx.scenarios, None).unwrap();
    }
    let mut first = Trainer::new(cfg, fx.vocab.len(), 8).unwrap();
    first.run_update(&fx.reference, &fx.vocab, &fx.scenarios, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    first.to_checkpoint().unwrap().save(&path).unwrap();
    let mut resumed = Trainer::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    resumed.run_update(&fx.reference, &fx.vocab, &fx.scenarios, None).unwrap();
    assert_eq!(resumed.policy.net.params.flat_values(), straight.policy.net.params.flat_values());
    assert_eq!(resumed.report.to_csv(), straight.report.to_csv());
}

#[test]
fn train_writes_artifacts() {
    let fx = fixture(2, 2);
    let mut cfg = small_config(2, 10);
    cfg.ppo.total_env_steps = 1;
    let mut tr = Trainer::new(cfg, fx.vocab.len(), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    train(&mut tr, &fx.reference, &fx.vocab, &fx.scenarios, dir.path(), None).unwrap();
    assert_eq!(tr.report.rows.len(), 1);
    assert!(PolicyNet::load(&dir.path().join("policy.json")).is_ok());
    let csv = std::fs::read_to_string(dir.path().join("train_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn config_rejects_unknown_keys() {
    let bad = serde_json::from_str::<TrainConfig>(r#"{"reward": {"w_gaol": 1.0}}"#);
    assert!(bad.is_err());
    let ok: TrainConfig = serde_json::from_str(r#"{"reward": {"w_goal": 1.0, "kl_beta": 0.0}}"#).unwrap();
    assert_eq!(ok.reward.w_goal, 1.0);
    assert_eq!(ok.ppo, PpoConfig::default());
}
