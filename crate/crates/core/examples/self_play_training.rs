//! A few anchored PPO updates against an untrained reference. Shows the
//! per-update report; real runs use a behavior-cloned reference.

use anchorplay::policy::{FusionArch, ReferenceInput, ReferenceNet};
use anchorplay::scenario::{generate_synthetic_scenario, Template};
use anchorplay::sim::{PreparedScenario, SimConfig};
use anchorplay::tokenizer::{collect_segments, fit_kdisk_target_k};
use anchorplay::trainer::{PpoConfig, RewardConfig, TrainConfig, Trainer};

fn main() -> anchorplay::error::Result<()> {
    let scenarios: Vec<_> = (0..6u64)
        .map(|i| PreparedScenario::new(generate_synthetic_scenario(Template::ALL[i as usize % 3], 4, i)?))
        .collect::<Result<_, _>>()?;
    let segs = collect_segments(scenarios.iter().flat_map(|p| p.scenario.tracks.iter()), 2);
    let vocab = fit_kdisk_target_k(&segs, 24, 1.0, 0)?.vocab;
    let reference = ReferenceNet::new(FusionArch::reference(vocab.len()), ReferenceInput::Global, 3)?;

    let config = TrainConfig {
        sim: SimConfig { horizon_steps: 40, ..SimConfig::default() },
        reward: RewardConfig { w_humanlike: 0.05, ..RewardConfig::default() },
        ppo: PpoConfig { n_parallel_worlds: 4, minibatch_size: 128, total_env_steps: 2_000, ..PpoConfig::default() },
        checkpoint_every: 0,
    };
    let mut trainer = Trainer::new(config, vocab.len(), 7)?;
    println!("update  steps  kl      entropy  task    collide offroad");
    while !trainer.finished() {
        let r = trainer.run_update(&reference, &vocab, &scenarios, None)?;
        println!(
            "{:>6} {:>6}  {:.4}  {:.4}   {:+.4} {:.3}   {:.3}",
            r.update, r.env_steps, r.kl, r.entropy, r.task_reward, r.collision_rate, r.offroad_rate
        );
    }
    Ok(())
}
