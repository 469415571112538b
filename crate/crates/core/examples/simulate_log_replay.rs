//! Log replay versus replaying the expert's own tokens in closed loop, with a
//! per-step CSV dump of the token replay.

use anchorplay::metrics::log_rollout;
use anchorplay::scenario::{generate_synthetic_scenario, Template};
use anchorplay::sim::{reset, step, write_rollout_csv, Action, PreparedScenario, SimConfig};
use anchorplay::tokenizer::{collect_segments, fit_kdisk_target_k, tokenize_track_from};

fn main() -> anchorplay::error::Result<()> {
    let p = PreparedScenario::new(generate_synthetic_scenario(Template::Intersection, 5, 42)?)?;
    let s = &p.scenario;
    let segs = collect_segments(s.tracks.iter(), 2);
    let vocab = fit_kdisk_target_k(&segs, 32, 1.0, 0)?.vocab;
    let sim = SimConfig::default();

    let replay = log_rollout(&p, &vocab, &sim)?;
    let last = replay.last().expect("records");
    println!("log replay: {} records, final step {}", replay.len(), last.step);

    // Expert tokens from the start step, replayed through the simulator.
    let tokens: Vec<_> =
        s.tracks.iter().map(|tr| tokenize_track_from(tr, &vocab, s.init_step)).collect::<Result<_, _>>()?;
    let mut world = reset(&p, &sim)?;
    let mut records = Vec::new();
    for k in 0..sim.policy_steps() {
        let actions: Vec<Option<Action>> = (0..s.num_agents())
            .map(|i| world.needs_action(i).then(|| tokens[i].get(k).map(|t| Action::Token(*t))).flatten())
            .collect();
        records.extend(step(&mut world, &actions, &vocab, &p, &sim)?.substeps);
    }
    for i in s.controlled_ids() {
        let fin = records.last().expect("records").agents[i];
        let logged = s.tracks[i].states[s.final_step()];
        if fin.valid && logged.valid {
            println!("agent {i}: final drift from log {:.3} m", fin.pose.position().dist(&logged.pose.position()));
        }
    }
    let path = std::env::temp_dir().join("token_replay.csv");
    write_rollout_csv(&path, &s.id, &records)?;
    println!("wrote {}", path.display());
    Ok(())
}
