//! Realism of sampled rollouts: the expert's own tokens as a near-perfect
//! controller would score high; an untrained reference scores lower.

use anchorplay::metrics::{aggregate_reports, evaluate_controller, FeatureSpec};
use anchorplay::policy::{Controller, FusionArch, PolicyNet, ReferenceInput, ReferenceNet, SampleMode};
use anchorplay::scenario::{generate_synthetic_scenario, Template};
use anchorplay::sim::{PreparedScenario, SimConfig};
use anchorplay::tokenizer::{collect_segments, fit_kdisk_target_k};

fn main() -> anchorplay::error::Result<()> {
    let scenarios: Vec<_> = (0..4u64)
        .map(|i| PreparedScenario::new(generate_synthetic_scenario(Template::ALL[i as usize % 3], 4, 90 + i)?))
        .collect::<Result<_, _>>()?;
    let segs = collect_segments(scenarios.iter().flat_map(|p| p.scenario.tracks.iter()), 2);
    let vocab = fit_kdisk_target_k(&segs, 32, 1.0, 0)?.vocab;
    let sim = SimConfig::default();
    let specs = FeatureSpec::defaults();

    let reference = ReferenceNet::new(FusionArch::reference(vocab.len()), ReferenceInput::Global, 1)?;
    let mut uniform = PolicyNet::new(FusionArch::policy(vocab.len()), 2)?;
    uniform.net.zero_actor_head();

    for (name, c) in
        [("untrained reference", Controller::Reference(&reference)), ("uniform policy", Controller::Policy(&uniform))]
    {
        let reports = evaluate_controller(c, &scenarios, &vocab, &sim, 8, SampleMode::Sample, &specs, 0, None)?;
        let s = aggregate_reports(&reports)?;
        println!(
            "{name}: composite {:.4}, minADE {:.2} m, collision {:.3}, offroad {:.3}",
            s.composite, s.min_ade, s.collision_rate, s.offroad_rate
        );
        for (cat, v) in &s.categories {
            if let Some(v) = v {
                println!("    {:<12} {:.4}", cat.name(), v);
            }
        }
    }
    Ok(())
}
