//! Closed-loop throughput of the local policy against the centralized
//! reference, whose context grows with the number of agents.

use anchorplay::harness::paired_bench;
use anchorplay::policy::{Controller, FusionArch, PolicyNet, ReferenceInput, ReferenceNet};
use anchorplay::scenario::{generate_synthetic_scenario, Template};
use anchorplay::sim::{worker_pool, PreparedScenario, SimConfig};
use anchorplay::tokenizer::{collect_segments, fit_kdisk_target_k};

fn main() -> anchorplay::error::Result<()> {
    let scenarios: Vec<_> = (0..4u64)
        .map(|i| PreparedScenario::new(generate_synthetic_scenario(Template::ALL[i as usize % 3], 8, 60 + i)?))
        .collect::<Result<_, _>>()?;
    let segs = collect_segments(scenarios.iter().flat_map(|p| p.scenario.tracks.iter()), 2);
    let vocab = fit_kdisk_target_k(&segs, 64, 1.0, 0)?.vocab;
    let reference = ReferenceNet::new(FusionArch::reference(vocab.len()), ReferenceInput::Global, 1)?;
    let policy = PolicyNet::new(FusionArch::policy(vocab.len()), 2)?;
    let sim = SimConfig::default();
    let pool = worker_pool(std::thread::available_parallelism().map_or(1, |n| n.get()))?;
    let seeds = [1, 2, 3];
    let report = paired_bench(
        Controller::Policy(&policy),
        Controller::Reference(&reference),
        &scenarios,
        &vocab,
        &sim,
        4,
        2,
        1,
        &seeds,
        Some(&pool),
    )?;
    println!("{report}");
    Ok(())
}
