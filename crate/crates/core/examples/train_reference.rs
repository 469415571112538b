//! Behavior-clones a small centralized reference model and reports
//! validation accuracy per epoch.

use anchorplay::policy::{bc_train, build_bc_dataset, BcConfig, FusionArch, ReferenceInput, ReferenceNet};
use anchorplay::scenario::{generate_synthetic_scenario, Template};
use anchorplay::sim::PreparedScenario;
use anchorplay::tokenizer::{collect_segments, fit_kdisk_target_k};

fn main() -> anchorplay::error::Result<()> {
    let scenarios: Vec<_> = (0..10u64)
        .map(|i| PreparedScenario::new(generate_synthetic_scenario(Template::ALL[i as usize % 3], 5, 500 + i)?))
        .collect::<Result<_, _>>()?;
    let segs = collect_segments(scenarios.iter().flat_map(|p| p.scenario.tracks.iter()), 2);
    let vocab = fit_kdisk_target_k(&segs, 32, 1.0, 0)?.vocab;
    let ds = build_bc_dataset(&scenarios, &vocab, ReferenceInput::Global, 0.2, 0)?;
    println!("{} samples ({} train / {} val)", ds.len(), ds.train.len(), ds.val.len());

    let arch = FusionArch { embed_dim: 32, trunk_dim: 64, ..FusionArch::reference(vocab.len()) };
    let mut net = ReferenceNet::new(arch, ReferenceInput::Global, 1)?;
    let report = bc_train(&mut net, &ds, &BcConfig { epochs: 6, ..BcConfig::default() })?;
    for e in &report.epochs {
        println!(
            "epoch {:>2}  train nll {:.3}  val nll {:.3}  val top-1 {:.3}",
            e.epoch, e.train_nll, e.val_nll, e.val_acc
        );
    }
    Ok(())
}
