//! A small planner score matrix under all three background strategies and the
//! cross-strategy correlations.

use std::sync::Arc;

use anchorplay::harness::{
    correlation_stats, planner_eval_matrix, EvalContext, EvalPlanner, EvalStrategy, PlannerKind,
};
use anchorplay::planners::{frenet_presets, idm_presets, PdmWeights};
use anchorplay::policy::{FusionArch, PolicyNet, ReferenceInput, ReferenceNet};
use anchorplay::scenario::{generate_synthetic_scenario, Template};
use anchorplay::sim::{PreparedScenario, SimConfig};
use anchorplay::tokenizer::{collect_segments, fit_kdisk_target_k};

fn main() -> anchorplay::error::Result<()> {
    let scenarios: Vec<_> = (0..3u64)
        .map(|i| PreparedScenario::new(generate_synthetic_scenario(Template::ALL[i as usize], 5, 30 + i)?))
        .collect::<Result<_, _>>()?;
    let segs = collect_segments(scenarios.iter().flat_map(|p| p.scenario.tracks.iter()), 2);
    let vocab = fit_kdisk_target_k(&segs, 32, 1.0, 0)?.vocab;
    let reference = ReferenceNet::new(FusionArch::reference(vocab.len()), ReferenceInput::Global, 1)?;
    let policy = PolicyNet::new(FusionArch::policy(vocab.len()), 2)?;

    let mut planners: Vec<EvalPlanner> = idm_presets()
        .into_iter()
        .take(3)
        .map(|(n, p)| EvalPlanner { name: format!("idm/{n}"), kind: PlannerKind::Idm(p) })
        .collect();
    planners.extend(
        frenet_presets()
            .into_iter()
            .take(2)
            .map(|(n, p)| EvalPlanner { name: format!("frenet/{n}"), kind: PlannerKind::Frenet(p) }),
    );
    planners.push(EvalPlanner { name: "policy/untrained".into(), kind: PlannerKind::Policy(Arc::new(policy.clone())) });
    planners.push(EvalPlanner { name: "max-brake".into(), kind: PlannerKind::MaxBrake });

    let ctx = EvalContext {
        vocab: &vocab,
        reference: Some(&reference),
        background_policy: Some(&policy),
        sim: SimConfig::default(),
        weights: PdmWeights::default(),
    };
    let m = planner_eval_matrix(&planners, &scenarios, &EvalStrategy::ALL, &ctx, 0, None)?;
    print!("{}", m.to_csv());
    for (a, b) in [
        (EvalStrategy::LogReplay, EvalStrategy::ReferenceRollout),
        (EvalStrategy::LogReplay, EvalStrategy::PolicyRollout),
    ] {
        let r = correlation_stats(&m, a, b)?;
        for row in r.csv_rows() {
            println!("{row}");
        }
    }
    Ok(())
}
