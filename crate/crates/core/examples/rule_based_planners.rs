//! Every IDM and Frenet preset drives the ego of one scenario against logged
//! traffic; each run gets a PDM score.

use anchorplay::harness::{ego_index, run_episode, EvalContext, EvalPlanner, EvalStrategy, PlannerKind};
use anchorplay::planners::{frenet_presets, idm_presets, pdm_score, PdmWeights};
use anchorplay::scenario::{generate_synthetic_scenario, Template};
use anchorplay::sim::{PreparedScenario, SimConfig};
use anchorplay::tokenizer::{collect_segments, fit_kdisk_target_k};

fn main() -> anchorplay::error::Result<()> {
    let p = PreparedScenario::new(generate_synthetic_scenario(Template::Straight, 6, 11)?)?;
    let segs = collect_segments(p.scenario.tracks.iter(), 2);
    let vocab = fit_kdisk_target_k(&segs, 16, 1.0, 0)?.vocab;
    let ctx = EvalContext {
        vocab: &vocab,
        reference: None,
        background_policy: None,
        sim: SimConfig::default(),
        weights: PdmWeights::default(),
    };
    let planners = idm_presets()
        .into_iter()
        .map(|(n, p)| EvalPlanner { name: format!("idm/{n}"), kind: PlannerKind::Idm(p) })
        .chain(
            frenet_presets()
                .into_iter()
                .map(|(n, p)| EvalPlanner { name: format!("frenet/{n}"), kind: PlannerKind::Frenet(p) }),
        );
    let ego = ego_index(&p)?;
    println!("{:<34} score  progress ttc  comfort", "planner");
    for planner in planners {
        let records = run_episode(&planner, EvalStrategy::LogReplay, &p, &ctx, 0)?;
        let b = pdm_score(&records, ego, &p.scenario, &ctx.weights)?;
        println!("{:<34} {:.3}  {:.3}    {:.3} {:.3}", planner.name, b.score, b.progress, b.ttc, b.comfort);
    }
    Ok(())
}
