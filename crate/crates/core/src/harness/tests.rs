use rand::Rng as _;

use super::*;
use crate::policy::FusionArch;
use crate::policy::ReferenceInput;
use crate::rng::rng_from;
use crate::scenario::{generate_synthetic_scenario, Template};
use crate::tokenizer::{collect_segments, fit_kdisk_target_k};

struct Fixture {
    scenarios: Vec<Arc<PreparedScenario>>,
    vocab: TokenVocab,
    reference: ReferenceNet,
    policy: PolicyNet,
}

fn arch(k: usize, with_critic: bool) -> FusionArch {
    FusionArch { embed_dim: 8, trunk_dim: 8, num_tokens: k, with_critic, dropout: 0.0 }
}

fn fixture(n: u64) -> Fixture {
    let scenarios: Vec<_> = (0..n)
        .map(|i| {
            PreparedScenario::new(generate_synthetic_scenario(Template::ALL[i as usize % 3], 4, 70 + i).unwrap())
                .unwrap()
        })
        .collect();
    let segs = collect_segments(scenarios.iter().flat_map(|p| p.scenario.tracks.iter()), 2);
    let vocab = fit_kdisk_target_k(&segs, 12, 1.0, 0).unwrap().vocab;
    let reference = ReferenceNet::new(arch(vocab.len(), false), ReferenceInput::Global, 3).unwrap();
    let policy = PolicyNet::new(arch(vocab.len(), true), 4).unwrap();
    Fixture { scenarios, vocab, reference, policy }
}

fn ctx(fx: &Fixture) -> EvalContext<'_> {
    EvalContext {
        vocab: &fx.vocab,
        reference: Some(&fx.reference),
        background_policy: Some(&fx.policy),
        sim: SimConfig::default(),
        weights: PdmWeights::default(),
    }
}

fn idm(name: &str) -> EvalPlanner {
    EvalPlanner { name: name.into(), kind: PlannerKind::Idm(IdmParams::default()) }
}

#[test]
fn single_log_replay_cell_keeps_background_on_log() {
    let fx = fixture(1);
    let m =
        planner_eval_matrix(&[idm("idm")], &fx.scenarios[..1], &[EvalStrategy::LogReplay], &ctx(&fx), 5, None).unwrap();
    assert_eq!(m.cells.len(), 1);
    assert!(m.is_complete());
    assert!(matches!(m.cells[0].outcome, CellOutcome::Scored(_)));

    let recs = run_episode(&idm("idm"), EvalStrategy::LogReplay, &fx.scenarios[0], &ctx(&fx), 5).unwrap();
    let s = &fx.scenarios[0].scenario;
    let ego = ego_index(&fx.scenarios[0]).unwrap();
    for r in &recs {
        for (i, a) in r.agents.iter().enumerate() {
            if i != ego && a.valid {
                assert_eq!(a.pose, s.tracks[i].states[r.step].pose);
            }
        }
    }
}

#[test]
fn duplicate_planner_rows_match_and_reruns_agree() {
    let fx = fixture(2);
    let planners = [
        idm("a"),
        EvalPlanner { name: "policy".into(), kind: PlannerKind::Policy(Arc::new(fx.policy.clone())) },
        idm("b"),
    ];
    let run = || planner_eval_matrix(&planners, &fx.scenarios, &EvalStrategy::ALL, &ctx(&fx), 9, None).unwrap();
    let m = run();
    assert!(m.is_complete());
    assert_eq!(m.failures(), 0);
    for st in EvalStrategy::ALL {
        for k in 0..2 {
            assert_eq!(m.get(0, st, k).unwrap().outcome, m.get(2, st, k).unwrap().outcome);
        }
    }
    let pool = crate::sim::worker_pool(3).unwrap();
    let again = planner_eval_matrix(&planners, &fx.scenarios, &EvalStrategy::ALL, &ctx(&fx), 9, Some(&pool)).unwrap();
    assert_eq!(m, again);
    assert_eq!(m.to_csv(), again.to_csv());
}

#[test]
fn max_brake_makes_no_progress() {
    let fx = fixture(3);
    let brake = EvalPlanner { name: "brake".into(), kind: PlannerKind::MaxBrake };
    let m = planner_eval_matrix(&[brake], &fx.scenarios, &EvalStrategy::ALL, &ctx(&fx), 1, None).unwrap();
    for c in &m.cells {
        let CellOutcome::Scored(b) = &c.outcome else { panic!("cell failed") };
        assert!(b.progress < 0.15, "progress {}", b.progress);
    }
}

#[test]
fn missing_background_controller_is_a_marked_failure() {
    let fx = fixture(1);
    let c = EvalContext { reference: None, ..ctx(&fx) };
    let m = planner_eval_matrix(&[idm("idm")], &fx.scenarios, &EvalStrategy::ALL, &c, 1, None).unwrap();
    assert!(m.is_complete());
    assert_eq!(m.failures(), 1);
    let failed = m.get(0, EvalStrategy::ReferenceRollout, 0).unwrap();
    assert!(matches!(failed.outcome, CellOutcome::Failed(_)));
    assert!(m.to_csv().contains(",failed: "));
}

fn matrix_from(scores: &[[f64; 2]]) -> ScoreMatrix {
    let mut cells = Vec::new();
    for (p, pair) in scores.iter().enumerate() {
        for (j, st) in [EvalStrategy::LogReplay, EvalStrategy::PolicyRollout].into_iter().enumerate() {
            cells.push(Cell {
                planner: p,
                strategy: st,
                scenario: 0,
                outcome: CellOutcome::Scored(PdmBreakdown {
                    no_collision: true,
                    drivable: true,
                    progress: pair[j],
                    ttc: 1.0,
                    comfort: 1.0,
                    score: pair[j],
                }),
            });
        }
    }
    ScoreMatrix {
        planners: (0..scores.len()).map(|p| format!("p{p}")).collect(),
        strategies: vec![EvalStrategy::LogReplay, EvalStrategy::PolicyRollout],
        scenarios: vec!["s".into()],
        cells,
    }
}

#[test]
fn self_and_negated_correlation() {
    let x = [0.3, 0.9, 0.1, 0.5, 0.7];
    let m = matrix_from(&x.map(|v| [v, v]));
    let r = correlation_stats(&m, EvalStrategy::LogReplay, EvalStrategy::LogReplay).unwrap();
    let score = r.metric("score").unwrap();
    assert!((score.pearson.unwrap() - 1.0).abs() < 1e-12);
    assert!((score.spearman.unwrap() - 1.0).abs() < 1e-12);
    // Constant sub-metrics are undefined, not NaN.
    assert_eq!(r.metric("ttc").unwrap().pearson, None);
    assert!(r.csv_rows().iter().any(|l| l.ends_with("undefined,undefined")));

    let m = matrix_from(&x.map(|v| [v, -v]));
    let r = correlation_stats(&m, EvalStrategy::LogReplay, EvalStrategy::PolicyRollout).unwrap();
    assert!((r.metric("score").unwrap().pearson.unwrap() + 1.0).abs() < 1e-12);
    assert!((r.metric("score").unwrap().spearman.unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn correlation_needs_three_planners() {
    let m = matrix_from(&[[0.1, 0.2], [0.3, 0.4]]);
    assert!(correlation_stats(&m, EvalStrategy::LogReplay, EvalStrategy::PolicyRollout).is_err());
}

fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn textbook_spearman_distinct(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> { v.iter().map(|a| 1.0 + v.iter().filter(|b| *b < a).count() as f64).collect() };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn correlation_matches_textbook_formulas() {
    let mut rng = rng_from(33);
    for _ in 0..50 {
        let pairs: Vec<[f64; 2]> = (0..10).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let m = matrix_from(&pairs);
        let r = correlation_stats(&m, EvalStrategy::LogReplay, EvalStrategy::PolicyRollout).unwrap();
        let x: Vec<f64> = pairs.iter().map(|p| p[0]).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p[1]).collect();
        let s = r.metric("score").unwrap();
        assert!((s.pearson.unwrap() - textbook_pearson(&x, &y)).abs() < 1e-12);
        assert!((s.spearman.unwrap() - textbook_spearman_distinct(&x, &y)).abs() < 1e-12);
    }
}

#[test]
fn tied_ranks_are_averaged() {
    assert_eq!(stats::average_ranks(&[2.0, 1.0, 2.0, 3.0]), vec![2.5, 1.0, 2.5, 4.0]);
}

#[test]
fn tiny_bench_reports_positive_rate() {
    let fx = fixture(2);
    let sim = SimConfig::default();
    let r = throughput_bench(
        "policy",
        Controller::Policy(&fx.policy),
        &fx.scenarios,
        &fx.vocab,
        &sim,
        2,
        2,
        1,
        &[1, 2, 3],
        None,
    )
    .unwrap();
    assert!(r.scenarios_per_sec.is_finite() && r.scenarios_per_sec > 0.0);
    assert!(r.scenarios_per_sec_std >= 0.0);
    assert!(r.agent_steps_per_sec > 0.0);
    assert_eq!(r.per_seed.len(), 3);
    assert_eq!(r.config.policy_hz, 5.0);
    assert!(r.to_string().contains("scenarios/sec"));
    assert!(throughput_bench(
        "p",
        Controller::Policy(&fx.policy),
        &fx.scenarios,
        &fx.vocab,
        &sim,
        2,
        2,
        0,
        &[1, 2],
        None
    )
    .is_err());
}
