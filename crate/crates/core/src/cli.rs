//! Command-line front end. Every subcommand reads its inputs, validates them
//! together with the JSON config, and only then creates the output directory
//! and echoes the effective configuration into it.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{
    correlation_stats, paired_bench, planner_eval_matrix, CorrelationReport, EvalContext, EvalPlanner, EvalStrategy,
    PlannerKind,
};
use crate::metrics::{aggregate_reports, evaluate_controller, log_rollout, simulate_rollout_set, FeatureSpec};
use crate::nn::Checkpoint;
use crate::planners::{frenet_presets, idm_presets, PdmWeights};
use crate::policy::{
    bc_train, build_bc_dataset, BcConfig, Controller, FusionArch, PolicyNet, ReferenceInput, ReferenceNet, SampleMode,
};
use crate::rng::derive_seed;
use crate::scenario::{generate_synthetic_scenario, read_scenario, read_scenario_dir, write_scenario, Template};
use crate::sim::{worker_pool, write_rollout_csv, PreparedScenario, SimConfig};
use crate::tokenizer::{
    collect_segments, fit_kdisk, fit_kdisk_target_k, TokenVocab, DEFAULT_DISTANCE_LAMBDA, DEFAULT_TOKEN_HORIZON,
};
use crate::trainer::{train, TrainConfig, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// File written into every output directory before any work starts.
pub const CONFIG_ECHO: &str = "run_config.json";

#[derive(Debug, Parser)]
#[command(name = "anchorplay", version, about = "Reference-anchored self-play for traffic agents")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// JSON config for the subcommand; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for all randomness in the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel stages; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenarios.
    GenData {
        /// straight, curve, intersection or mixed.
        #[arg(long)]
        template: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        agents: Option<usize>,
    },
    /// Fit a motion-token vocabulary to expert tracks.
    FitVocab {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Behavior-clone the frozen reference model.
    TrainRef {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
    },
    /// Self-play PPO against the reference.
    Train {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Continue from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Realism metrics of a policy or reference checkpoint.
    EvalRealism {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Planner score matrix and cross-strategy correlations.
    EvalPlanners {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Policy driving background traffic under policy_rollout.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Trained policies evaluated as ego planners (repeatable).
        #[arg(long = "planner-checkpoint")]
        planner_checkpoints: Vec<PathBuf>,
    },
    /// Throughput of policy and reference controllers.
    Bench {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Per-step CSV of rollouts, or of log replay without a checkpoint.
    RolloutDump {
        /// A scenario file or a directory of them.
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenDataConfig {
    /// `None` cycles through all templates.
    pub template: Option<Template>,
    pub n: usize,
    pub agents: usize,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self { template: None, n: 50, agents: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitVocabConfig {
    /// Target vocabulary size; ignored when `radius` is set.
    pub k: usize,
    /// Fixed matching radius instead of a K target.
    pub radius: Option<f64>,
    pub k_max: usize,
    pub horizon: usize,
    pub lambda: f64,
}

impl Default for FitVocabConfig {
    fn default() -> Self {
        Self { k: 64, radius: None, k_max: 1024, horizon: DEFAULT_TOKEN_HORIZON, lambda: DEFAULT_DISTANCE_LAMBDA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainRefConfig {
    pub input: ReferenceInput,
    pub val_fraction: f64,
    pub embed_dim: Option<usize>,
    pub trunk_dim: Option<usize>,
    pub bc: BcConfig,
}

impl Default for TrainRefConfig {
    fn default() -> Self {
        Self {
            input: ReferenceInput::Global,
            val_fraction: 0.2,
            embed_dim: None,
            trunk_dim: None,
            bc: BcConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RealismConfig {
    pub sim: SimConfig,
    pub rollouts: usize,
    pub sample_mode: SampleMode,
    pub max_scenarios: Option<usize>,
    /// Feature histograms; the built-in set when absent.
    pub features: Option<Vec<FeatureSpec>>,
}

impl Default for RealismConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            rollouts: 16,
            sample_mode: SampleMode::Sample,
            max_scenarios: None,
            features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalPlannersConfig {
    pub sim: SimConfig,
    pub weights: PdmWeights,
    pub strategies: Vec<EvalStrategy>,
    pub idm_presets: bool,
    pub frenet_presets: bool,
    pub max_scenarios: Option<usize>,
}

impl Default for EvalPlannersConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            weights: PdmWeights::default(),
            strategies: EvalStrategy::ALL.to_vec(),
            idm_presets: true,
            frenet_presets: true,
            max_scenarios: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchCliConfig {
    pub sim: SimConfig,
    pub n_worlds: usize,
    pub episodes: usize,
    pub warmup: usize,
    pub n_seeds: usize,
}

impl Default for BenchCliConfig {
    fn default() -> Self {
        Self { sim: SimConfig::default(), n_worlds: 8, episodes: 2, warmup: 1, n_seeds: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DumpConfig {
    pub sim: SimConfig,
    pub sample_mode: SampleMode,
}

impl Default for DumpConfig {
    fn default() -> Self {
        Self { sim: SimConfig::default(), sample_mode: SampleMode::Sample }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| Error::MissingInput(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingInput(format!("{what} not found at {}", path.display())))
    }
}

fn out_dir(g: &GlobalArgs) -> Result<&Path> {
    g.out.as_deref().ok_or_else(|| Error::Config("--out is required".into()))
}

/// Creates the output directory and records the effective run configuration.
fn start_output<C: Serialize>(g: &GlobalArgs, command: &str, inputs: serde_json::Value, config: &C) -> Result<PathBuf> {
    let out = out_dir(g)?.to_path_buf();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let echo = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": g.seed,
        "workers": g.workers,
        "inputs": inputs,
        "config": config,
    });
    let path = out.join(CONFIG_ECHO);
    let text = serde_json::to_string_pretty(&echo).map_err(|e| Error::Invariant(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_scenarios(path: &Path, limit: Option<usize>) -> Result<Vec<Arc<PreparedScenario>>> {
    require(path, "scenario directory")?;
    let list = if path.is_dir() { read_scenario_dir(path)? } else { vec![read_scenario(path)?] };
    if list.is_empty() {
        return Err(Error::MissingInput(format!("no scenarios in {}", path.display())));
    }
    list.into_iter().take(limit.unwrap_or(usize::MAX)).map(PreparedScenario::new).collect()
}

fn load_vocab(path: &Path) -> Result<TokenVocab> {
    require(path, "vocabulary")?;
    TokenVocab::load(path)
}

fn load_reference(path: &Path, vocab: &TokenVocab) -> Result<ReferenceNet> {
    require(path, "reference checkpoint")?;
    let r = ReferenceNet::load(path)?;
    if r.num_tokens() != vocab.len() {
        return Err(Error::Config(format!(
            "reference has {} tokens but the vocabulary has {}",
            r.num_tokens(),
            vocab.len()
        )));
    }
    Ok(r)
}

fn load_policy(path: &Path, vocab: &TokenVocab) -> Result<PolicyNet> {
    require(path, "policy checkpoint")?;
    let p = PolicyNet::load(path)?;
    if p.num_tokens() != vocab.len() {
        return Err(Error::Config(format!(
            "policy has {} tokens but the vocabulary has {}",
            p.num_tokens(),
            vocab.len()
        )));
    }
    Ok(p)
}

enum AnyController {
    Policy(PolicyNet),
    Reference(ReferenceNet),
}

impl AnyController {
    fn load(path: &Path, vocab: &TokenVocab) -> Result<Self> {
        require(path, "checkpoint")?;
        let ck = Checkpoint::load(path)?;
        let c = match ck.kind.as_str() {
            "policy" => AnyController::Policy(PolicyNet::from_checkpoint(&ck)?),
            "reference" => AnyController::Reference(ReferenceNet::from_checkpoint(&ck)?),
            other => return Err(Error::Config(format!("checkpoint kind '{other}' cannot drive agents"))),
        };
        if c.controller().num_tokens() != vocab.len() {
            return Err(Error::Config("checkpoint and vocabulary disagree on the token count".into()));
        }
        Ok(c)
    }

    fn controller(&self) -> Controller<'_> {
        match self {
            AnyController::Policy(p) => Controller::Policy(p),
            AnyController::Reference(r) => Controller::Reference(r),
        }
    }
}

fn pool(g: &GlobalArgs) -> Result<rayon::ThreadPool> {
    if g.workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    worker_pool(g.workers)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Invariant(e.to_string()))
}

fn execute(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let cfg_path = g.config.as_deref();
    match &cli.command {
        Command::GenData { template, n, agents } => {
            let mut cfg: GenDataConfig = load_config(cfg_path)?;
            match template.as_deref() {
                None => {}
                Some("mixed") => cfg.template = None,
                Some(t) => cfg.template = Some(t.parse()?),
            }
            cfg.n = n.unwrap_or(cfg.n);
            cfg.agents = agents.unwrap_or(cfg.agents);
            if cfg.n == 0 || cfg.agents == 0 {
                return Err(Error::Config("n and agents must be positive".into()));
            }
            out_dir(g)?;
            let scenarios = (0..cfg.n)
                .map(|i| {
                    let t = cfg.template.unwrap_or(Template::ALL[i % Template::ALL.len()]);
                    generate_synthetic_scenario(t, cfg.agents, derive_seed(g.seed, &[i as u64]))
                })
                .collect::<Result<Vec<_>>>()?;
            let out = start_output(g, "gen-data", serde_json::json!({}), &cfg)?;
            let dir = out.join("scenarios");
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (i, s) in scenarios.iter().enumerate() {
                write_scenario(&dir.join(format!("scenario_{i:05}.json")), s)?;
            }
            println!("wrote {} scenarios to {}", scenarios.len(), dir.display());
        }
        Command::FitVocab { scenarios, k } => {
            let mut cfg: FitVocabConfig = load_config(cfg_path)?;
            cfg.k = k.unwrap_or(cfg.k);
            out_dir(g)?;
            let scen = load_scenarios(scenarios, None)?;
            let segs = collect_segments(scen.iter().flat_map(|p| p.scenario.tracks.iter()), cfg.horizon);
            let rep = match cfg.radius {
                Some(r) => fit_kdisk(&segs, r, cfg.k_max, cfg.lambda, g.seed)?,
                None => fit_kdisk_target_k(&segs, cfg.k, cfg.lambda, g.seed)?,
            };
            let out = start_output(g, "fit-vocab", serde_json::json!({ "scenarios": scenarios }), &cfg)?;
            rep.vocab.save(&out.join("vocab.json"))?;
            let summary = serde_json::json!({
                "tokens": rep.vocab.len(),
                "radius": rep.vocab.radius,
                "coverage": rep.coverage,
                "segments": segs.len(),
            });
            write_text(&out.join("fit_report.json"), &to_json(&summary)?)?;
            println!("{} tokens, radius {:.4}, coverage {:.4}", rep.vocab.len(), rep.vocab.radius, rep.coverage);
        }
        Command::TrainRef { scenarios, vocab } => {
            let mut cfg: TrainRefConfig = load_config(cfg_path)?;
            cfg.bc.seed = derive_seed(g.seed, &[0xbc]);
            out_dir(g)?;
            let vocab_v = load_vocab(vocab)?;
            let scen = load_scenarios(scenarios, None)?;
            let mut arch = FusionArch::reference(vocab_v.len());
            arch.embed_dim = cfg.embed_dim.unwrap_or(arch.embed_dim);
            arch.trunk_dim = cfg.trunk_dim.unwrap_or(arch.trunk_dim);
            let mut net = ReferenceNet::new(arch, cfg.input, derive_seed(g.seed, &[0x4ef]))?;
            let ds = build_bc_dataset(&scen, &vocab_v, cfg.input, cfg.val_fraction, g.seed)?;
            let out =
                start_output(g, "train-ref", serde_json::json!({ "scenarios": scenarios, "vocab": vocab }), &cfg)?;
            let rep = bc_train(&mut net, &ds, &cfg.bc)?;
            net.to_checkpoint().save(&out.join("reference.json"))?;
            rep.write_csv(&out.join("bc_report.csv"))?;
            let last = rep.final_row();
            println!("val top-1 {:.4}, val nll {:.4}", last.val_acc, last.val_nll);
        }
        Command::Train { scenarios, vocab, reference, resume } => {
            let cfg: TrainConfig = load_config(cfg_path)?;
            cfg.validate()?;
            out_dir(g)?;
            let vocab_v = load_vocab(vocab)?;
            let reference_v = load_reference(reference, &vocab_v)?;
            let scen = load_scenarios(scenarios, None)?;
            let mut trainer = match resume {
                Some(path) => {
                    require(path, "training checkpoint")?;
                    let mut t = Trainer::from_checkpoint(&Checkpoint::load(path)?)?;
                    if cfg_path.is_some() {
                        if cfg.ppo.total_env_steps < t.env_steps {
                            return Err(Error::Config("step budget is below the checkpoint's progress".into()));
                        }
                        t.config.ppo.total_env_steps = cfg.ppo.total_env_steps;
                    }
                    t
                }
                None => Trainer::new(cfg, vocab_v.len(), g.seed)?,
            };
            let inputs =
                serde_json::json!({ "scenarios": scenarios, "vocab": vocab, "reference": reference, "resume": resume });
            let out = start_output(g, "train", inputs, &trainer.config)?;
            let pool = pool(g)?;
            train(&mut trainer, &reference_v, &vocab_v, &scen, &out, Some(&pool))?;
            if let Some(r) = trainer.report.rows.last() {
                println!("{} updates, {} env steps, final kl {:.4}", trainer.update, trainer.env_steps, r.kl);
            }
        }
        Command::EvalRealism { scenarios, vocab, checkpoint } => {
            let cfg: RealismConfig = load_config(cfg_path)?;
            cfg.sim.validate()?;
            if cfg.rollouts < 2 {
                return Err(Error::Config("rollouts must be at least 2".into()));
            }
            let specs = cfg.features.clone().unwrap_or_else(FeatureSpec::defaults);
            for s in &specs {
                s.validate()?;
            }
            out_dir(g)?;
            let vocab_v = load_vocab(vocab)?;
            let ctl = AnyController::load(checkpoint, &vocab_v)?;
            let scen = load_scenarios(scenarios, cfg.max_scenarios)?;
            let inputs = serde_json::json!({ "scenarios": scenarios, "vocab": vocab, "checkpoint": checkpoint });
            let out = start_output(g, "eval-realism", inputs, &cfg)?;
            let pool = pool(g)?;
            let reports = evaluate_controller(
                ctl.controller(),
                &scen,
                &vocab_v,
                &cfg.sim,
                cfg.rollouts,
                cfg.sample_mode,
                &specs,
                g.seed,
                Some(&pool),
            )?;
            let summary = aggregate_reports(&reports)?;
            write_text(&out.join("realism.csv"), &summary.to_csv(&reports))?;
            write_text(&out.join("realism_summary.json"), &to_json(&summary)?)?;
            println!(
                "composite {:.4}, minADE {:.3}, collision {:.3}, offroad {:.3}",
                summary.composite, summary.min_ade, summary.collision_rate, summary.offroad_rate
            );
        }
        Command::EvalPlanners { scenarios, vocab, reference, policy, planner_checkpoints } => {
            let cfg: EvalPlannersConfig = load_config(cfg_path)?;
            cfg.sim.validate()?;
            if cfg.strategies.is_empty() {
                return Err(Error::Config("at least one strategy is required".into()));
            }
            out_dir(g)?;
            let vocab = vocab.as_deref().ok_or_else(|| Error::MissingInput("eval-planners needs --vocab".into()))?;
            let vocab_v = load_vocab(vocab)?;
            let needs = |s: EvalStrategy| cfg.strategies.contains(&s);
            let reference_v = match reference {
                Some(p) => Some(load_reference(p, &vocab_v)?),
                None if needs(EvalStrategy::ReferenceRollout) => {
                    return Err(Error::MissingInput("reference_rollout needs --reference".into()))
                }
                None => None,
            };
            let policy_v = match policy {
                Some(p) => Some(load_policy(p, &vocab_v)?),
                None if needs(EvalStrategy::PolicyRollout) => {
                    return Err(Error::MissingInput("policy_rollout needs --policy".into()))
                }
                None => None,
            };
            let mut planners = Vec::new();
            if cfg.idm_presets {
                planners.extend(
                    idm_presets()
                        .into_iter()
                        .map(|(name, p)| EvalPlanner { name: format!("idm/{name}"), kind: PlannerKind::Idm(p) }),
                );
            }
            if cfg.frenet_presets {
                planners.extend(
                    frenet_presets()
                        .into_iter()
                        .map(|(name, p)| EvalPlanner { name: format!("frenet/{name}"), kind: PlannerKind::Frenet(p) }),
                );
            }
            for path in planner_checkpoints {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                planners.push(EvalPlanner {
                    name: format!("policy/{stem}"),
                    kind: PlannerKind::Policy(Arc::new(load_policy(path, &vocab_v)?)),
                });
            }
            if planners.is_empty() {
                return Err(Error::Config("no planners selected".into()));
            }
            let scen = load_scenarios(scenarios, cfg.max_scenarios)?;
            let inputs = serde_json::json!({
                "scenarios": scenarios, "vocab": vocab, "reference": reference,
                "policy": policy, "planner_checkpoints": planner_checkpoints,
            });
            let out = start_output(g, "eval-planners", inputs, &cfg)?;
            let ctx = EvalContext {
                vocab: &vocab_v,
                reference: reference_v.as_ref(),
                background_policy: policy_v.as_ref(),
                sim: cfg.sim,
                weights: cfg.weights,
            };
            let pool = pool(g)?;
            let m = planner_eval_matrix(&planners, &scen, &cfg.strategies, &ctx, g.seed, Some(&pool))?;
            write_text(&out.join("score_matrix.csv"), &m.to_csv())?;
            let mut reports: Vec<CorrelationReport> = Vec::new();
            for (i, &a) in cfg.strategies.iter().enumerate() {
                for &b in &cfg.strategies[i + 1..] {
                    match correlation_stats(&m, a, b) {
                        Ok(r) => reports.push(r),
                        Err(e) => eprintln!("skipping {} vs {}: {e}", a.name(), b.name()),
                    }
                }
            }
            write_text(&out.join("correlations.csv"), &CorrelationReport::to_csv(&reports))?;
            println!("{} cells, {} failed", m.cells.len(), m.failures());
        }
        Command::Bench { scenarios, vocab, reference, policy } => {
            let cfg: BenchCliConfig = load_config(cfg_path)?;
            cfg.sim.validate()?;
            if cfg.n_seeds < 3 {
                return Err(Error::Config("n_seeds must be at least 3".into()));
            }
            out_dir(g)?;
            let vocab_v = load_vocab(vocab)?;
            let reference_v = load_reference(reference, &vocab_v)?;
            let policy_v = load_policy(policy, &vocab_v)?;
            let scen = load_scenarios(scenarios, None)?;
            let inputs =
                serde_json::json!({ "scenarios": scenarios, "vocab": vocab, "reference": reference, "policy": policy });
            let out = start_output(g, "bench", inputs, &cfg)?;
            let seeds: Vec<u64> = (0..cfg.n_seeds as u64).map(|i| derive_seed(g.seed, &[i])).collect();
            let pool = pool(g)?;
            let report = paired_bench(
                Controller::Policy(&policy_v),
                Controller::Reference(&reference_v),
                &scen,
                &vocab_v,
                &cfg.sim,
                cfg.n_worlds,
                cfg.episodes,
                cfg.warmup,
                &seeds,
                Some(&pool),
            )?;
            write_text(&out.join("bench.txt"), &format!("{report}\n"))?;
            write_text(&out.join("bench.json"), &to_json(&report)?)?;
            println!("{report}");
        }
        Command::RolloutDump { scenarios, vocab, checkpoint } => {
            let cfg: DumpConfig = load_config(cfg_path)?;
            cfg.sim.validate()?;
            out_dir(g)?;
            let vocab_v = load_vocab(vocab)?;
            let ctl = checkpoint.as_deref().map(|p| AnyController::load(p, &vocab_v)).transpose()?;
            let scen = load_scenarios(scenarios, None)?;
            let inputs = serde_json::json!({ "scenarios": scenarios, "vocab": vocab, "checkpoint": checkpoint });
            let out = start_output(g, "rollout-dump", inputs, &cfg)?;
            for (k, p) in scen.iter().enumerate() {
                let records = match &ctl {
                    None => log_rollout(p, &vocab_v, &cfg.sim)?,
                    Some(c) => {
                        // Two seeds are required for a rollout set; only the first is written.
                        let seeds = [derive_seed(g.seed, &[k as u64, 0]), derive_seed(g.seed, &[k as u64, 1])];
                        let mut set =
                            simulate_rollout_set(c.controller(), p, &vocab_v, &cfg.sim, &seeds, cfg.sample_mode)?;
                        set.rollouts.swap_remove(0)
                    }
                };
                write_rollout_csv(&out.join(format!("{}.csv", p.scenario.id)), &p.scenario.id, &records)?;
            }
            println!("dumped {} rollouts to {}", scen.len(), out.display());
        }
    }
    Ok(())
}
