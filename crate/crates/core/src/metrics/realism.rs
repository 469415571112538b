use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{PreparedScenario, SubstepRecord};

use super::features::{extract_feature, FeatureCategory, FeatureSpec};
use super::{infraction_rates, min_ade, InfractionRates, RolloutSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFeatureScore {
    pub agent: usize,
    pub feature: String,
    pub score: f64,
    pub valid_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub category: FeatureCategory,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealismReport {
    pub scenario_id: String,
    pub per_agent: Vec<AgentFeatureScore>,
    pub features: Vec<FeatureScore>,
    /// Category scores in [`FeatureCategory::ALL`] order; `None` when no feature of the category is scored.
    pub categories: Vec<(FeatureCategory, Option<f64>)>,
    pub composite: f64,
    pub min_ade: f64,
    pub collision_rate: f64,
    pub offroad_rate: f64,
    pub goal_rate: f64,
    /// Ground-truth values that fell outside a histogram and were clamped.
    pub clamped: usize,
    /// Target agents skipped for lack of valid steps.
    pub excluded_agents: Vec<usize>,
}

pub const REALISM_CSV_HEADER: &str = "scenario_id,feature,category,score";

impl RealismReport {
    pub fn to_csv_rows(&self, out: &mut String) {
        for f in &self.features {
            writeln!(out, "{},{},{},{}", self.scenario_id, f.feature, f.category.name(), f.score)
                .expect("string write");
        }
        for (c, s) in &self.categories {
            if let Some(s) = s {
                writeln!(out, "{},{},category,{}", self.scenario_id, c.name(), s).expect("string write");
            }
        }
        for (name, v) in [
            ("composite", self.composite),
            ("min_ade", self.min_ade),
            ("collision_rate", self.collision_rate),
            ("offroad_rate", self.offroad_rate),
            ("goal_rate", self.goal_rate),
        ] {
            writeln!(out, "{},{},summary,{}", self.scenario_id, name, v).expect("string write");
        }
    }
}

/// Smoothed histogram probability of the bin holding `gt`.
fn smoothed_prob(spec: &FeatureSpec, samples: &[f64], gt_bin: usize) -> f64 {
    let hits = samples.iter().filter(|&&v| spec.bin(v).0 == gt_bin).count() as f64;
    (hits + spec.epsilon) / (samples.len() as f64 + spec.bins() as f64 * spec.epsilon)
}

/// Scores a rollout set against the logged future of its scenario.
///
/// For each target agent, feature and valid step the sampled values form a
/// histogram; the ground-truth value's negative log probability is averaged
/// over valid steps and exponentiated. Per-feature scores average over
/// agents, categories average their features and the composite averages
/// categories.
pub fn realism_score(
    set: &RolloutSet,
    gt: &PreparedScenario,
    gt_records: &[SubstepRecord],
    specs: &[FeatureSpec],
) -> Result<RealismReport> {
    set.check()?;
    if specs.is_empty() {
        return Err(Error::InvalidArgument("no features to score".into()));
    }
    for s in specs {
        s.validate()?;
    }
    if gt_records.len() != set.rollouts[0].len() {
        return Err(Error::Shape(format!(
            "ground truth has {} records, rollouts {}",
            gt_records.len(),
            set.rollouts[0].len()
        )));
    }
    let road = &gt.scenario.road_graph;
    let targets = gt.scenario.controlled_ids();
    let mut per_agent = Vec::new();
    let mut features = Vec::new();
    let mut clamped = 0usize;
    let mut excluded = std::collections::BTreeSet::new();
    let mut samples = Vec::with_capacity(set.len());
    for spec in specs {
        let mut agent_scores = Vec::new();
        for &a in &targets {
            let mut nll = 0.0;
            let mut n = 0usize;
            for t in 1..gt_records.len() {
                let Some(g) = extract_feature(spec.kind, gt_records, t, a, road) else {
                    continue;
                };
                samples.clear();
                samples.extend(set.rollouts.iter().filter_map(|r| extract_feature(spec.kind, r, t, a, road)));
                if samples.is_empty() {
                    continue;
                }
                let (bin, c) = spec.bin(g);
                clamped += c as usize;
                nll -= smoothed_prob(spec, &samples, bin).ln();
                n += 1;
            }
            if n == 0 {
                excluded.insert(a);
                continue;
            }
            let score = (-nll / n as f64).exp();
            agent_scores.push(score);
            per_agent.push(AgentFeatureScore { agent: a, feature: spec.name.clone(), score, valid_steps: n });
        }
        if !agent_scores.is_empty() {
            features.push(FeatureScore {
                feature: spec.name.clone(),
                category: spec.category(),
                score: agent_scores.iter().sum::<f64>() / agent_scores.len() as f64,
            });
        }
    }
    if features.is_empty() {
        return Err(Error::InvalidArgument(format!("scenario {} has nothing to score", set.scenario_id)));
    }
    let categories = category_scores(&features);
    let scored: Vec<f64> = categories.iter().filter_map(|c| c.1).collect();
    let composite = scored.iter().sum::<f64>() / scored.len() as f64;
    let ade = min_ade(set, gt)?;
    let InfractionRates { collision, offroad, goal } = infraction_rates(set, &targets);
    Ok(RealismReport {
        scenario_id: set.scenario_id.clone(),
        per_agent,
        features,
        categories,
        composite,
        min_ade: ade.min_ade,
        collision_rate: collision,
        offroad_rate: offroad,
        goal_rate: goal,
        clamped,
        excluded_agents: excluded.into_iter().collect(),
    })
}

fn category_scores(features: &[FeatureScore]) -> Vec<(FeatureCategory, Option<f64>)> {
    FeatureCategory::ALL
        .iter()
        .map(|&c| {
            let v: Vec<f64> = features.iter().filter(|f| f.category == c).map(|f| f.score).collect();
            (c, (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64))
        })
        .collect()
}

#[cfg(test)]
pub(super) fn category_scores_for_tests(features: &[FeatureScore]) -> Vec<(FeatureCategory, Option<f64>)> {
    category_scores(features)
}

/// Means over scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealismSummary {
    pub scenarios: usize,
    pub features: Vec<FeatureScore>,
    pub categories: Vec<(FeatureCategory, Option<f64>)>,
    pub composite: f64,
    pub min_ade: f64,
    pub collision_rate: f64,
    pub offroad_rate: f64,
    pub goal_rate: f64,
    pub clamped: usize,
}

impl RealismSummary {
    pub fn to_csv(&self, reports: &[RealismReport]) -> String {
        let mut s = String::from(REALISM_CSV_HEADER);
        s.push('\n');
        for r in reports {
            r.to_csv_rows(&mut s);
        }
        for f in &self.features {
            writeln!(s, "all,{},{},{}", f.feature, f.category.name(), f.score).expect("string write");
        }
        for (c, v) in &self.categories {
            if let Some(v) = v {
                writeln!(s, "all,{},category,{}", c.name(), v).expect("string write");
            }
        }
        for (name, v) in [
            ("composite", self.composite),
            ("min_ade", self.min_ade),
            ("collision_rate", self.collision_rate),
            ("offroad_rate", self.offroad_rate),
            ("goal_rate", self.goal_rate),
        ] {
            writeln!(s, "all,{},summary,{}", name, v).expect("string write");
        }
        s
    }
}

pub fn aggregate_reports(reports: &[RealismReport]) -> Result<RealismSummary> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no realism reports to aggregate".into()));
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&RealismReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let mut names: Vec<(String, FeatureCategory)> = Vec::new();
    for r in reports {
        for f in &r.features {
            if !names.iter().any(|(x, _)| *x == f.feature) {
                names.push((f.feature.clone(), f.category));
            }
        }
    }
    let features: Vec<FeatureScore> = names
        .into_iter()
        .map(|(name, category)| {
            let v: Vec<f64> =
                reports.iter().filter_map(|r| r.features.iter().find(|f| f.feature == name).map(|f| f.score)).collect();
            FeatureScore { feature: name, category, score: v.iter().sum::<f64>() / v.len() as f64 }
        })
        .collect();
    Ok(RealismSummary {
        scenarios: reports.len(),
        categories: category_scores(&features),
        features,
        composite: mean(|r| r.composite),
        min_ade: mean(|r| r.min_ade),
        collision_rate: mean(|r| r.collision_rate),
        offroad_rate: mean(|r| r.offroad_rate),
        goal_rate: mean(|r| r.goal_rate),
        clamped: reports.iter().map(|r| r.clamped).sum(),
    })
}
