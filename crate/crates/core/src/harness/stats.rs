use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planners::PdmBreakdown;

use super::{CellOutcome, EvalStrategy, ScoreMatrix};

/// Pearson correlation, or `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCorrelation {
    pub metric: String,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub strategy_a: EvalStrategy,
    pub strategy_b: EvalStrategy,
    pub planners: Vec<String>,
    pub metrics: Vec<MetricCorrelation>,
}

pub const CORRELATION_CSV_HEADER: &str = "strategy_a,strategy_b,metric,n_planners,pearson,spearman";

impl CorrelationReport {
    pub fn metric(&self, name: &str) -> Option<&MetricCorrelation> {
        self.metrics.iter().find(|m| m.metric == name)
    }

    pub fn csv_rows(&self) -> Vec<String> {
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| v.to_string());
        self.metrics
            .iter()
            .map(|m| {
                format!(
                    "{},{},{},{},{},{}",
                    self.strategy_a.name(),
                    self.strategy_b.name(),
                    m.metric,
                    self.planners.len(),
                    fmt(m.pearson),
                    fmt(m.spearman)
                )
            })
            .collect()
    }

    pub fn to_csv(reports: &[CorrelationReport]) -> String {
        let mut s = String::from(CORRELATION_CSV_HEADER);
        s.push('\n');
        for r in reports {
            for row in r.csv_rows() {
                s.push_str(&row);
                s.push('\n');
            }
        }
        s
    }
}

const METRICS: [(&str, fn(&PdmBreakdown) -> f64); 6] = [
    ("score", |b| b.score),
    ("progress", |b| b.progress),
    ("ttc", |b| b.ttc),
    ("comfort", |b| b.comfort),
    ("no_collision", |b| b.no_collision as u8 as f64),
    ("drivable", |b| b.drivable as u8 as f64),
];

/// Per-planner means over scenarios, for planners scored on every scenario.
fn planner_means(m: &ScoreMatrix, st: EvalStrategy, planner: usize) -> Option<Vec<f64>> {
    let mut sums = [0.0; METRICS.len()];
    for k in 0..m.scenarios.len() {
        match &m.get(planner, st, k)?.outcome {
            CellOutcome::Scored(b) => {
                for (s, (_, f)) in sums.iter_mut().zip(METRICS) {
                    *s += f(b);
                }
            }
            CellOutcome::Failed(_) => return None,
        }
    }
    Some(sums.iter().map(|s| s / m.scenarios.len() as f64).collect())
}

/// Pearson and Spearman correlation across planners of scenario-averaged
/// scores, for the composite score and each sub-metric.
pub fn correlation_stats(m: &ScoreMatrix, a: EvalStrategy, b: EvalStrategy) -> Result<CorrelationReport> {
    let mut names = Vec::new();
    let mut xa = Vec::new();
    let mut xb = Vec::new();
    for p in 0..m.planners.len() {
        if let (Some(ma), Some(mb)) = (planner_means(m, a, p), planner_means(m, b, p)) {
            names.push(m.planners[p].clone());
            xa.push(ma);
            xb.push(mb);
        }
    }
    if names.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 3 planners scored under both {} and {}, found {}",
            a.name(),
            b.name(),
            names.len()
        )));
    }
    let metrics = METRICS
        .iter()
        .enumerate()
        .map(|(j, (name, _))| {
            let u: Vec<f64> = xa.iter().map(|r| r[j]).collect();
            let v: Vec<f64> = xb.iter().map(|r| r[j]).collect();
            MetricCorrelation { metric: name.to_string(), pearson: pearson(&u, &v), spearman: spearman(&u, &v) }
        })
        .collect();
    Ok(CorrelationReport { strategy_a: a, strategy_b: b, planners: names, metrics })
}
