use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::llm::TokenUsage;
use crate::policy::Role;
use crate::search::{EpisodeResult, EpisodeTrace, Phase};

/// The per-episode quantities every metric is built from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub success: bool,
    pub iterations_used: usize,
    pub budget: usize,
    pub interactions: u64,
    pub path_length: Option<usize>,
    pub subplans_grounded: usize,
    pub subplans_verified: usize,
    pub operator_calls: usize,
    pub operator_context_chars: usize,
    pub tokens: BTreeMap<Role, TokenUsage>,
}

impl EpisodeStats {
    pub fn from_result(r: &EpisodeResult) -> Self {
        EpisodeStats {
            success: r.success,
            iterations_used: r.iterations_used,
            budget: r.budget,
            interactions: r.interactions,
            path_length: r.path_length(),
            subplans_grounded: r.subplans_grounded,
            subplans_verified: r.subplans_verified,
            operator_calls: r.operator_calls,
            operator_context_chars: r.operator_context_chars,
            tokens: r.tokens.clone(),
        }
    }

    /// Rebuild the statistics from a persisted trace alone.
    pub fn from_trace(trace: &EpisodeTrace) -> Option<Self> {
        let end = trace.end()?;
        let d = &end.detail;
        let uint = |v: &Value| v.as_u64().unwrap_or(0);
        let mut s = EpisodeStats {
            success: d["success"].as_bool().unwrap_or(false),
            iterations_used: uint(&d["iterations_used"]) as usize,
            budget: uint(&d["budget"]) as usize,
            interactions: uint(&d["interactions"]),
            path_length: d["path_length"].as_u64().map(|v| v as usize),
            tokens: serde_json::from_value(d["tokens_by_role"].clone()).unwrap_or_default(),
            ..EpisodeStats::default()
        };
        for e in &trace.events {
            if !matches!(e.phase, Phase::Simulation | Phase::Refinement) {
                continue;
            }
            let Some(micro) = e.detail["reward"]["r_micro"].as_u64() else {
                continue;
            };
            s.subplans_grounded += 1;
            s.subplans_verified += micro as usize;
            for p in e.detail["prompts"].as_array().into_iter().flatten() {
                if p["role"] == "operator" {
                    s.operator_calls += 1;
                    s.operator_context_chars += uint(&p["chars"]) as usize;
                }
            }
        }
        Some(s)
    }
}

/// Aggregate metrics over a batch. Rates are percentages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub episodes: usize,
    pub success_rate: f64,
    pub success_stderr: f64,
    pub action_interactions: f64,
    pub interactions_stderr: f64,
    /// Mean solution length over successful episodes.
    pub path_length: Option<f64>,
    pub budget_utilization: f64,
    pub subplan_completion_rate: f64,
    /// Mean characters per rendered operator prompt.
    pub operator_context: f64,
    pub tokens: BTreeMap<Role, TokenUsage>,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl MetricSet {
    pub fn from_stats<'a>(stats: impl IntoIterator<Item = &'a EpisodeStats>) -> Self {
        let stats: Vec<&EpisodeStats> = stats.into_iter().collect();
        let mut m = MetricSet {
            episodes: stats.len(),
            ..MetricSet::default()
        };
        if stats.is_empty() {
            return m;
        }
        let succ: Vec<f64> = stats.iter().map(|s| if s.success { 100.0 } else { 0.0 }).collect();
        (m.success_rate, m.success_stderr) = mean_stderr(&succ);
        let inter: Vec<f64> = stats.iter().map(|s| s.interactions as f64).collect();
        (m.action_interactions, m.interactions_stderr) = mean_stderr(&inter);
        let lens: Vec<f64> = stats
            .iter()
            .filter(|s| s.success)
            .filter_map(|s| s.path_length)
            .map(|l| l as f64)
            .collect();
        m.path_length = (!lens.is_empty()).then(|| mean_stderr(&lens).0);
        let util: Vec<f64> = stats
            .iter()
            .map(|s| {
                if s.budget == 0 {
                    0.0
                } else {
                    100.0 * s.iterations_used as f64 / s.budget as f64
                }
            })
            .collect();
        m.budget_utilization = mean_stderr(&util).0;
        let grounded: usize = stats.iter().map(|s| s.subplans_grounded).sum();
        let verified: usize = stats.iter().map(|s| s.subplans_verified).sum();
        if grounded > 0 {
            m.subplan_completion_rate = 100.0 * verified as f64 / grounded as f64;
        }
        let calls: usize = stats.iter().map(|s| s.operator_calls).sum();
        let chars: usize = stats.iter().map(|s| s.operator_context_chars).sum();
        if calls > 0 {
            m.operator_context = chars as f64 / calls as f64;
        }
        for s in &stats {
            for (role, u) in &s.tokens {
                let t = m.tokens.entry(*role).or_default();
                t.calls += u.calls;
                t.prompt_tokens += u.prompt_tokens;
                t.completion_tokens += u.completion_tokens;
            }
        }
        m
    }

    pub fn from_traces<'a>(traces: impl IntoIterator<Item = &'a EpisodeTrace>) -> Self {
        let stats: Vec<EpisodeStats> = traces.into_iter().filter_map(EpisodeStats::from_trace).collect();
        MetricSet::from_stats(&stats)
    }

    pub fn total_tokens(&self) -> u64 {
        self.tokens.values().map(TokenUsage::total).sum()
    }
}
