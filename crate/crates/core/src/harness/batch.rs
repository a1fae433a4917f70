use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::policy::PolicyFactory;
use crate::search::{run_episode, EpisodeTrace, Phase, SearchConfig, StopReason, TraceEvent};
use crate::world::{PageGraph, RestoreMode, WebWorld};

use super::metrics::{EpisodeStats, MetricSet};
use super::variant::VariantSpec;
use super::HarnessError;

/// One task of one environment.
#[derive(Debug, Clone)]
pub struct TaskRef {
    pub env: String,
    pub graph: Arc<PageGraph>,
    pub task: String,
}

/// All tasks of `graphs`, optionally restricted to the ids in `only`.
pub fn collect_tasks(graphs: &[Arc<PageGraph>], only: Option<&[String]>) -> Result<Vec<TaskRef>, HarnessError> {
    let mut out = Vec::new();
    for g in graphs {
        for t in g.tasks() {
            if only.is_none_or(|ids| ids.iter().any(|i| i == &t.id)) {
                out.push(TaskRef {
                    env: g.name().to_string(),
                    graph: g.clone(),
                    task: t.id.clone(),
                });
            }
        }
    }
    if out.is_empty() {
        return Err(HarnessError::Spec("no tasks selected".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BatchSpec {
    pub tasks: Vec<TaskRef>,
    pub seeds: Vec<u64>,
    pub variant: VariantSpec,
    pub config: SearchConfig,
    pub jobs: usize,
    pub restore: RestoreMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub variant: String,
    pub env: String,
    pub task: String,
    pub seed: u64,
    pub stats: EpisodeStats,
    pub answer: Option<String>,
    pub stop: Option<StopReason>,
    pub error: Option<String>,
}

impl EpisodeRecord {
    pub fn key(&self) -> (String, String, u64) {
        (self.env.clone(), self.task.clone(), self.seed)
    }

    /// File stem used for the trace of this episode.
    pub fn trace_name(&self) -> String {
        let clean = |s: &str| -> String {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
                .collect()
        };
        format!("{}__{}__{}__s{}", clean(&self.variant), clean(&self.env), clean(&self.task), self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub record: EpisodeRecord,
    pub trace: EpisodeTrace,
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub variant: String,
    pub episodes: Vec<Episode>,
    pub metrics: MetricSet,
}

impl BatchReport {
    pub fn keys(&self) -> BTreeSet<(String, String, u64)> {
        self.episodes.iter().map(|e| e.record.key()).collect()
    }

    pub fn stats(&self) -> impl Iterator<Item = &EpisodeStats> {
        self.episodes.iter().map(|e| &e.record.stats)
    }

    /// Write `traces/<episode>.jsonl` under `dir`.
    pub fn write_traces(&self, dir: &Path) -> Result<(), HarnessError> {
        let traces = dir.join("traces");
        std::fs::create_dir_all(&traces).map_err(|e| HarnessError::Io(traces.clone(), e))?;
        for ep in &self.episodes {
            let path = traces.join(format!("{}.jsonl", ep.record.trace_name()));
            std::fs::write(&path, ep.trace.to_jsonl()).map_err(|e| HarnessError::Io(path.clone(), e))?;
        }
        Ok(())
    }

    /// Metrics rebuilt from the trace files this report wrote to `dir`.
    pub fn metrics_from_disk(&self, dir: &Path) -> Result<MetricSet, HarnessError> {
        let mut traces = Vec::new();
        for ep in &self.episodes {
            let path = dir.join("traces").join(format!("{}.jsonl", ep.record.trace_name()));
            let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::Io(path.clone(), e))?;
            traces.push(EpisodeTrace::from_jsonl(&text).map_err(|e| HarnessError::Trace(path, e))?);
        }
        Ok(MetricSet::from_traces(&traces))
    }
}

fn failed_trace(error: &str, budget: usize) -> EpisodeTrace {
    let mut t = EpisodeTrace::default();
    t.push(TraceEvent {
        iteration: 0,
        phase: Phase::EpisodeEnd,
        node: None,
        edge: None,
        detail: json!({
            "success": false,
            "iterations_used": 0,
            "budget": budget,
            "interactions": 0,
            "path_length": null,
            "error": error,
        }),
        tokens: None,
        elapsed_ms: None,
    });
    t
}

fn run_one(spec: &BatchSpec, cfg: &SearchConfig, factory: &dyn PolicyFactory, t: &TaskRef, seed: u64) -> Episode {
    let mut record = EpisodeRecord {
        variant: spec.variant.label.clone(),
        env: t.env.clone(),
        task: t.task.clone(),
        seed,
        stats: EpisodeStats {
            budget: cfg.budget,
            ..EpisodeStats::default()
        },
        answer: None,
        stop: None,
        error: None,
    };
    let outcome = WebWorld::new(t.graph.clone(), &t.task, seed)
        .map_err(|e| e.to_string())
        .and_then(|env| {
            let task = env.task().clone();
            let policies = factory.bundle(&t.graph, &task, seed);
            let mut env = env.with_restore_mode(spec.restore);
            run_episode(&mut env, &policies, cfg).map_err(|e| e.to_string())
        });
    match outcome {
        Ok(r) => {
            record.stats = EpisodeStats::from_result(&r);
            record.answer = r.answer.clone();
            record.stop = Some(r.stop);
            record.error = r.error.clone();
            Episode { record, trace: r.trace }
        }
        Err(e) => {
            log::warn!("episode {}/{} seed {seed} failed: {e}", t.env, t.task);
            let trace = failed_trace(&e, cfg.budget);
            record.error = Some(e);
            Episode { record, trace }
        }
    }
}

/// One episode per (task, seed); failures are recorded, never fatal.
pub fn run_batch(spec: &BatchSpec, factory: &dyn PolicyFactory) -> Result<BatchReport, HarnessError> {
    let cfg = spec.variant.config(&spec.config);
    cfg.validate().map_err(|e| HarnessError::Spec(e.to_string()))?;
    let jobs: Vec<(&TaskRef, u64)> = spec
        .tasks
        .iter()
        .flat_map(|t| spec.seeds.iter().map(move |s| (t, *s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Spec(format!("thread pool: {e}")))?;
    let episodes: Vec<Episode> = pool.install(|| {
        jobs.par_iter()
            .map(|(t, seed)| run_one(spec, &cfg, factory, t, *seed))
            .collect()
    });
    let metrics = MetricSet::from_stats(episodes.iter().map(|e| &e.record.stats));
    Ok(BatchReport {
        variant: spec.variant.label.clone(),
        episodes,
        metrics,
    })
}
