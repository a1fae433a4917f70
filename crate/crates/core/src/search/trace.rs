use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::policy::Role;
use crate::tree::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Selection,
    Simulation,
    Refinement,
    Expansion,
    Backpropagation,
    EpisodeEnd,
}

/// One JSON-Lines record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub iteration: usize,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<usize>,
    pub detail: Value,
    /// Model tokens consumed during this phase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub events: Vec<TraceEvent>,
}

impl EpisodeTrace {
    pub fn push(&mut self, e: TraceEvent) {
        self.events.push(e);
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(EpisodeTrace { events })
    }

    pub fn phases(&self, iteration: usize) -> Vec<Phase> {
        self.events
            .iter()
            .filter(|e| e.iteration == iteration)
            .map(|e| e.phase)
            .collect()
    }

    pub fn end(&self) -> Option<&TraceEvent> {
        self.events.iter().rev().find(|e| e.phase == Phase::EpisodeEnd)
    }
}

/// Digest and size of one rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub role: Role,
    pub hash: String,
    pub chars: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl PromptRecord {
    pub fn new(role: Role, system: &str, user: &str, keep_text: bool) -> Self {
        let mut h = Sha256::new();
        h.update(system.as_bytes());
        h.update([0u8]);
        h.update(user.as_bytes());
        let digest = format!("{:x}", h.finalize());
        PromptRecord {
            role,
            hash: digest[..16].to_string(),
            chars: system.chars().count() + user.chars().count(),
            text: keep_text.then(|| format!("{system}\n\n{user}")),
        }
    }
}
