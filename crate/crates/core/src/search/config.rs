use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gate::{DualGate, RewardMode, StatusScale};

/// How the next edge to simulate is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    #[default]
    Uct,
    /// Greedy by parent reward, no exploration term and no revisits.
    BestFirst,
}

/// What an edge of the tree stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    #[default]
    Subplan,
    /// A single atomic action proposed by the operator.
    Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementMode {
    /// Replace the failed subplan with the reflector's revision and retry.
    #[default]
    Revise,
    Disabled,
    /// Keep the subplan; attach the diagnosis as feedback for later visits.
    ReflectionOnly,
}

/// Which atomic actions the operator sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// Only actions of the current subplan.
    #[default]
    Decoupled,
    /// Every action on the root-to-node path as well.
    FullHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub budget: usize,
    pub max_depth: usize,
    pub branch_width: usize,
    pub c: f64,
    pub max_atomic_steps: usize,
    pub refine_retries: usize,
    pub macro_samples: usize,
    pub status_scale: StatusScale,
    pub reward_mode: RewardMode,
    pub concurrent_macro: bool,
    pub strategy: SearchStrategy,
    pub edge_kind: EdgeKind,
    pub refinement: RefinementMode,
    pub context: ContextMode,
    /// Keep searching after the first verified answer.
    pub exhaust_budget: bool,
    /// Add wall-clock durations to trace records (breaks byte-identity).
    pub record_timing: bool,
    /// Store full prompt texts in the trace, not only hashes.
    pub verbose: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 10,
            max_depth: 5,
            branch_width: 3,
            c: 0.5,
            max_atomic_steps: 8,
            refine_retries: 1,
            macro_samples: 3,
            status_scale: StatusScale::default(),
            reward_mode: RewardMode::Dual,
            concurrent_macro: false,
            strategy: SearchStrategy::Uct,
            edge_kind: EdgeKind::Subplan,
            refinement: RefinementMode::Revise,
            context: ContextMode::Decoupled,
            exhaust_budget: false,
            record_timing: false,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid search configuration: {0}")]
pub struct ConfigError(pub String);

impl SearchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("max_depth", self.max_depth),
            ("branch_width", self.branch_width),
            ("max_atomic_steps", self.max_atomic_steps),
            ("macro_samples", self.macro_samples),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ConfigError(format!("{name} must be positive")));
            }
        }
        if !self.c.is_finite() || self.c < 0.0 {
            return Err(ConfigError(format!("c must be finite and >= 0, got {}", self.c)));
        }
        let s = &self.status_scale;
        for v in [s.a, s.b, s.c, s.d, s.e] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError("status scale values must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn dual_gate(&self) -> DualGate {
        DualGate {
            scale: self.status_scale,
            n_samples: self.macro_samples,
            concurrent: self.concurrent_macro,
            mode: self.reward_mode,
        }
    }
}
