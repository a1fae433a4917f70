//! The four policy roles and their scripted implementations.

mod intent;
mod scripted;
mod table;

pub use intent::{resolve_intent, Intent, IntentTarget};
pub use scripted::{
    GroundTruthMacroJudge, GroundTruthMicroJudge, ScriptedFactory, ScriptedOperator,
    ScriptedPlanner, ScriptedReflector,
};
pub use table::{IntentRule, PlannerRule, PolicyTable, TableError, POLICY_FORMAT};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gate::{EvaluationContext, MacroStatus};
use crate::search::TrajectorySegment;
use crate::tree::{HistoryEntry, Subplan};
use crate::world::{AtomicAction, Observation, PageGraph, TaskSpec, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Planner,
    Operator,
    MicroJudge,
    MacroJudge,
    Reflector,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Planner,
        Role::Operator,
        Role::MicroJudge,
        Role::MacroJudge,
        Role::Reflector,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Planner => "planner",
            Role::Operator => "operator",
            Role::MicroJudge => "micro_judge",
            Role::MacroJudge => "macro_judge",
            Role::Reflector => "reflector",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("{role} output could not be parsed: {detail}")]
    Parse { role: Role, detail: String },
    #[error("{role} endpoint unavailable: {detail}")]
    Endpoint { role: Role, detail: String },
    #[error("{role} prompt could not be rendered: {detail}")]
    Render { role: Role, detail: String },
}

impl PolicyError {
    pub fn parse(role: Role, detail: impl Into<String>) -> Self {
        PolicyError::Parse {
            role,
            detail: detail.into(),
        }
    }

    pub fn role(&self) -> Role {
        match self {
            PolicyError::Parse { role, .. }
            | PolicyError::Endpoint { role, .. }
            | PolicyError::Render { role, .. } => *role,
        }
    }
}

/// One atomic step of the current subplan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalStep {
    pub action: AtomicAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDecision {
    pub action: AtomicAction,
    pub reason: String,
    pub subplan_done: bool,
}

impl OperatorDecision {
    pub fn done(reason: impl Into<String>) -> Self {
        OperatorDecision {
            action: AtomicAction::Noop,
            reason: reason.into(),
            subplan_done: true,
        }
    }

    pub fn act(action: AtomicAction, reason: impl Into<String>) -> Self {
        let subplan_done = action.is_terminal();
        OperatorDecision {
            action,
            reason: reason.into(),
            subplan_done,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReasonType {
    FeasibilityError,
    ComplexityError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectorVerdict {
    pub reason_type: ReasonType,
    pub reason: String,
    pub revised_plan: String,
}

#[derive(Debug, Clone, Copy)]
pub struct PlannerInput<'a> {
    pub goal: &'a str,
    pub observation: &'a Observation,
    pub history: &'a [HistoryEntry],
    pub k: usize,
    /// Simulator state, visible to ground-truth adapters only.
    pub state: Option<&'a WorldState>,
}

#[derive(Debug, Clone, Copy)]
pub struct OperatorInput<'a> {
    pub goal: &'a str,
    pub observation: &'a Observation,
    pub history: &'a [HistoryEntry],
    pub local: &'a [LocalStep],
    pub subplan: &'a Subplan,
    pub state: Option<&'a WorldState>,
}

#[derive(Debug, Clone, Copy)]
pub struct ProposalInput<'a> {
    pub goal: &'a str,
    pub observation: &'a Observation,
    pub local: &'a [LocalStep],
    pub k: usize,
    pub state: Option<&'a WorldState>,
}

#[derive(Debug, Clone, Copy)]
pub struct ReflectorInput<'a> {
    pub goal: &'a str,
    pub observation: &'a Observation,
    pub history: &'a [HistoryEntry],
    pub subplan: &'a Subplan,
    pub failure: &'a TrajectorySegment,
    pub start_state: Option<&'a WorldState>,
    pub state: Option<&'a WorldState>,
}

pub trait Planner: Send + Sync {
    fn propose(&self, input: &PlannerInput<'_>) -> Result<Vec<Subplan>, PolicyError>;
}

pub trait Operator: Send + Sync {
    fn decide(&self, input: &OperatorInput<'_>) -> Result<OperatorDecision, PolicyError>;

    /// Up to `k` candidate next actions, used by action-space search.
    fn propose_actions(&self, input: &ProposalInput<'_>) -> Result<Vec<AtomicAction>, PolicyError>;
}

pub trait MicroJudge: Send + Sync {
    fn verify(&self, ctx: &EvaluationContext<'_>) -> Result<bool, PolicyError>;
}

pub trait MacroJudge: Send + Sync {
    /// One independent progress assessment. `attempt` counts redraws.
    fn assess(
        &self,
        ctx: &EvaluationContext<'_>,
        sample: usize,
        attempt: usize,
    ) -> Result<MacroStatus, PolicyError>;
}

pub trait Reflector: Send + Sync {
    fn revise(&self, input: &ReflectorInput<'_>) -> Result<ReflectorVerdict, PolicyError>;
}

#[derive(Clone)]
pub struct PolicyBundle {
    pub planner: Arc<dyn Planner>,
    pub operator: Arc<dyn Operator>,
    pub micro_judge: Arc<dyn MicroJudge>,
    pub macro_judge: Arc<dyn MacroJudge>,
    pub reflector: Arc<dyn Reflector>,
    /// Per-episode token counters, when the roles call a model.
    pub usage: Option<Arc<crate::llm::UsageMeter>>,
    /// Request/response log, when the roles call a model.
    pub transcript: Option<Arc<crate::llm::Transcript>>,
}

/// Builds the policies for one episode.
pub trait PolicyFactory: Send + Sync {
    fn bundle(&self, graph: &Arc<PageGraph>, task: &TaskSpec, seed: u64) -> PolicyBundle;
}
