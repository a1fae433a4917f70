use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::gate::EvaluationContext;
use crate::policy::{LocalStep, OperatorInput, PlannerInput, ReflectorInput};
use crate::search::TrajectorySegment;
use crate::tree::HistoryEntry;
use crate::world::Observation;

use super::prompts::{keys, next_placeholder, template, PromptTemplate, ACTION_SPACE, NO_SCREENSHOT};
use crate::policy::Role;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("placeholder `{{{0}}}` has no binding")]
    UnboundPlaceholder(String),
}

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    pub fn len(&self) -> usize {
        self.system.len() + self.user.len()
    }

    pub fn is_empty(&self) -> bool {
        self.system.is_empty() && self.user.is_empty()
    }
}

fn fill(text: &str, bindings: &Bindings) -> Result<String, RenderError> {
    let mut out = String::with_capacity(text.len() * 2);
    let mut rest = text;
    while let Some(((prefix, name), after)) = next_placeholder(rest) {
        out.push_str(prefix);
        let value = bindings
            .get(name)
            .ok_or_else(|| RenderError::UnboundPlaceholder(name.to_string()))?;
        out.push_str(value);
        rest = after;
    }
    out.push_str(rest);
    Ok(out)
}

/// Substitute every placeholder of `template`. Unused bindings are ignored.
pub fn render(template: &PromptTemplate, bindings: &Bindings) -> Result<RenderedPrompt, RenderError> {
    Ok(RenderedPrompt {
        system: fill(template.system_text, bindings)?,
        user: fill(template.user_text, bindings)?,
    })
}

pub fn render_history(history: &[HistoryEntry]) -> String {
    if history.is_empty() {
        return "(none)".to_string();
    }
    let mut out = String::new();
    for (i, h) in history.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "{}. {} [{}]", i + 1, h.text, h.status.label());
        if let Some(note) = &h.note {
            let _ = write!(out, "\n   Feedback: {note}");
        }
    }
    out
}

pub fn render_local(local: &[LocalStep]) -> String {
    if local.is_empty() {
        return "(none)".to_string();
    }
    let mut out = String::new();
    for (i, s) in local.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "{}. {}", i + 1, s.action);
        if let Some(e) = &s.error {
            let _ = write!(out, " -> error: {e}");
        }
    }
    out
}

fn segment_steps(segment: &TrajectorySegment) -> Vec<LocalStep> {
    segment
        .actions
        .iter()
        .zip(&segment.observations[1..])
        .map(|(a, o)| LocalStep {
            action: a.clone(),
            error: o.error.clone(),
        })
        .collect()
}

fn execution_trace(segment: &TrajectorySegment) -> String {
    if segment.actions.is_empty() {
        return "(no actions were executed)".to_string();
    }
    let mut out = String::new();
    for (i, (a, o)) in segment.actions.iter().zip(&segment.observations[1..]).enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "{}. {} -> page '{}'", i + 1, a, o.title);
        if let Some(e) = &o.error {
            let _ = write!(out, ", error: {e}");
        }
    }
    out
}

fn base(goal: &str) -> Bindings {
    let mut b = Bindings::new();
    b.insert(keys::GOAL.into(), goal.to_string());
    b.insert(keys::SCREENSHOT.into(), NO_SCREENSHOT.into());
    b.insert(keys::PRE_SCREENSHOT.into(), NO_SCREENSHOT.into());
    b.insert(keys::POST_SCREENSHOT.into(), NO_SCREENSHOT.into());
    b.insert(keys::ACTION_SPACE.into(), ACTION_SPACE.into());
    b
}

fn axtree(obs: &Observation) -> String {
    obs.render_axtree().trim_end().to_string()
}

pub fn planner_bindings(input: &PlannerInput<'_>) -> Bindings {
    let mut b = base(input.goal);
    b.insert(keys::BRANCHING_FACTOR.into(), input.k.to_string());
    b.insert(keys::SUBPLAN_HISTORY.into(), render_history(input.history));
    b.insert(keys::AXTREE.into(), axtree(input.observation));
    b
}

pub fn operator_bindings(input: &OperatorInput<'_>) -> Bindings {
    let mut b = base(input.goal);
    b.insert(keys::PREVIOUS_PLANS.into(), render_history(input.history));
    b.insert(keys::SUBPLAN.into(), input.subplan.text().to_string());
    b.insert(keys::INTERACTION_HISTORY.into(), render_local(input.local));
    b.insert(keys::AXTREE.into(), axtree(input.observation));
    b
}

pub fn judge_bindings(ctx: &EvaluationContext<'_>) -> Bindings {
    let mut b = base(ctx.goal);
    b.insert(keys::SUBPLAN.into(), ctx.subplan.text().to_string());
    b.insert(keys::SUBPLAN_HISTORY.into(), render_history(ctx.plan_history));
    b.insert(
        keys::INTERACTION_HISTORY.into(),
        render_local(&segment_steps(ctx.segment)),
    );
    b.insert(keys::PRE_AXTREE.into(), axtree(ctx.pre_obs()));
    b.insert(keys::POST_AXTREE.into(), axtree(ctx.post_obs()));
    b
}

pub fn reflector_bindings(input: &ReflectorInput<'_>) -> Bindings {
    let mut b = base(input.goal);
    b.insert(keys::FAILED_SUBPLAN.into(), input.subplan.text().to_string());
    b.insert(keys::EXECUTION_TRACE.into(), execution_trace(input.failure));
    b.insert(keys::AXTREE.into(), axtree(input.observation));
    b.insert(keys::SUBPLAN_HISTORY.into(), render_history(input.history));
    b
}

pub fn render_planner(input: &PlannerInput<'_>) -> Result<RenderedPrompt, RenderError> {
    render(template(Role::Planner), &planner_bindings(input))
}

pub fn render_operator(input: &OperatorInput<'_>) -> Result<RenderedPrompt, RenderError> {
    render(template(Role::Operator), &operator_bindings(input))
}

pub fn render_micro(ctx: &EvaluationContext<'_>) -> Result<RenderedPrompt, RenderError> {
    render(template(Role::MicroJudge), &judge_bindings(ctx))
}

pub fn render_macro(ctx: &EvaluationContext<'_>) -> Result<RenderedPrompt, RenderError> {
    render(template(Role::MacroJudge), &judge_bindings(ctx))
}

pub fn render_reflector(input: &ReflectorInput<'_>) -> Result<RenderedPrompt, RenderError> {
    render(template(Role::Reflector), &reflector_bindings(input))
}
