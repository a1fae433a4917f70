use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::observation::{ElementView, Observation, PopupView};
use super::{AtomicAction, ElementId, ElementRole, PageGraph, PageId, TaskSpec, WorldError};

/// Latent simulator state. Everything that influences future observations
/// lives here so that a snapshot fully determines the world.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorldState {
    pub page: PageId,
    pub step: u32,
    #[serde(default)]
    pub filled: BTreeMap<PageId, BTreeMap<ElementId, String>>,
    #[serde(default)]
    pub closed_popups: BTreeSet<PageId>,
    #[serde(default)]
    pub committed: BTreeSet<(PageId, ElementId)>,
    #[serde(default)]
    pub terminated: bool,
    #[serde(default)]
    pub answer: Option<String>,
    #[serde(default)]
    pub success: bool,
}

impl WorldState {
    pub fn initial(start: &PageId) -> Self {
        WorldState {
            page: start.clone(),
            step: 0,
            filled: BTreeMap::new(),
            closed_popups: BTreeSet::new(),
            committed: BTreeSet::new(),
            terminated: false,
            answer: None,
            success: false,
        }
    }

    /// The state with its step counter cleared; used as a search key.
    pub fn without_clock(&self) -> WorldState {
        WorldState {
            step: 0,
            ..self.clone()
        }
    }

    pub fn popup_open(&self, graph: &PageGraph) -> bool {
        graph
            .page(&self.page)
            .is_some_and(|p| p.popup.is_some() && !self.closed_popups.contains(&self.page))
    }

    pub fn field(&self, page: &PageId, id: ElementId) -> Option<&str> {
        self.filled.get(page)?.get(&id).map(String::as_str)
    }
}

/// Restorable reference to a simulator state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateHandle {
    graph: u64,
    task: String,
    state: WorldState,
    /// Every action applied since reset, for replay-based restoration.
    trace: Vec<AtomicAction>,
}

impl StateHandle {
    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn trace(&self) -> &[AtomicAction] {
        &self.trace
    }

    pub fn task(&self) -> &str {
        &self.task
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub terminated: bool,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestoreMode {
    /// Copy the stored snapshot back; costs no interactions.
    #[default]
    Snapshot,
    /// Reset and re-apply the recorded action trace, one `step` per action.
    Replay,
}

/// Environment contract used by the search engine.
pub trait Environment {
    fn reset(&mut self) -> Result<(Observation, StateHandle), WorldError>;
    fn observe(&self) -> Observation;
    fn step(&mut self, action: &AtomicAction) -> StepOutcome;
    fn snapshot(&self) -> StateHandle;
    fn restore_state(&mut self, handle: &StateHandle) -> Result<Observation, WorldError>;
    /// Total number of `step` calls served by this instance.
    fn interactions(&self) -> u64;
    fn instruction(&self) -> &str;
    /// Hidden simulator state, exposed only to ground-truth policies.
    fn ground_truth(&self) -> Option<&WorldState> {
        None
    }
}

/// Apply one action to `state`. Returns the in-band error message for
/// rejected actions; rejected actions leave everything but the clock intact.
/// Apply `action` to a detached state, as `step` would.
pub fn apply_action(
    graph: &PageGraph,
    task: &TaskSpec,
    state: &mut WorldState,
    action: &AtomicAction,
) -> Option<String> {
    transition(graph, task, state, action)
}

pub(crate) fn transition(
    graph: &PageGraph,
    task: &TaskSpec,
    state: &mut WorldState,
    action: &AtomicAction,
) -> Option<String> {
    if state.terminated {
        return Some("the episode has already terminated".to_string());
    }
    state.step += 1;
    let error = apply(graph, task, state, action);
    if !state.terminated && state.step >= task.horizon {
        state.terminated = true;
        state.success = false;
    }
    error
}

fn apply(
    graph: &PageGraph,
    task: &TaskSpec,
    state: &mut WorldState,
    action: &AtomicAction,
) -> Option<String> {
    let page = graph.page(&state.page).expect("state page exists");
    let popup_open = state.popup_open(graph);
    match action {
        AtomicAction::Click { target } => {
            let Some(el) = page.element(*target) else {
                return Some(format!("no element with id [{target}] on this page"));
            };
            if popup_open {
                let close = page.popup.as_ref().map(|p| p.close);
                if close == Some(*target) {
                    state.closed_popups.insert(state.page.clone());
                    return None;
                }
                return Some(format!(
                    "element [{target}] is obscured by a popup dialog"
                ));
            }
            if let Some(req) = el.requires_input {
                let empty = state
                    .field(&state.page, req)
                    .is_none_or(|v| v.trim().is_empty());
                if empty {
                    return Some(format!("required field [{req}] is empty"));
                }
            }
            if el.irreversible {
                state.committed.insert((state.page.clone(), el.id));
            }
            if let Some(next) = &el.transition {
                state.page = next.clone();
            }
            None
        }
        AtomicAction::Type { target, text } => {
            let Some(el) = page.element(*target) else {
                return Some(format!("no element with id [{target}] on this page"));
            };
            if popup_open {
                return Some(format!(
                    "element [{target}] is obscured by a popup dialog"
                ));
            }
            if el.role != ElementRole::Textbox {
                return Some(format!("element [{target}] is not a textbox"));
            }
            state
                .filled
                .entry(state.page.clone())
                .or_default()
                .insert(*target, text.clone());
            None
        }
        AtomicAction::Scroll { .. } | AtomicAction::Noop => None,
        AtomicAction::Goto { page: dest } => {
            let dest = PageId::new(dest.clone());
            match graph.page(&dest) {
                Some(p) if p.addressable => {
                    state.page = dest;
                    None
                }
                _ => Some(format!("page `{dest}` cannot be opened by address")),
            }
        }
        AtomicAction::SendMessage { text } => {
            state.terminated = true;
            state.answer = Some(text.clone());
            state.success = task.goal.holds(&state.page, Some(text));
            None
        }
    }
}

pub(crate) fn observe_state(
    graph: &PageGraph,
    state: &WorldState,
    error: Option<String>,
) -> Observation {
    let page = graph.page(&state.page).expect("state page exists");
    let elements = page
        .elements
        .iter()
        .map(|e| ElementView {
            id: e.id,
            role: e.role,
            label: e.label.clone(),
            value: if e.role == ElementRole::Textbox {
                Some(state.field(&state.page, e.id).unwrap_or("").to_string())
            } else {
                None
            },
        })
        .collect();
    let popup = if state.popup_open(graph) {
        page.popup.as_ref().map(|p| PopupView {
            message: p.message.clone(),
            close: p.close,
        })
    } else {
        None
    };
    Observation {
        page: state.page.clone(),
        title: page.title.clone(),
        elements,
        popup,
        error,
        step: state.step,
        terminated: state.terminated,
    }
}

/// Simulator instance bound to one task of a [`PageGraph`].
#[derive(Debug, Clone)]
pub struct WebWorld {
    graph: Arc<PageGraph>,
    task: TaskSpec,
    seed: u64,
    state: WorldState,
    trace: Vec<AtomicAction>,
    last_error: Option<String>,
    interactions: u64,
    restore_mode: RestoreMode,
}

impl WebWorld {
    pub fn new(graph: Arc<PageGraph>, task_id: &str, seed: u64) -> Result<Self, WorldError> {
        let task = graph.task(task_id)?.clone();
        let state = WorldState::initial(graph.start());
        Ok(WebWorld {
            graph,
            task,
            seed,
            state,
            trace: Vec::new(),
            last_error: None,
            interactions: 0,
            restore_mode: RestoreMode::Snapshot,
        })
    }

    pub fn with_restore_mode(mut self, mode: RestoreMode) -> Self {
        self.restore_mode = mode;
        self
    }

    pub fn graph(&self) -> &Arc<PageGraph> {
        &self.graph
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    /// Restore by resetting and re-applying the handle's action trace.
    pub fn replay(&mut self, handle: &StateHandle) -> Result<Observation, WorldError> {
        self.check_handle(handle)?;
        self.reset()?;
        for action in &handle.trace {
            self.step(action);
        }
        Ok(self.observe())
    }

    fn check_handle(&self, handle: &StateHandle) -> Result<(), WorldError> {
        if handle.graph != self.graph.fingerprint() || handle.task != self.task.id {
            return Err(WorldError::StaleHandle);
        }
        Ok(())
    }
}

impl Environment for WebWorld {
    fn reset(&mut self) -> Result<(Observation, StateHandle), WorldError> {
        self.state = WorldState::initial(self.graph.start());
        self.trace.clear();
        self.last_error = None;
        Ok((self.observe(), self.snapshot()))
    }

    fn observe(&self) -> Observation {
        observe_state(&self.graph, &self.state, self.last_error.clone())
    }

    fn step(&mut self, action: &AtomicAction) -> StepOutcome {
        self.interactions += 1;
        let was_terminated = self.state.terminated;
        let error = transition(&self.graph, &self.task, &mut self.state, action);
        if !was_terminated {
            self.trace.push(action.clone());
        }
        self.last_error = error;
        StepOutcome {
            observation: self.observe(),
            terminated: self.state.terminated,
            success: self.state.success,
        }
    }

    fn snapshot(&self) -> StateHandle {
        StateHandle {
            graph: self.graph.fingerprint(),
            task: self.task.id.clone(),
            state: self.state.clone(),
            trace: self.trace.clone(),
        }
    }

    fn restore_state(&mut self, handle: &StateHandle) -> Result<Observation, WorldError> {
        self.check_handle(handle)?;
        match self.restore_mode {
            RestoreMode::Snapshot => {
                self.state = handle.state.clone();
                self.trace = handle.trace.clone();
                self.last_error = None;
                Ok(self.observe())
            }
            RestoreMode::Replay => {
                if self.trace == handle.trace {
                    self.last_error = None;
                    return Ok(self.observe());
                }
                self.replay(handle)?;
                self.last_error = None;
                Ok(self.observe())
            }
        }
    }

    fn interactions(&self) -> u64 {
        self.interactions
    }

    fn instruction(&self) -> &str {
        &self.task.instruction
    }

    fn ground_truth(&self) -> Option<&WorldState> {
        Some(&self.state)
    }
}
