use serde::{Deserialize, Serialize};

use crate::world::{AtomicAction, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The operator reported the subplan as done.
    Fulfilled,
    StepCapReached,
    /// The last action was rejected by the environment.
    EnvError,
    AnswerEmitted,
}

/// Atomic actions executed while grounding one subplan, with the observation
/// before the first action and after each one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub actions: Vec<AtomicAction>,
    pub observations: Vec<Observation>,
    pub terminated: Termination,
}

impl TrajectorySegment {
    pub fn start(pre: Observation) -> Self {
        TrajectorySegment {
            actions: Vec::new(),
            observations: vec![pre],
            terminated: Termination::Fulfilled,
        }
    }

    pub fn push(&mut self, action: AtomicAction, obs: Observation) {
        self.actions.push(action);
        self.observations.push(obs);
    }

    pub fn pre(&self) -> &Observation {
        &self.observations[0]
    }

    pub fn post(&self) -> &Observation {
        self.observations.last().expect("segment has a pre-observation")
    }

    /// True when any executed action was rejected.
    pub fn had_error(&self) -> bool {
        self.observations[1..].iter().any(|o| o.error.is_some())
    }

    pub fn errors(&self) -> impl Iterator<Item = &str> {
        self.observations[1..].iter().filter_map(|o| o.error.as_deref())
    }

    /// Payload of the terminal send action, if one was emitted.
    pub fn answer(&self) -> Option<&str> {
        self.actions.iter().rev().find_map(|a| match a {
            AtomicAction::SendMessage { text } => Some(text.as_str()),
            _ => None,
        })
    }
}
