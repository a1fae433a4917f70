//! Breadth-first trajectory search over the latent state graph.

use std::collections::{HashSet, VecDeque};

use super::env::{observe_state, transition};
use super::{AtomicAction, ElementRole, PageGraph, PageId, TaskSpec, WorldState};

/// What a path must achieve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    /// Stand on the given page.
    Page(PageId),
    /// Terminate the episode successfully.
    Goal,
}

/// Restrictions on the actions a path may use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capabilities {
    /// Clicking a popup's close element is allowed.
    pub dismiss_popups: bool,
    /// Texts that may be typed into textboxes.
    pub inputs: Vec<String>,
    /// Plan as if popups did not block the page.
    pub ignore_popups: bool,
}

impl Capabilities {
    pub fn full(task: &TaskSpec) -> Self {
        Capabilities {
            dismiss_popups: true,
            inputs: task.inputs.clone(),
            ignore_popups: false,
        }
    }

    pub fn clicks_only() -> Self {
        Capabilities {
            dismiss_popups: false,
            inputs: Vec::new(),
            ignore_popups: false,
        }
    }
}

fn candidate_actions(
    graph: &PageGraph,
    task: &TaskSpec,
    state: &WorldState,
    caps: &Capabilities,
    answers: bool,
) -> Vec<AtomicAction> {
    let page = graph.page(&state.page).expect("state page exists");
    let popup_close = if state.popup_open(graph) {
        page.popup.as_ref().map(|p| p.close)
    } else {
        None
    };
    let mut out = Vec::new();
    for el in &page.elements {
        if el.role == ElementRole::Textbox {
            for text in &caps.inputs {
                out.push(AtomicAction::Type {
                    target: el.id,
                    text: text.clone(),
                });
            }
        } else if el.role != ElementRole::Text {
            if Some(el.id) == popup_close && !caps.dismiss_popups {
                continue;
            }
            out.push(AtomicAction::Click { target: el.id });
        }
    }
    if answers {
        let obs = observe_state(graph, state, None);
        let expected = task.goal.answers();
        if expected.is_empty() {
            out.push(AtomicAction::send("done"));
        }
        for a in expected {
            if obs.shows(&a) {
                out.push(AtomicAction::send(a));
            }
        }
    }
    out
}

fn reached(state: &WorldState, target: &Target) -> bool {
    match target {
        Target::Page(p) => !state.terminated && &state.page == p,
        Target::Goal => state.terminated && state.success,
    }
}

/// Shortest action sequence from `from` reaching `target` under `caps`,
/// of at most `max_len` actions. Ties resolve to the first path in element
/// order.
pub fn shortest_path(
    graph: &PageGraph,
    task: &TaskSpec,
    from: &WorldState,
    target: &Target,
    caps: &Capabilities,
    max_len: usize,
) -> Option<Vec<AtomicAction>> {
    if reached(from, target) {
        return Some(Vec::new());
    }
    if from.terminated {
        return None;
    }
    let answers = matches!(target, Target::Goal);
    let mut seen: HashSet<WorldState> = HashSet::new();
    seen.insert(from.without_clock());
    let mut queue: VecDeque<(WorldState, Vec<AtomicAction>)> = VecDeque::new();
    queue.push_back((from.clone(), Vec::new()));
    while let Some((state, path)) = queue.pop_front() {
        if path.len() >= max_len {
            continue;
        }
        for action in candidate_actions(graph, task, &state, caps, answers) {
            let mut next = state.clone();
            if caps.ignore_popups {
                next.closed_popups.insert(next.page.clone());
            }
            let error = transition(graph, task, &mut next, &action);
            if error.is_some() {
                continue;
            }
            if caps.ignore_popups {
                // Popups never actually close in the relaxed model.
                next.closed_popups = state.closed_popups.clone();
            }
            let mut p = path.clone();
            p.push(action);
            if reached(&next, target) {
                return Some(p);
            }
            if next.terminated {
                continue;
            }
            if seen.insert(next.without_clock()) {
                queue.push_back((next, p));
            }
        }
    }
    None
}

/// Shortest successful trajectory from the task's start state.
pub fn oracle_solve(graph: &PageGraph, task: &TaskSpec, max_len: usize) -> Option<Vec<AtomicAction>> {
    let start = WorldState::initial(graph.start());
    shortest_path(
        graph,
        task,
        &start,
        &Target::Goal,
        &Capabilities::full(task),
        max_len,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{fixtures, AtomicAction};

    #[test]
    fn impossible_fixture_has_no_solution() {
        let g = fixtures::impossible();
        let t = &g.tasks()[0];
        assert!(oracle_solve(&g, t, 20).is_none());
    }

    #[test]
    fn popup_path_requires_dismissal() {
        let g = fixtures::popup();
        let t = &g.tasks()[0];
        let start = WorldState::initial(g.start());
        let target = Target::Page(PageId::new("p2"));
        assert!(shortest_path(&g, t, &start, &target, &Capabilities::clicks_only(), 10).is_none());
        let relaxed = Capabilities {
            ignore_popups: true,
            ..Capabilities::clicks_only()
        };
        let path = shortest_path(&g, t, &start, &target, &relaxed, 10).unwrap();
        assert_eq!(path, vec![AtomicAction::click(1), AtomicAction::click(4)]);
    }
}
