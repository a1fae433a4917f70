//! Deterministic simulated web world.
//!
//! A [`PageGraph`] is a set of pages whose interactive elements move the
//! agent between pages. Only the current page is ever visible to a policy
//! (through [`Observation`]); the graph itself stays hidden behind the
//! [`Environment`] trait. Environment files are JSON documents, see
//! `fixtures/v1/README.md` for the schema.

mod action;
mod env;
pub mod fixtures;
mod generate;
mod observation;
mod oracle;

pub use action::{ActionParseError, AtomicAction, ScrollDirection};
pub use env::{apply_action, Environment, RestoreMode, StateHandle, StepOutcome, WebWorld, WorldState};
pub use generate::{generate, GeneratorParams};
pub use observation::{ElementView, Observation, PopupView};
pub use oracle::{oracle_solve, shortest_path, Capabilities, Target};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const ENV_FORMAT: &str = "planmcts.env/v1";

/// Default per-episode step horizon.
pub const DEFAULT_HORIZON: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub u32);

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PageId(pub String);

impl PageId {
    pub fn new(id: impl Into<String>) -> Self {
        PageId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementRole {
    Link,
    Button,
    Textbox,
    Text,
}

impl ElementRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementRole::Link => "link",
            ElementRole::Button => "button",
            ElementRole::Textbox => "textbox",
            ElementRole::Text => "text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: ElementId,
    pub role: ElementRole,
    pub label: String,
    /// Page reached by clicking; `None` is a self-loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<PageId>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub distractor: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub irreversible: bool,
    /// Textbox on the same page that must be non-empty before this element
    /// accepts a click.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requires_input: Option<ElementId>,
}

/// Modal dialog covering a page until its close element is clicked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Popup {
    pub message: String,
    pub close: ElementId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub id: PageId,
    pub title: String,
    pub elements: Vec<Element>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub popup: Option<Popup>,
    /// Whether `goto` may address this page directly.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub addressable: bool,
}

impl Page {
    pub fn element(&self, id: ElementId) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalPredicate {
    ReachPage { page: PageId },
    AnswerEquals { answer: String },
    All { all: Vec<GoalPredicate> },
}

/// Canonical form used for answer comparison.
pub fn normalize_answer(s: &str) -> String {
    let t = s
        .trim()
        .trim_end_matches('.')
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '`' || c.is_whitespace())
        .trim_end_matches('.');
    t.trim().to_lowercase()
}

impl GoalPredicate {
    pub fn holds(&self, page: &PageId, answer: Option<&str>) -> bool {
        match self {
            GoalPredicate::ReachPage { page: p } => p == page,
            GoalPredicate::AnswerEquals { answer: expected } => {
                answer.is_some_and(|a| normalize_answer(a) == normalize_answer(expected))
            }
            GoalPredicate::All { all } => all.iter().all(|g| g.holds(page, answer)),
        }
    }

    /// Answer strings mentioned by the predicate.
    pub fn answers(&self) -> Vec<String> {
        match self {
            GoalPredicate::ReachPage { .. } => Vec::new(),
            GoalPredicate::AnswerEquals { answer } => vec![answer.clone()],
            GoalPredicate::All { all } => all.iter().flat_map(|g| g.answers()).collect(),
        }
    }

    /// Pages the predicate requires the agent to stand on.
    pub fn pages(&self) -> Vec<PageId> {
        match self {
            GoalPredicate::ReachPage { page } => vec![page.clone()],
            GoalPredicate::AnswerEquals { .. } => Vec::new(),
            GoalPredicate::All { all } => all.iter().flat_map(|g| g.pages()).collect(),
        }
    }
}

fn default_horizon() -> u32 {
    DEFAULT_HORIZON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub instruction: String,
    pub goal: GoalPredicate,
    #[serde(default = "default_horizon")]
    pub horizon: u32,
    /// Texts the task may require typing into textboxes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    /// Negative-control flag: no satisfying trajectory is expected.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub impossible: bool,
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid environment file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported environment format `{0}`")]
    Format(String),
    #[error("invalid page graph: {0}")]
    Invalid(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("state handle belongs to a different environment")]
    StaleHandle,
    #[error("generator parameters are infeasible: {0}")]
    InfeasibleParams(String),
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    #[serde(default)]
    format: Option<String>,
    #[serde(default)]
    name: Option<String>,
    start: PageId,
    pages: Vec<Page>,
    tasks: Vec<TaskSpec>,
}

/// A validated environment: pages, a start page and the tasks posed on it.
#[derive(Debug, Clone, PartialEq)]
pub struct PageGraph {
    name: String,
    start: PageId,
    pages: BTreeMap<PageId, Page>,
    order: Vec<PageId>,
    tasks: Vec<TaskSpec>,
    fingerprint: u64,
}

impl PageGraph {
    pub fn new(
        name: impl Into<String>,
        start: PageId,
        pages: Vec<Page>,
        tasks: Vec<TaskSpec>,
    ) -> Result<Self, WorldError> {
        let name = name.into();
        let order: Vec<PageId> = pages.iter().map(|p| p.id.clone()).collect();
        let mut map = BTreeMap::new();
        for page in pages {
            let id = page.id.clone();
            if map.insert(id.clone(), page).is_some() {
                return Err(WorldError::Invalid(format!("duplicate page id `{id}`")));
            }
        }
        let mut graph = PageGraph {
            name,
            start,
            pages: map,
            order,
            tasks,
            fingerprint: 0,
        };
        graph.validate()?;
        graph.fingerprint = graph.compute_fingerprint();
        Ok(graph)
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let file: GraphFile = serde_json::from_str(text)?;
        if let Some(f) = &file.format {
            if f != ENV_FORMAT {
                return Err(WorldError::Format(f.clone()));
            }
        }
        let name = file.name.unwrap_or_else(|| "unnamed".to_string());
        PageGraph::new(name, file.start, file.pages, file.tasks)
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            format: Some(ENV_FORMAT.to_string()),
            name: Some(self.name.clone()),
            start: self.start.clone(),
            pages: self.pages().cloned().collect(),
            tasks: self.tasks.clone(),
        };
        serde_json::to_string_pretty(&file).expect("page graph serializes")
    }

    fn validate(&self) -> Result<(), WorldError> {
        let invalid = |m: String| Err(WorldError::Invalid(m));
        if !self.pages.contains_key(&self.start) {
            return invalid(format!("start page `{}` does not exist", self.start));
        }
        for page in self.pages.values() {
            let mut seen = BTreeSet::new();
            for el in &page.elements {
                if !seen.insert(el.id) {
                    return invalid(format!("duplicate element {} on page `{}`", el.id, page.id));
                }
                if let Some(t) = &el.transition {
                    if !self.pages.contains_key(t) {
                        return invalid(format!(
                            "element {} on `{}` targets unknown page `{t}`",
                            el.id, page.id
                        ));
                    }
                }
                if let Some(req) = el.requires_input {
                    match page.element(req) {
                        Some(tb) if tb.role == ElementRole::Textbox => {}
                        _ => {
                            return invalid(format!(
                                "element {} on `{}` requires missing textbox {req}",
                                el.id, page.id
                            ))
                        }
                    }
                }
            }
            if let Some(popup) = &page.popup {
                if page.element(popup.close).is_none() {
                    return invalid(format!(
                        "popup on `{}` names missing close element {}",
                        page.id, popup.close
                    ));
                }
            }
        }
        let mut ids = BTreeSet::new();
        for task in &self.tasks {
            if !ids.insert(task.id.as_str()) {
                return invalid(format!("duplicate task id `{}`", task.id));
            }
            for p in task.goal.pages() {
                if !self.pages.contains_key(&p) {
                    return invalid(format!("task `{}` names unknown page `{p}`", task.id));
                }
            }
        }
        Ok(())
    }

    fn compute_fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.to_json().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn start(&self) -> &PageId {
        &self.start
    }

    pub fn page(&self, id: &PageId) -> Option<&Page> {
        self.pages.get(id)
    }

    /// Pages in file order.
    pub fn pages(&self) -> impl Iterator<Item = &Page> {
        self.order.iter().filter_map(|id| self.pages.get(id))
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn task(&self, id: &str) -> Result<&TaskSpec, WorldError> {
        self.tasks
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| WorldError::UnknownTask(id.to_string()))
    }

    /// Page whose title matches `title` (case-insensitive), if unique.
    pub fn page_by_title(&self, title: &str) -> Option<&Page> {
        let want = title.trim().to_lowercase();
        let mut hits = self.pages().filter(|p| p.title.to_lowercase() == want);
        let first = hits.next()?;
        if hits.next().is_some() {
            return None;
        }
        Some(first)
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_dangling_transition() {
        let pages = vec![Page {
            id: PageId::new("a"),
            title: "A".into(),
            elements: vec![Element {
                id: ElementId(1),
                role: ElementRole::Link,
                label: "to b".into(),
                transition: Some(PageId::new("b")),
                distractor: false,
                irreversible: false,
                requires_input: None,
            }],
            popup: None,
            addressable: false,
        }];
        let err = PageGraph::new("x", PageId::new("a"), pages, vec![]).unwrap_err();
        assert!(matches!(err, WorldError::Invalid(_)));
    }

    #[test]
    fn rejects_missing_start() {
        let err = PageGraph::new("x", PageId::new("nowhere"), vec![], vec![]).unwrap_err();
        assert!(matches!(err, WorldError::Invalid(_)));
    }

    #[test]
    fn answer_normalization() {
        let g = GoalPredicate::AnswerEquals {
            answer: "SAVE42".into(),
        };
        let p = PageId::new("x");
        assert!(g.holds(&p, Some(" \"save42\". ")));
        assert!(!g.holds(&p, Some("save43")));
        assert!(!g.holds(&p, None));
    }

    #[test]
    fn json_round_trip_preserves_fingerprint() {
        let g = fixtures::chain();
        let again = PageGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(g.fingerprint(), again.fingerprint());
        assert_eq!(g, again);
    }

    #[test]
    fn rejects_foreign_format() {
        let text = r#"{"format":"other/v9","start":"a","pages":[],"tasks":[]}"#;
        assert!(matches!(
            PageGraph::from_json(text),
            Err(WorldError::Format(_))
        ));
    }
}
