//! Plan-space search tree: verified states joined by subplan-labelled edges.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search::TrajectorySegment;
use crate::world::{AtomicAction, Observation, StateHandle};

pub const TREE_FORMAT: &str = "planmcts.tree/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Planner,
    Reflector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubplanStatus {
    Unattempted,
    Completed,
    NotCompleted,
}

impl SubplanStatus {
    pub fn label(self) -> &'static str {
        match self {
            SubplanStatus::Unattempted => "Unattempted",
            SubplanStatus::Completed => "Completed",
            SubplanStatus::NotCompleted => "Not Completed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subplan {
    text: String,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought: Option<String>,
    pub status: SubplanStatus,
    /// The subplan this one replaced during refinement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    replaces: Option<Box<Subplan>>,
}

impl Subplan {
    pub fn new(text: impl Into<String>) -> Result<Self, TreeError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(TreeError::EmptySubplan);
        }
        Ok(Subplan {
            text,
            origin: Origin::Planner,
            thought: None,
            status: SubplanStatus::Unattempted,
            replaces: None,
        })
    }

    pub fn with_thought(mut self, thought: impl Into<String>) -> Self {
        let t = thought.into();
        self.thought = if t.trim().is_empty() { None } else { Some(t) };
        self
    }

    /// A reflector revision of `original`.
    pub fn revision(text: impl Into<String>, original: Subplan) -> Result<Self, TreeError> {
        let mut s = Subplan::new(text)?;
        s.origin = Origin::Reflector;
        s.replaces = Some(Box::new(original));
        Ok(s)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn replaces(&self) -> Option<&Subplan> {
        self.replaces.as_deref()
    }
}

impl fmt::Display for Subplan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// One executed subplan as seen from a node below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub text: String,
    pub status: SubplanStatus,
    /// Textual feedback attached to the step, shown to policies verbatim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubplanEdge {
    pub subplan: Subplan,
    pub q_value: f64,
    pub visit_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding: Option<TrajectorySegment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child: Option<NodeId>,
    /// Set when grounding failed and refinement could not repair it.
    #[serde(default)]
    pub failed: bool,
    /// Fixed atomic action for action-space edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<AtomicAction>,
    /// Reflector diagnosis kept alongside an unchanged subplan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
}

impl SubplanEdge {
    pub fn new(subplan: Subplan) -> Self {
        SubplanEdge {
            subplan,
            q_value: 0.0,
            visit_count: 0,
            grounding: None,
            child: None,
            failed: false,
            action: None,
            feedback: None,
        }
    }

    pub fn for_action(action: AtomicAction) -> Self {
        let subplan = Subplan::new(action.to_string()).expect("actions render non-empty");
        SubplanEdge {
            action: Some(action),
            ..SubplanEdge::new(subplan)
        }
    }

    /// Fold one reward into the running mean.
    pub fn record(&mut self, reward: f64) {
        self.visit_count += 1;
        self.q_value += (reward - self.q_value) / self.visit_count as f64;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: NodeId,
    #[serde(skip_serializing)]
    pub state: Option<StateHandle>,
    #[serde(skip_serializing)]
    pub observation: Option<Observation>,
    pub plan_history: Vec<HistoryEntry>,
    pub edges: Vec<SubplanEdge>,
    pub depth: usize,
    /// Parent node and edge index; `None` for the root.
    pub parent: Option<(NodeId, usize)>,
    /// The planner could not produce children for this node.
    #[serde(default)]
    pub exhausted: bool,
}

impl PlanNode {
    /// N(s): max(1, sum of edge visits).
    pub fn visits(&self) -> u64 {
        self.edges.iter().map(|e| e.visit_count).sum::<u64>().max(1)
    }

    pub fn is_expanded(&self) -> bool {
        !self.edges.is_empty()
    }

    pub fn select_edge(&self, c: f64) -> Result<usize, TreeError> {
        select_edge(&self.edges, c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("node has no edges to select from")]
    EmptyFrontier,
    #[error("node {0} is already expanded")]
    AlreadyExpanded(NodeId),
    #[error("subplan text is empty")]
    EmptySubplan,
    #[error("expected between 1 and {max} subplans, got {got}")]
    BadWidth { got: usize, max: usize },
    #[error("node would exceed the depth bound {0}")]
    DepthExceeded(usize),
    #[error("no node {0}")]
    UnknownNode(NodeId),
    #[error("edge {1} of {0} does not exist")]
    UnknownEdge(NodeId, usize),
    #[error("edge {1} of {0} already has a child")]
    HasChild(NodeId, usize),
}

/// UCT priority. Unvisited edges get `f64::INFINITY`.
pub fn uct_score(q: f64, edge_visits: u64, parent_visits: u64, c: f64) -> f64 {
    if edge_visits == 0 {
        return f64::INFINITY;
    }
    let parent = parent_visits.max(1) as f64;
    q + c * (parent.ln() / edge_visits as f64).sqrt()
}

/// Index of the edge with the highest UCT score, lowest index on ties.
pub fn select_edge(edges: &[SubplanEdge], c: f64) -> Result<usize, TreeError> {
    if edges.is_empty() {
        return Err(TreeError::EmptyFrontier);
    }
    let parent = edges.iter().map(|e| e.visit_count).sum::<u64>().max(1);
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, e) in edges.iter().enumerate() {
        let s = uct_score(e.q_value, e.visit_count, parent, c);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    Ok(best)
}

/// Arena-backed plan tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTree {
    nodes: Vec<PlanNode>,
    max_depth: usize,
    branch_width: usize,
}

#[derive(Serialize)]
struct TreeDocument<'a> {
    format: &'static str,
    max_depth: usize,
    branch_width: usize,
    nodes: &'a [PlanNode],
}

impl PlanTree {
    pub fn new(
        root_state: StateHandle,
        root_observation: Observation,
        max_depth: usize,
        branch_width: usize,
    ) -> Self {
        PlanTree {
            nodes: vec![PlanNode {
                id: NodeId(0),
                state: Some(root_state),
                observation: Some(root_observation),
                plan_history: Vec::new(),
                edges: Vec::new(),
                depth: 0,
                parent: None,
                exhausted: false,
            }],
            max_depth,
            branch_width,
        }
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&PlanNode, TreeError> {
        self.nodes.get(id.0).ok_or(TreeError::UnknownNode(id))
    }

    pub fn node_mut(&mut self, id: NodeId) -> Result<&mut PlanNode, TreeError> {
        self.nodes.get_mut(id.0).ok_or(TreeError::UnknownNode(id))
    }

    pub fn edge(&self, id: NodeId, edge: usize) -> Result<&SubplanEdge, TreeError> {
        self.node(id)?
            .edges
            .get(edge)
            .ok_or(TreeError::UnknownEdge(id, edge))
    }

    pub fn edge_mut(&mut self, id: NodeId, edge: usize) -> Result<&mut SubplanEdge, TreeError> {
        self.node_mut(id)?
            .edges
            .get_mut(edge)
            .ok_or(TreeError::UnknownEdge(id, edge))
    }

    /// Attach one fresh edge per subplan, in proposal order.
    pub fn add_children(&mut self, id: NodeId, subplans: Vec<Subplan>) -> Result<(), TreeError> {
        let edges = subplans.into_iter().map(SubplanEdge::new).collect();
        self.add_edges(id, edges)
    }

    pub fn add_edges(&mut self, id: NodeId, edges: Vec<SubplanEdge>) -> Result<(), TreeError> {
        let width = self.branch_width;
        let node = self.node_mut(id)?;
        if node.is_expanded() {
            return Err(TreeError::AlreadyExpanded(id));
        }
        if edges.is_empty() || edges.len() > width {
            return Err(TreeError::BadWidth {
                got: edges.len(),
                max: width,
            });
        }
        node.edges = edges;
        Ok(())
    }

    /// Create the child node reached through `edge` of `parent`.
    pub fn add_node(
        &mut self,
        parent: NodeId,
        edge: usize,
        state: StateHandle,
        observation: Observation,
    ) -> Result<NodeId, TreeError> {
        let max_depth = self.max_depth;
        let (depth, history) = {
            let p = self.node(parent)?;
            let e = p.edges.get(edge).ok_or(TreeError::UnknownEdge(parent, edge))?;
            if e.child.is_some() {
                return Err(TreeError::HasChild(parent, edge));
            }
            let mut history = p.plan_history.clone();
            history.push(HistoryEntry {
                text: e.subplan.text().to_string(),
                status: SubplanStatus::Completed,
                note: None,
            });
            (p.depth + 1, history)
        };
        if depth > max_depth {
            return Err(TreeError::DepthExceeded(max_depth));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(PlanNode {
            id,
            state: Some(state),
            observation: Some(observation),
            plan_history: history,
            edges: Vec::new(),
            depth,
            parent: Some((parent, edge)),
            exhausted: false,
        });
        self.edge_mut(parent, edge)?.child = Some(id);
        Ok(id)
    }

    /// Update every edge on a root-to-leaf path with `reward`.
    pub fn backpropagate(&mut self, path: &[(NodeId, usize)], reward: f64) -> Result<(), TreeError> {
        for &(node, edge) in path {
            self.edge_mut(node, edge)?.record(reward);
        }
        Ok(())
    }

    /// Root-to-edge path ending at `edge` of `node`.
    pub fn path_to(&self, node: NodeId, edge: usize) -> Result<Vec<(NodeId, usize)>, TreeError> {
        let mut path = vec![(node, edge)];
        let mut cur = self.node(node)?;
        while let Some((p, e)) = cur.parent {
            path.push((p, e));
            cur = self.node(p)?;
        }
        path.reverse();
        Ok(path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TreeDocument {
            format: TREE_FORMAT,
            max_depth: self.max_depth,
            branch_width: self.branch_width,
            nodes: &self.nodes,
        })
        .expect("tree serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(q: f64, n: u64) -> SubplanEdge {
        let mut e = SubplanEdge::new(Subplan::new("x").unwrap());
        e.q_value = q;
        e.visit_count = n;
        e
    }

    #[test]
    fn uct_examples() {
        assert!((uct_score(0.5, 1, 4, 1.0) - 1.6774).abs() < 1e-4);
        assert!(uct_score(0.9, 0, 4, 1.0).is_infinite());
        assert_eq!(uct_score(0.3, 5, 5, 0.0), 0.3);
    }

    #[test]
    fn select_edge_examples() {
        assert_eq!(select_edge(&[edge(0.0, 0), edge(0.0, 0)], 1.0), Ok(0));
        assert_eq!(select_edge(&[edge(0.8, 3), edge(0.2, 1)], 1.0), Ok(0));
        assert_eq!(select_edge(&[edge(0.8, 3), edge(0.0, 0)], 1.0), Ok(1));
        assert_eq!(select_edge(&[], 1.0), Err(TreeError::EmptyFrontier));
    }

    #[test]
    fn incremental_mean() {
        let mut e = edge(0.5, 2);
        e.record(0.8);
        assert!((e.q_value - 0.6).abs() < 1e-12);
        assert_eq!(e.visit_count, 3);
        let mut e = edge(0.0, 0);
        e.record(0.7);
        assert!((e.q_value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn empty_subplan_rejected() {
        assert_eq!(Subplan::new("  "), Err(TreeError::EmptySubplan));
    }

    #[test]
    fn revision_keeps_original() {
        let orig = Subplan::new("open the menu").unwrap();
        let rev = Subplan::revision("use the search box", orig.clone()).unwrap();
        assert_eq!(rev.origin, Origin::Reflector);
        assert_eq!(rev.replaces(), Some(&orig));
    }
}
