use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::gate::{DualGate, EvaluationContext, RewardRecord};
use crate::llm::render::{render_macro, render_micro, render_operator, render_planner, render_reflector, RenderedPrompt};
use crate::llm::{RenderError, TokenUsage};
use crate::policy::{
    LocalStep, OperatorInput, PlannerInput, PolicyBundle, PolicyError, ProposalInput, ReflectorInput,
    ReflectorVerdict, Role,
};
use crate::tree::{HistoryEntry, NodeId, PlanTree, Subplan, SubplanEdge, SubplanStatus, TreeError};
use crate::world::{AtomicAction, Environment, StateHandle, WorldError, WorldState};

use super::config::{ConfigError, ContextMode, EdgeKind, RefinementMode, SearchConfig, SearchStrategy};
use super::segment::{Termination, TrajectorySegment};
use super::trace::{EpisodeTrace, Phase, PromptRecord, TraceEvent};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Why the iteration loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Answered,
    BudgetSpent,
    /// Every edge in the tree is marked failed.
    ExhaustedTree,
    /// Best-first search has no unvisited edge left.
    EmptyFrontier,
    /// The planner produced nothing for the root.
    RootExhausted,
    PolicyFailure,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub success: bool,
    pub answer: Option<String>,
    pub iterations_used: usize,
    pub budget: usize,
    /// Every `step` served by the environment during the episode.
    pub interactions: u64,
    /// Atomic actions from reset to the accepted answer.
    pub solution: Option<Vec<AtomicAction>>,
    pub solution_subplans: Vec<String>,
    pub subplans_grounded: usize,
    pub subplans_verified: usize,
    pub macro_calls: usize,
    pub operator_calls: usize,
    /// Total characters of rendered operator prompts.
    pub operator_context_chars: usize,
    pub tokens: BTreeMap<Role, TokenUsage>,
    pub stop: StopReason,
    pub error: Option<String>,
    pub trace: EpisodeTrace,
    pub tree: PlanTree,
}

impl EpisodeResult {
    pub fn path_length(&self) -> Option<usize> {
        self.solution.as_ref().map(Vec::len)
    }
}

pub fn run_episode(
    env: &mut dyn Environment,
    policies: &PolicyBundle,
    cfg: &SearchConfig,
) -> Result<EpisodeResult, SearchError> {
    cfg.validate()?;
    let (obs, root) = env.reset()?;
    let goal = env.instruction().to_string();
    let start_interactions = env.interactions();
    let tree = PlanTree::new(root, obs, cfg.max_depth, cfg.branch_width);
    let mut engine = Engine {
        cfg,
        gate: cfg.dual_gate(),
        env,
        pol: policies,
        goal,
        tree,
        trace: EpisodeTrace::default(),
        iteration: 0,
        token_mark: 0,
        grounded: 0,
        verified: 0,
        macro_calls: 0,
        operator_calls: 0,
        operator_chars: 0,
        best: None,
        start_interactions,
    };
    engine.token_mark = engine.total_tokens();
    engine.run()
}

enum Abort {
    Policy(PolicyError),
    Tree(TreeError),
    World(WorldError),
}

impl From<TreeError> for Abort {
    fn from(e: TreeError) -> Self {
        Abort::Tree(e)
    }
}

impl From<WorldError> for Abort {
    fn from(e: WorldError) -> Self {
        Abort::World(e)
    }
}

type TreePath = Vec<(NodeId, usize)>;

struct Grounding {
    segment: TrajectorySegment,
    reward: RewardRecord,
    end: StateHandle,
    steps: u64,
    prompts: Vec<PromptRecord>,
    path_actions: Vec<AtomicAction>,
}

struct Terminal {
    reward: f64,
    answer: String,
    success: bool,
    solution: Vec<AtomicAction>,
    subplans: Vec<String>,
}

struct Engine<'a> {
    cfg: &'a SearchConfig,
    gate: DualGate,
    env: &'a mut dyn Environment,
    pol: &'a PolicyBundle,
    goal: String,
    tree: PlanTree,
    trace: EpisodeTrace,
    iteration: usize,
    token_mark: u64,
    grounded: usize,
    verified: usize,
    macro_calls: usize,
    operator_calls: usize,
    operator_chars: usize,
    best: Option<Terminal>,
    start_interactions: u64,
}

fn action_strings(actions: &[AtomicAction]) -> Vec<String> {
    actions.iter().map(|a| a.to_string()).collect()
}

impl Engine<'_> {
    fn total_tokens(&self) -> u64 {
        self.pol.usage.as_ref().map_or(0, |u| {
            u.snapshot().values().map(TokenUsage::total).sum()
        })
    }

    fn emit(&mut self, phase: Phase, node: Option<NodeId>, edge: Option<usize>, mut detail: Value, started: Instant) {
        let tokens = self.pol.usage.as_ref().map(|_| {
            let now = self.total_tokens();
            let d = now - self.token_mark;
            self.token_mark = now;
            d
        });
        if self.cfg.verbose {
            if let Some(t) = &self.pol.transcript {
                let ex = t.drain();
                if !ex.is_empty() {
                    detail["exchanges"] = serde_json::to_value(ex).expect("exchanges serialize");
                }
            }
        }
        self.trace.push(TraceEvent {
            iteration: self.iteration,
            phase,
            node,
            edge,
            detail,
            tokens,
            elapsed_ms: self
                .cfg
                .record_timing
                .then(|| started.elapsed().as_secs_f64() * 1000.0),
        });
    }

    fn prompt(&self, role: Role, r: Result<RenderedPrompt, RenderError>) -> PromptRecord {
        match r {
            Ok(p) => PromptRecord::new(role, &p.system, &p.user, self.cfg.verbose),
            Err(e) => PromptRecord::new(role, "", &format!("render failed: {e}"), self.cfg.verbose),
        }
    }

    fn ground_truth(&self) -> Option<WorldState> {
        self.env.ground_truth().cloned()
    }

    fn run(mut self) -> Result<EpisodeResult, SearchError> {
        let started = Instant::now();
        let root = self.tree.root();
        let mut stop = StopReason::BudgetSpent;
        let mut error = None;
        match self.expand(root, started) {
            Ok(()) => {}
            Err(Abort::Policy(e)) => {
                stop = StopReason::PolicyFailure;
                error = Some(e.to_string());
            }
            Err(Abort::Tree(e)) => return Err(e.into()),
            Err(Abort::World(e)) => return Err(e.into()),
        }
        if error.is_none() && !self.tree.node(root)?.is_expanded() {
            stop = StopReason::RootExhausted;
        }
        let mut iterations = 0;
        if matches!(stop, StopReason::BudgetSpent) {
            for it in 1..=self.cfg.budget {
                let Some((node, edge, path)) = self.pick()? else {
                    stop = match self.cfg.strategy {
                        SearchStrategy::Uct => StopReason::ExhaustedTree,
                        SearchStrategy::BestFirst => StopReason::EmptyFrontier,
                    };
                    break;
                };
                self.iteration = it;
                iterations = it;
                match self.iterate(node, edge, path) {
                    Ok(true) if !self.cfg.exhaust_budget => {
                        stop = StopReason::Answered;
                        break;
                    }
                    Ok(_) => {}
                    Err(Abort::Policy(e)) => {
                        stop = StopReason::PolicyFailure;
                        error = Some(e.to_string());
                        break;
                    }
                    Err(Abort::Tree(e)) => return Err(e.into()),
                    Err(Abort::World(e)) => return Err(e.into()),
                }
            }
            if self.cfg.exhaust_budget && self.best.is_some() && stop == StopReason::BudgetSpent {
                stop = StopReason::Answered;
            }
        }
        Ok(self.finish(iterations, stop, error, started))
    }

    /// Choose the edge for the next iteration, or `None` when nothing is left.
    fn pick(&self) -> Result<Option<(NodeId, usize, TreePath)>, TreeError> {
        match self.cfg.strategy {
            SearchStrategy::Uct => {
                let all_failed = self
                    .tree
                    .nodes()
                    .iter()
                    .flat_map(|n| &n.edges)
                    .all(|e| e.failed);
                if all_failed {
                    return Ok(None);
                }
                let (node, edge) = self.select_leaf()?;
                Ok(Some((node, edge, self.tree.path_to(node, edge)?)))
            }
            SearchStrategy::BestFirst => Ok(self.best_frontier().map(|(n, e)| (n, e, vec![(n, e)]))),
        }
    }

    /// UCT descent from the root.
    fn select_leaf(&self) -> Result<(NodeId, usize), TreeError> {
        let mut node = self.tree.root();
        loop {
            let n = self.tree.node(node)?;
            let e = n.select_edge(self.cfg.c)?;
            let edge = &n.edges[e];
            if edge.visit_count == 0 {
                return Ok((node, e));
            }
            match edge.child {
                Some(child) if self.tree.node(child)?.is_expanded() => node = child,
                _ => return Ok((node, e)),
            }
        }
    }

    /// Unvisited edge under the best-scoring node; ties to the earlier node.
    fn best_frontier(&self) -> Option<(NodeId, usize)> {
        let mut best: Option<(f64, NodeId, usize)> = None;
        for n in self.tree.nodes() {
            let Some(e) = n.edges.iter().position(|e| e.visit_count == 0) else {
                continue;
            };
            let score = match n.parent {
                None => f64::INFINITY,
                Some((p, pe)) => self.tree.edge(p, pe).map_or(0.0, |x| x.q_value),
            };
            if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, n.id, e));
            }
        }
        best.map(|(_, n, e)| (n, e))
    }

    /// One full iteration. Returns true when a verified answer was found.
    fn iterate(&mut self, node: NodeId, edge: usize, path: Vec<(NodeId, usize)>) -> Result<bool, Abort> {
        let t0 = Instant::now();
        let e = self.tree.edge(node, edge)?;
        let sel = json!({
            "path": path.iter().map(|(n, e)| json!([n, e])).collect::<Vec<_>>(),
            "subplan": e.subplan.text(),
            "visits": e.visit_count,
            "q": e.q_value,
            "depth": self.tree.node(node)?.depth,
        });
        self.emit(Phase::Selection, Some(node), Some(edge), sel, t0);

        let t0 = Instant::now();
        let mut g = self.simulate(node, edge)?;
        let detail = self.grounding_detail(node, edge, &g);
        self.emit(Phase::Simulation, Some(node), Some(edge), detail, t0);

        let pinned = self.tree.edge(node, edge)?.action.is_some();
        if g.reward.r_micro == 0 && !pinned {
            g = self.refine(node, edge, g)?;
        }

        let verified = g.reward.r_micro == 1;
        let mut answered = false;
        {
            let e = self.tree.edge_mut(node, edge)?;
            e.grounding = Some(g.segment.clone());
            e.failed = !verified;
        }
        if verified {
            if g.segment.terminated == Termination::AnswerEmitted {
                answered = true;
                self.offer_terminal(node, edge, &g)?;
            } else if self.tree.edge(node, edge)?.child.is_none() {
                let t0 = Instant::now();
                let child = self
                    .tree
                    .add_node(node, edge, g.end.clone(), g.segment.post().clone())?;
                if let Some(original) = self.tree.edge(node, edge)?.subplan.replaces().cloned() {
                    let hist = &mut self.tree.node_mut(child)?.plan_history;
                    let at = hist.len() - 1;
                    hist.insert(
                        at,
                        HistoryEntry {
                            text: original.text().to_string(),
                            status: SubplanStatus::NotCompleted,
                            note: None,
                        },
                    );
                }
                self.expand(child, t0)?;
            }
        }

        let t0 = Instant::now();
        let reward = g.reward.reward;
        match self.cfg.strategy {
            SearchStrategy::Uct => self.tree.backpropagate(&path, reward)?,
            SearchStrategy::BestFirst => self.tree.edge_mut(node, edge)?.record(reward),
        }
        let bp = json!({
            "reward": reward,
            "path": path.iter().map(|(n, e)| json!([n, e])).collect::<Vec<_>>(),
            "failed": !verified,
        });
        self.emit(Phase::Backpropagation, Some(node), Some(edge), bp, t0);
        Ok(answered)
    }

    fn offer_terminal(&mut self, node: NodeId, edge: usize, g: &Grounding) -> Result<(), Abort> {
        let better = self
            .best
            .as_ref()
            .is_none_or(|b| g.reward.reward > b.reward);
        if !better {
            return Ok(());
        }
        let mut subplans: Vec<String> = self
            .tree
            .node(node)?
            .plan_history
            .iter()
            .filter(|h| h.status == SubplanStatus::Completed)
            .map(|h| h.text.clone())
            .collect();
        subplans.push(self.tree.edge(node, edge)?.subplan.text().to_string());
        self.best = Some(Terminal {
            reward: g.reward.reward,
            answer: g.segment.answer().unwrap_or_default().to_string(),
            success: g.end.state().success,
            solution: g.end.trace().to_vec(),
            subplans,
        });
        Ok(())
    }

    fn simulate(&mut self, node: NodeId, edge: usize) -> Result<Grounding, Abort> {
        let n = self.tree.node(node)?;
        let start = n.state.clone().expect("tree nodes carry a state handle");
        let history = n.plan_history.clone();
        let e = n.edges[edge].clone();
        let before = self.env.interactions();
        let obs0 = self.env.restore_state(&start)?;
        let pre_state = self.ground_truth();
        let mut seg = TrajectorySegment::start(obs0.clone());
        let mut prompts = Vec::new();

        if let Some(action) = &e.action {
            let out = self.env.step(action);
            seg.push(action.clone(), out.observation);
            seg.terminated = if action.is_terminal() {
                Termination::AnswerEmitted
            } else if out.terminated {
                Termination::EnvError
            } else {
                Termination::Fulfilled
            };
        } else {
            let mut op_history = history.clone();
            if let Some(note) = &e.feedback {
                op_history.push(HistoryEntry {
                    text: e.subplan.text().to_string(),
                    status: SubplanStatus::NotCompleted,
                    note: Some(note.clone()),
                });
            }
            let prior: Vec<LocalStep> = match self.cfg.context {
                ContextMode::Decoupled => Vec::new(),
                ContextMode::FullHistory => start
                    .trace()
                    .iter()
                    .map(|a| LocalStep {
                        action: a.clone(),
                        error: None,
                    })
                    .collect(),
            };
            let mut local: Vec<LocalStep> = Vec::new();
            let mut obs = obs0;
            seg.terminated = Termination::StepCapReached;
            for _ in 0..self.cfg.max_atomic_steps {
                let context: Vec<LocalStep> = prior.iter().chain(&local).cloned().collect();
                let state = self.ground_truth();
                let input = OperatorInput {
                    goal: &self.goal,
                    observation: &obs,
                    history: &op_history,
                    local: &context,
                    subplan: &e.subplan,
                    state: state.as_ref(),
                };
                let p = self.prompt(Role::Operator, render_operator(&input));
                self.operator_calls += 1;
                self.operator_chars += p.chars;
                prompts.push(p);
                let d = self.pol.operator.decide(&input).map_err(Abort::Policy)?;
                if d.action.is_noop() {
                    seg.terminated = Termination::Fulfilled;
                    break;
                }
                let out = self.env.step(&d.action);
                local.push(LocalStep {
                    action: d.action.clone(),
                    error: out.observation.error.clone(),
                });
                obs = out.observation.clone();
                seg.push(d.action.clone(), out.observation);
                if d.action.is_terminal() {
                    seg.terminated = Termination::AnswerEmitted;
                    break;
                }
                if out.terminated {
                    seg.terminated = Termination::EnvError;
                    break;
                }
                if d.subplan_done {
                    seg.terminated = Termination::Fulfilled;
                    break;
                }
            }
        }

        let post_state = self.ground_truth();
        let ctx = EvaluationContext {
            goal: &self.goal,
            plan_history: &history,
            subplan: &e.subplan,
            segment: &seg,
            pre_state: pre_state.as_ref(),
            post_state: post_state.as_ref(),
        };
        prompts.push(self.prompt(Role::MicroJudge, render_micro(&ctx)));
        let reward = self
            .gate
            .evaluate(&ctx, &*self.pol.micro_judge, &*self.pol.macro_judge);
        if reward.macro_calls > 0 {
            prompts.push(self.prompt(Role::MacroJudge, render_macro(&ctx)));
        }
        self.grounded += 1;
        self.verified += usize::from(reward.r_micro);
        self.macro_calls += reward.macro_calls;
        Ok(Grounding {
            end: self.env.snapshot(),
            steps: self.env.interactions() - before,
            segment: seg,
            reward,
            prompts,
            path_actions: start.trace().to_vec(),
        })
    }

    fn grounding_detail(&self, node: NodeId, edge: usize, g: &Grounding) -> Value {
        let subplan = self
            .tree
            .edge(node, edge)
            .map(|e| e.subplan.text().to_string())
            .unwrap_or_default();
        json!({
            "subplan": subplan,
            "actions": action_strings(&g.segment.actions),
            "errors": g.segment.errors().collect::<Vec<_>>(),
            "terminated": g.segment.terminated,
            "post_page": g.segment.post().page,
            "answer": g.segment.answer(),
            "steps": g.steps,
            "path_actions": action_strings(&g.path_actions),
            "reward": g.reward,
            "prompts": g.prompts,
        })
    }

    /// Ask the reflector about a failed grounding. Parse failures end refinement.
    fn reflect(
        &mut self,
        node: NodeId,
        edge: usize,
        g: &Grounding,
    ) -> Result<(Result<ReflectorVerdict, PolicyError>, PromptRecord), Abort> {
        let n = self.tree.node(node)?;
        let history = n.plan_history.clone();
        let start_state = n.state.as_ref().map(|h| h.state().clone());
        let subplan = n.edges[edge].subplan.clone();
        let post = self.ground_truth();
        let input = ReflectorInput {
            goal: &self.goal,
            observation: g.segment.post(),
            history: &history,
            subplan: &subplan,
            failure: &g.segment,
            start_state: start_state.as_ref(),
            state: post.as_ref(),
        };
        let prompt = self.prompt(Role::Reflector, render_reflector(&input));
        match self.pol.reflector.revise(&input) {
            Err(e @ PolicyError::Endpoint { .. }) => Err(Abort::Policy(e)),
            other => Ok((other, prompt)),
        }
    }

    fn refine(&mut self, node: NodeId, edge: usize, mut g: Grounding) -> Result<Grounding, Abort> {
        match self.cfg.refinement {
            RefinementMode::Disabled => {}
            RefinementMode::Revise => {
                for attempt in 0..self.cfg.refine_retries {
                    let t0 = Instant::now();
                    let (verdict, prompt) = self.reflect(node, edge, &g)?;
                    let verdict = match verdict {
                        Ok(v) => v,
                        Err(e) => {
                            let detail = json!({"attempt": attempt, "error": e.to_string(), "prompts": [prompt]});
                            self.emit(Phase::Refinement, Some(node), Some(edge), detail, t0);
                            break;
                        }
                    };
                    let original = self.tree.edge(node, edge)?.subplan.clone();
                    let revised = match Subplan::revision(verdict.revised_plan.clone(), original) {
                        Ok(s) => s,
                        Err(e) => {
                            let detail = json!({"attempt": attempt, "error": e.to_string(), "prompts": [prompt]});
                            self.emit(Phase::Refinement, Some(node), Some(edge), detail, t0);
                            break;
                        }
                    };
                    self.tree.edge_mut(node, edge)?.subplan = revised;
                    g = self.simulate(node, edge)?;
                    let mut detail = self.grounding_detail(node, edge, &g);
                    detail["attempt"] = json!(attempt);
                    detail["reason_type"] = json!(verdict.reason_type);
                    detail["reason"] = json!(verdict.reason);
                    detail["reflector_prompt"] = json!(prompt);
                    self.emit(Phase::Refinement, Some(node), Some(edge), detail, t0);
                    if g.reward.r_micro == 1 {
                        break;
                    }
                }
            }
            RefinementMode::ReflectionOnly => {
                if self.cfg.refine_retries > 0 {
                    let t0 = Instant::now();
                    let (verdict, prompt) = self.reflect(node, edge, &g)?;
                    let detail = match verdict {
                        Ok(v) => {
                            let note = format!("{} Suggested revision: {}", v.reason, v.revised_plan)
                                .trim()
                                .to_string();
                            self.tree.edge_mut(node, edge)?.feedback = Some(note.clone());
                            json!({
                                "attempt": 0,
                                "reason_type": v.reason_type,
                                "feedback": note,
                                "reflector_prompt": prompt,
                            })
                        }
                        Err(e) => json!({"attempt": 0, "error": e.to_string(), "prompts": [prompt]}),
                    };
                    self.emit(Phase::Refinement, Some(node), Some(edge), detail, t0);
                }
            }
        }
        Ok(g)
    }

    /// Attach children to a freshly created node.
    fn expand(&mut self, node: NodeId, t0: Instant) -> Result<(), Abort> {
        let n = self.tree.node(node)?;
        let depth = n.depth;
        if depth >= self.cfg.max_depth {
            let detail = json!({"depth": depth, "frontier_terminal": true});
            self.emit(Phase::Expansion, Some(node), None, detail, t0);
            return Ok(());
        }
        let obs = n.observation.clone().expect("tree nodes carry an observation");
        let history = n.plan_history.clone();
        let state = self.ground_truth();
        let (edges, prompt, err) = match self.cfg.edge_kind {
            EdgeKind::Subplan => {
                let input = PlannerInput {
                    goal: &self.goal,
                    observation: &obs,
                    history: &history,
                    k: self.cfg.branch_width,
                    state: state.as_ref(),
                };
                let prompt = self.prompt(Role::Planner, render_planner(&input));
                match self.pol.planner.propose(&input) {
                    Ok(mut s) => {
                        s.truncate(self.cfg.branch_width);
                        (s.into_iter().map(SubplanEdge::new).collect::<Vec<_>>(), Some(prompt), None)
                    }
                    Err(e @ PolicyError::Endpoint { .. }) => return Err(Abort::Policy(e)),
                    Err(e) => (Vec::new(), Some(prompt), Some(e.to_string())),
                }
            }
            EdgeKind::Action => {
                let local: Vec<LocalStep> = match self.cfg.context {
                    ContextMode::Decoupled => Vec::new(),
                    ContextMode::FullHistory => n
                        .state
                        .as_ref()
                        .map(|h| {
                            h.trace()
                                .iter()
                                .map(|a| LocalStep {
                                    action: a.clone(),
                                    error: None,
                                })
                                .collect()
                        })
                        .unwrap_or_default(),
                };
                let input = ProposalInput {
                    goal: &self.goal,
                    observation: &obs,
                    local: &local,
                    k: self.cfg.branch_width,
                    state: state.as_ref(),
                };
                match self.pol.operator.propose_actions(&input) {
                    Ok(actions) => {
                        let mut uniq: Vec<AtomicAction> = Vec::new();
                        for a in actions {
                            if !uniq.contains(&a) && uniq.len() < self.cfg.branch_width {
                                uniq.push(a);
                            }
                        }
                        (uniq.into_iter().map(SubplanEdge::for_action).collect(), None, None)
                    }
                    Err(e @ PolicyError::Endpoint { .. }) => return Err(Abort::Policy(e)),
                    Err(e) => (Vec::new(), None, Some(e.to_string())),
                }
            }
        };
        let texts: Vec<String> = edges.iter().map(|e| e.subplan.text().to_string()).collect();
        if edges.is_empty() {
            self.tree.node_mut(node)?.exhausted = true;
        } else {
            self.tree.add_edges(node, edges)?;
        }
        let mut detail = json!({
            "depth": depth,
            "children": texts,
            "exhausted": texts.is_empty(),
        });
        if let Some(p) = prompt {
            detail["prompts"] = json!([p]);
        }
        if let Some(e) = err {
            detail["error"] = json!(e);
        }
        self.emit(Phase::Expansion, Some(node), None, detail, t0);
        Ok(())
    }

    fn finish(mut self, iterations: usize, stop: StopReason, error: Option<String>, started: Instant) -> EpisodeResult {
        let interactions = self.env.interactions() - self.start_interactions;
        let tokens = self
            .pol
            .usage
            .as_ref()
            .map(|u| u.snapshot())
            .unwrap_or_default();
        let best = self.best.take();
        let success = best.as_ref().is_some_and(|b| b.success);
        let answer = best.as_ref().map(|b| b.answer.clone());
        let solution = best.as_ref().map(|b| b.solution.clone());
        let solution_subplans = best.as_ref().map(|b| b.subplans.clone()).unwrap_or_default();
        let detail = json!({
            "success": success,
            "answer": answer,
            "stop": stop,
            "iterations_used": iterations,
            "budget": self.cfg.budget,
            "interactions": interactions,
            "path_length": solution.as_ref().map(Vec::len),
            "solution": solution.as_deref().map(action_strings),
            "subplans": solution_subplans,
            "subplans_grounded": self.grounded,
            "subplans_verified": self.verified,
            "macro_calls": self.macro_calls,
            "tokens_by_role": tokens,
            "error": error,
        });
        self.iteration = iterations;
        self.emit(Phase::EpisodeEnd, None, None, detail, started);
        EpisodeResult {
            success,
            answer,
            iterations_used: iterations,
            budget: self.cfg.budget,
            interactions,
            solution,
            solution_subplans,
            subplans_grounded: self.grounded,
            subplans_verified: self.verified,
            macro_calls: self.macro_calls,
            operator_calls: self.operator_calls,
            operator_context_chars: self.operator_chars,
            tokens,
            stop,
            error,
            trace: self.trace,
            tree: self.tree,
        }
    }
}
