//! Deterministic adapters driven by the simulator's ground truth.
//!
//! They see the latent [`WorldState`] through the `state` fields of the
//! policy inputs and answer from oracle searches, so every output is a pure
//! function of the inputs, the environment and the seed.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use crate::gate::{EvaluationContext, MacroCode, MacroStatus};
use crate::tree::{Subplan, SubplanStatus};
use crate::world::{
    shortest_path, AtomicAction, Capabilities, ElementRole, Observation, PageGraph, PageId,
    Target, TaskSpec, WorldState,
};

use super::{
    resolve_intent, Intent, IntentTarget, MacroJudge, MicroJudge, Operator, OperatorDecision,
    OperatorInput, Planner, PlannerInput, PolicyBundle, PolicyError, PolicyFactory, PolicyTable,
    ProposalInput, ReasonType, Reflector, ReflectorInput, ReflectorVerdict, Role,
};

/// Page hops covered by the planner's standard proposal.
const STRIDE: usize = 2;

fn mix(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Ground truth shared by the scripted roles of one episode.
#[derive(Debug)]
struct World {
    graph: Arc<PageGraph>,
    task: TaskSpec,
    table: Option<Arc<PolicyTable>>,
}

impl World {
    fn max_len(&self) -> usize {
        self.task.horizon as usize
    }

    fn intent(&self, text: &str, here: &PageId) -> Option<Intent> {
        resolve_intent(text, &self.graph, here, self.table.as_deref())
    }

    fn goal_path(&self, state: &WorldState) -> Option<Vec<AtomicAction>> {
        shortest_path(
            &self.graph,
            &self.task,
            state,
            &Target::Goal,
            &Capabilities::full(&self.task),
            self.max_len(),
        )
    }

    fn distance(&self, state: &WorldState) -> Option<usize> {
        self.goal_path(state).map(|p| p.len())
    }

    fn title(&self, page: &PageId) -> String {
        self.graph
            .page(page)
            .map_or_else(|| page.to_string(), |p| p.title.clone())
    }

    /// Pages entered along `path`, in order, starting from `state`.
    fn pages_along(&self, state: &WorldState, path: &[AtomicAction]) -> Vec<PageId> {
        let mut s = state.clone();
        let mut pages = Vec::new();
        for a in path {
            let before = s.page.clone();
            crate::world::apply_action(&self.graph, &self.task, &mut s, a);
            if s.page != before {
                pages.push(s.page.clone());
            }
        }
        pages
    }

    fn answer_for(&self, obs: &Observation) -> AtomicAction {
        let expected = self.task.goal.answers();
        if expected.is_empty() {
            return AtomicAction::send("done");
        }
        if let Some(a) = expected.iter().find(|a| obs.shows(a)) {
            return AtomicAction::send(a.clone());
        }
        let text = obs
            .elements
            .iter()
            .find(|e| e.role == ElementRole::Text)
            .map(|e| e.label.clone())
            .unwrap_or_default();
        AtomicAction::send(text)
    }

    fn wants_answer(&self) -> bool {
        !self.task.goal.answers().is_empty()
    }
}

fn need_state(state: Option<&WorldState>, role: Role) -> Result<&WorldState, PolicyError> {
    state.ok_or_else(|| PolicyError::parse(role, "scripted adapter requires the simulator state"))
}

fn subplan(text: String, thought: &str) -> Subplan {
    Subplan::new(text)
        .expect("scripted subplans are non-empty")
        .with_thought(thought)
}

fn navigate_text(title: &str, report: bool) -> String {
    if report {
        format!("Navigate to the '{title}' page and report the answer")
    } else {
        format!("Navigate to the '{title}' page")
    }
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

pub struct ScriptedPlanner {
    world: Arc<World>,
}

impl ScriptedPlanner {
    fn explore(&self, obs: &Observation, k: usize) -> Vec<Subplan> {
        let mut out: Vec<Subplan> = obs
            .elements
            .iter()
            .filter(|e| matches!(e.role, ElementRole::Link | ElementRole::Button))
            .take(k)
            .map(|e| subplan(format!("Click the '{}' link", e.label), "explore an unvisited link"))
            .collect();
        if out.is_empty() {
            out.push(subplan(
                "Report the requested information from this page".to_string(),
                "nothing left to explore",
            ));
        }
        out
    }

    fn alternative(&self, state: &WorldState, first: Option<&AtomicAction>) -> Option<Subplan> {
        let w = &self.world;
        let page = w.graph.page(&state.page)?;
        let popup_close = page.popup.as_ref().map(|p| p.close);
        let clickable = |e: &&crate::world::Element| {
            matches!(e.role, ElementRole::Link | ElementRole::Button)
                && Some(e.id) != popup_close
                && first.and_then(|a| a.target()) != Some(e.id)
        };
        for el in page.elements.iter().filter(clickable) {
            if el.distractor {
                continue;
            }
            let Some(to) = &el.transition else { continue };
            let mut s = state.clone();
            s.closed_popups.insert(s.page.clone());
            crate::world::apply_action(&w.graph, &w.task, &mut s, &AtomicAction::Click { target: el.id });
            if s.page == *to && w.distance(&s).is_some() {
                return Some(subplan(
                    format!("Open '{}'", w.title(to)),
                    "a second route toward the goal",
                ));
            }
        }
        let el = page
            .elements
            .iter()
            .filter(clickable)
            .find(|e| e.distractor)
            .or_else(|| page.elements.iter().find(clickable))?;
        let text = match &el.transition {
            Some(to) if w.graph.page_by_title(&el.label).is_some() => {
                format!("Open '{}'", w.title(to))
            }
            _ => format!("Click the '{}' link", el.label),
        };
        Some(subplan(text, "try a different part of the site"))
    }
}

impl Planner for ScriptedPlanner {
    fn propose(&self, input: &PlannerInput<'_>) -> Result<Vec<Subplan>, PolicyError> {
        let w = &self.world;
        let k = input.k.max(1);
        if let Some(rows) = w
            .table
            .as_ref()
            .and_then(|t| t.planner_for(&input.observation.page, input.goal))
        {
            let mut out: Vec<Subplan> = rows
                .iter()
                .filter(|r| !r.trim().is_empty())
                .map(|r| subplan(r.clone(), "from the policy table"))
                .collect();
            out.truncate(k);
            return Ok(out);
        }
        let state = need_state(input.state, Role::Planner)?;
        let Some(path) = w.goal_path(state) else {
            return Ok(self.explore(input.observation, k));
        };
        let pages = w.pages_along(state, &path);
        if pages.is_empty() {
            return Ok(vec![subplan(
                "Report the requested information from this page".to_string(),
                "the answer is on the current page",
            )]);
        }
        let m = pages.len();
        let idx = STRIDE.min(m) - 1;
        let report = idx == m - 1 && w.wants_answer();
        let standard = subplan(
            navigate_text(&w.title(&pages[idx]), report),
            "move toward the goal",
        );
        let granular = subplan(
            format!("Open '{}'", w.title(&pages[0])),
            "take one step at a time",
        );
        let retry_first = input
            .history
            .last()
            .is_some_and(|h| h.status == SubplanStatus::NotCompleted);
        let mut out = if retry_first {
            vec![granular, standard]
        } else {
            vec![standard, granular]
        };
        if let Some(alt) = self.alternative(state, path.first()) {
            out.push(alt);
        }
        let mut seen = std::collections::HashSet::new();
        out.retain(|s| seen.insert(s.text().to_string()));
        out.truncate(k);
        Ok(out)
    }
}

pub struct ScriptedOperator {
    world: Arc<World>,
    seed: u64,
    epsilon: f64,
}

impl ScriptedOperator {
    fn noisy(&self, obs: &Observation, key: &[&[u8]], correct: &AtomicAction) -> Option<AtomicAction> {
        if self.epsilon <= 0.0 {
            return None;
        }
        if unit(mix(self.seed, key)) >= self.epsilon {
            return None;
        }
        let others: Vec<_> = obs
            .elements
            .iter()
            .filter(|e| e.role != ElementRole::Text && Some(e.id) != correct.target())
            .filter(|e| obs.popup.as_ref().is_none_or(|p| p.close != e.id))
            .collect();
        if others.is_empty() {
            return None;
        }
        let pick = mix(self.seed ^ 0x5eed, key) as usize % others.len();
        Some(AtomicAction::Click {
            target: others[pick].id,
        })
    }
}

impl Operator for ScriptedOperator {
    fn decide(&self, input: &OperatorInput<'_>) -> Result<OperatorDecision, PolicyError> {
        let w = &self.world;
        let state = need_state(input.state, Role::Operator)?;
        let obs = input.observation;
        let Some(intent) = w.intent(input.subplan.text(), &obs.page) else {
            return Ok(OperatorDecision::done("the subplan names nothing on this site"));
        };
        let action = match &intent.target {
            IntentTarget::Page(p) if &state.page == p => {
                return Ok(OperatorDecision::done("already on the requested page"))
            }
            IntentTarget::PageThenAnswer(p) if &state.page == p => w.answer_for(obs),
            IntentTarget::Answer => w.answer_for(obs),
            IntentTarget::Page(p) | IntentTarget::PageThenAnswer(p) => {
                let route = shortest_path(
                    &w.graph,
                    &w.task,
                    state,
                    &Target::Page(p.clone()),
                    &intent.execution_caps(),
                    w.max_len(),
                );
                match route.and_then(|r| r.into_iter().next()) {
                    Some(a) => a,
                    None => return Ok(OperatorDecision::done("no route to the requested page")),
                }
            }
            IntentTarget::Click(id) => {
                let clicked = input
                    .local
                    .iter()
                    .any(|s| s.error.is_none() && s.action.target() == Some(*id));
                if clicked {
                    return Ok(OperatorDecision::done("the element has been clicked"));
                }
                AtomicAction::Click { target: *id }
            }
        };
        if !action.is_terminal() {
            let depth = input.local.len().to_le_bytes();
            let key: [&[u8]; 3] = [
                obs.page.as_str().as_bytes(),
                input.subplan.text().as_bytes(),
                &depth,
            ];
            if let Some(wrong) = self.noisy(obs, &key, &action) {
                return Ok(OperatorDecision::act(wrong, "misread the page"));
            }
        }
        Ok(OperatorDecision::act(action, "next step of the shortest route"))
    }

    fn propose_actions(&self, input: &ProposalInput<'_>) -> Result<Vec<AtomicAction>, PolicyError> {
        let w = &self.world;
        let state = need_state(input.state, Role::Operator)?;
        let obs = input.observation;
        let k = input.k.max(1);
        let step = state.step.to_le_bytes();
        let page = obs.page.as_str().as_bytes();

        let mut others: Vec<AtomicAction> = Vec::new();
        for e in &obs.elements {
            match e.role {
                ElementRole::Link | ElementRole::Button => {
                    others.push(AtomicAction::Click { target: e.id })
                }
                ElementRole::Textbox => {
                    for t in &w.task.inputs {
                        others.push(AtomicAction::Type {
                            target: e.id,
                            text: t.clone(),
                        })
                    }
                }
                ElementRole::Text => {}
            }
        }
        let correct = w.goal_path(state).and_then(|p| p.into_iter().next());
        if let Some(c) = &correct {
            others.retain(|a| a != c);
        }
        others.sort_by_key(|a| mix(self.seed, &[page, &step, a.to_string().as_bytes()]));

        let mut out: Vec<AtomicAction> = others.into_iter().take(k).collect();
        if let Some(c) = correct {
            let roll = unit(mix(self.seed, &[page, &step, b"slot"]));
            if roll >= self.epsilon {
                out.insert(0, c);
            } else if roll >= self.epsilon / 2.0 {
                let h = mix(self.seed, &[page, &step, b"where"]) as usize;
                let slot = 1 + h % (k - 1).max(1);
                out.insert(slot.min(out.len()), c);
            }
        }
        out.truncate(k);
        if out.is_empty() {
            out.push(w.answer_for(obs));
        }
        Ok(out)
    }
}

pub struct ScriptedReflector {
    world: Arc<World>,
}

impl ScriptedReflector {
    fn pivot_to_milestone(&self, state: &WorldState) -> String {
        let w = &self.world;
        let Some(path) = w.goal_path(state) else {
            return "Report the requested information from this page".to_string();
        };
        let pages = w.pages_along(state, &path);
        if pages.is_empty() {
            return "Report the requested information from this page".to_string();
        }
        let m = pages.len();
        let idx = STRIDE.min(m) - 1;
        let report = idx == m - 1 && w.wants_answer();
        let needs_input = path.iter().any(|a| matches!(a, AtomicAction::Type { .. }));
        let title = w.title(&pages[idx]);
        if needs_input {
            match w.task.inputs.first() {
                Some(q) => {
                    let mut t = format!("Search for '{q}' using the search box and open the '{title}' page");
                    if report {
                        t.push_str(" and report the answer");
                    }
                    t
                }
                None => navigate_text(&title, report),
            }
        } else {
            navigate_text(&title, report)
        }
    }
}

impl Reflector for ScriptedReflector {
    fn revise(&self, input: &ReflectorInput<'_>) -> Result<ReflectorVerdict, PolicyError> {
        let w = &self.world;
        let start = need_state(input.start_state.or(input.state), Role::Reflector)?;
        let here = &input.failure.pre().page;
        let intent = w.intent(input.subplan.text(), here);
        let target = intent.as_ref().map(|i| match i.page() {
            Some(p) if !i.wants_answer() => Target::Page(p.clone()),
            _ => Target::Goal,
        });

        if input.failure.actions.is_empty() {
            return Ok(ReflectorVerdict {
                reason_type: ReasonType::FeasibilityError,
                reason: "the operator could not ground the subplan from this page".to_string(),
                revised_plan: self.pivot_to_milestone(start),
            });
        }
        if input.failure.errors().any(|e| e.contains("popup")) {
            return Ok(ReflectorVerdict {
                reason_type: ReasonType::ComplexityError,
                reason: "a modal dialog blocked every interaction".to_string(),
                revised_plan: format!("Close the popup, then {}", lower_first(input.subplan.text())),
            });
        }
        if let (Some(intent), Some(target)) = (&intent, &target) {
            let strict = shortest_path(&w.graph, &w.task, start, target, &intent.strict_caps(), w.max_len());
            if let Some(path) = strict {
                let pages = w.pages_along(start, &path);
                if let Some(first) = pages.first() {
                    return Ok(ReflectorVerdict {
                        reason_type: ReasonType::ComplexityError,
                        reason: "the subplan was too long to execute in one go".to_string(),
                        revised_plan: format!("Open '{}'", w.title(first)),
                    });
                }
            }
            let full = shortest_path(
                &w.graph,
                &w.task,
                start,
                target,
                &Capabilities::full(&w.task),
                w.max_len(),
            );
            if let Some(path) = full {
                let typed = path.iter().find_map(|a| match a {
                    AtomicAction::Type { text, .. } => Some(text.clone()),
                    _ => None,
                });
                let title = intent.page().map(|p| w.title(p));
                if let (Some(q), Some(title)) = (typed, title) {
                    let mut plan = format!("Search for '{q}' using the search box and open the '{title}' page");
                    if intent.wants_answer() {
                        plan.push_str(" and report the answer");
                    }
                    return Ok(ReflectorVerdict {
                        reason_type: ReasonType::FeasibilityError,
                        reason: "the chosen route cannot reach the target".to_string(),
                        revised_plan: plan,
                    });
                }
            }
        }
        Ok(ReflectorVerdict {
            reason_type: ReasonType::FeasibilityError,
            reason: "the subplan leads away from the goal".to_string(),
            revised_plan: self.pivot_to_milestone(start),
        })
    }
}

/// Micro judge that checks the post-state against the subplan's target.
pub struct GroundTruthMicroJudge {
    world: Arc<World>,
}

impl MicroJudge for GroundTruthMicroJudge {
    fn verify(&self, ctx: &EvaluationContext<'_>) -> Result<bool, PolicyError> {
        let post = need_state(ctx.post_state, Role::MicroJudge)?;
        let seg = ctx.segment;
        if seg.had_error() {
            return Ok(false);
        }
        if post.terminated && !post.success {
            return Ok(false);
        }
        if let Some(answer) = seg.answer() {
            if answer.trim().is_empty() {
                return Ok(false);
            }
        }
        if let Ok(pinned) = ctx.subplan.text().parse::<AtomicAction>() {
            if seg.actions.len() == 1 && seg.actions[0] == pinned {
                return Ok(!pinned.is_terminal() || post.success);
            }
        }
        let Some(intent) = self.world.intent(ctx.subplan.text(), &ctx.pre_obs().page) else {
            return Ok(false);
        };
        Ok(match &intent.target {
            IntentTarget::Page(p) => &post.page == p,
            IntentTarget::PageThenAnswer(_) | IntentTarget::Answer => {
                seg.answer().is_some() && post.success
            }
            IntentTarget::Click(id) => seg.actions.iter().any(|a| a.target() == Some(*id)),
        })
    }
}

/// Macro judge scoring the fraction of the oracle route already covered.
pub struct GroundTruthMacroJudge {
    world: Arc<World>,
    n_samples: usize,
    start_distance: OnceLock<Option<usize>>,
}

impl GroundTruthMacroJudge {
    fn start_distance(&self) -> Option<usize> {
        *self.start_distance.get_or_init(|| {
            self.world
                .distance(&WorldState::initial(self.world.graph.start()))
        })
    }
}

impl MacroJudge for GroundTruthMacroJudge {
    fn assess(
        &self,
        ctx: &EvaluationContext<'_>,
        sample: usize,
        _attempt: usize,
    ) -> Result<MacroStatus, PolicyError> {
        let post = need_state(ctx.post_state, Role::MacroJudge)?;
        if post.terminated && post.success {
            return Ok(MacroStatus::new(MacroCode::A));
        }
        let progress = match (self.start_distance(), self.world.distance(post)) {
            (Some(d0), Some(d)) if d0 > 0 => (d0 as f64 - d as f64) / d0 as f64,
            _ => 0.0,
        }
        .clamp(0.0, 1.0);
        // Dithered rounding onto the five-point grid: the mean over the
        // samples tracks the exact progress value.
        let n = self.n_samples.max(1);
        let offset = ((sample % n) as f64 + 0.5) / n as f64;
        let level = ((progress * 4.0 + offset).floor() as usize).min(4);
        let code = [MacroCode::E, MacroCode::D, MacroCode::C, MacroCode::B, MacroCode::A][level];
        Ok(MacroStatus {
            code,
            notes: Some(format!("progress {progress:.3}")),
        })
    }
}

/// Builds ground-truth scripted bundles.
#[derive(Debug, Clone, Default)]
pub struct ScriptedFactory {
    pub epsilon: f64,
    pub n_samples: usize,
    tables: BTreeMap<String, Arc<PolicyTable>>,
}

impl ScriptedFactory {
    pub fn new(epsilon: f64, n_samples: usize) -> Self {
        ScriptedFactory {
            epsilon,
            n_samples,
            tables: BTreeMap::new(),
        }
    }

    /// Use `table` for environments named `env`.
    pub fn with_table(mut self, env: impl Into<String>, table: PolicyTable) -> Self {
        self.tables.insert(env.into(), Arc::new(table));
        self
    }

    fn world(&self, graph: &Arc<PageGraph>, task: &TaskSpec) -> Arc<World> {
        Arc::new(World {
            graph: graph.clone(),
            task: task.clone(),
            table: self.tables.get(graph.name()).cloned(),
        })
    }
}

impl PolicyFactory for ScriptedFactory {
    fn bundle(&self, graph: &Arc<PageGraph>, task: &TaskSpec, seed: u64) -> PolicyBundle {
        let world = self.world(graph, task);
        PolicyBundle {
            planner: Arc::new(ScriptedPlanner {
                world: world.clone(),
            }),
            operator: Arc::new(ScriptedOperator {
                world: world.clone(),
                seed,
                epsilon: self.epsilon,
            }),
            micro_judge: Arc::new(GroundTruthMicroJudge {
                world: world.clone(),
            }),
            macro_judge: Arc::new(GroundTruthMacroJudge {
                world: world.clone(),
                n_samples: self.n_samples.max(1),
                start_distance: OnceLock::new(),
            }),
            reflector: Arc::new(ScriptedReflector { world }),
            usage: None,
            transcript: None,
        }
    }
}
