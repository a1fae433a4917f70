use std::sync::Arc;

use planmcts::gate::{EvaluationContext, MacroCode, MacroStatus, RewardMode};
use planmcts::policy::{
    MacroJudge, MicroJudge, Operator, OperatorDecision, OperatorInput, Planner, PlannerInput, PolicyBundle,
    PolicyError, PolicyFactory, ProposalInput, Role, ScriptedFactory,
};
use planmcts::search::{
    run_episode, EdgeKind, EpisodeResult, EpisodeTrace, Phase, RefinementMode, SearchConfig, SearchStrategy,
    StopReason, TrajectorySegment,
};
use planmcts::tree::{Subplan, SubplanStatus};
use planmcts::world::{fixtures, oracle_solve, AtomicAction, Environment, PageGraph, PageId, WebWorld};

fn bundle(graph: &Arc<PageGraph>, task: &str, seed: u64, epsilon: f64) -> PolicyBundle {
    let t = graph.task(task).unwrap().clone();
    ScriptedFactory::new(epsilon, 3).bundle(graph, &t, seed)
}

fn episode(fixture: &str, task: &str, cfg: &SearchConfig) -> EpisodeResult {
    let g = Arc::new(fixtures::by_name(fixture).unwrap());
    let p = bundle(&g, task, 0, 0.0);
    let mut env = WebWorld::new(g, task, 0).unwrap();
    run_episode(&mut env, &p, cfg).unwrap()
}

fn phases(trace: &EpisodeTrace, phase: Phase) -> usize {
    trace.events.iter().filter(|e| e.phase == phase).count()
}

#[test]
fn chain_matches_oracle_trajectory() {
    let r = episode("chain", "widget-price", &SearchConfig::default());
    let g = fixtures::chain();
    let oracle = oracle_solve(&g, g.task("widget-price").unwrap(), 10).unwrap();
    assert!(r.success);
    assert_eq!(r.stop, StopReason::Answered);
    assert_eq!(r.path_length(), Some(3));
    assert_eq!(r.solution.as_deref(), Some(oracle.as_slice()));
}

#[test]
fn degenerate_task_solved_in_one_iteration() {
    let r = episode("chain", "home-greeting", &SearchConfig::default());
    assert!(r.success);
    assert_eq!(r.iterations_used, 1);
    assert_eq!(r.path_length(), Some(1));
}

#[test]
fn zero_budget_does_nothing() {
    let cfg = SearchConfig {
        budget: 0,
        ..SearchConfig::default()
    };
    let r = episode("chain", "widget-price", &cfg);
    assert!(!r.success);
    assert_eq!(r.iterations_used, 0);
    assert_eq!(r.stop, StopReason::BudgetSpent);
    assert_eq!(phases(&r.trace, Phase::Simulation), 0);
}

#[test]
fn impossible_task_spends_whole_budget() {
    let r = episode("impossible", "order-number", &SearchConfig::default());
    assert!(!r.success);
    assert_eq!(r.iterations_used, r.budget);
    assert!(r.solution.is_none());
}

#[test]
fn every_iteration_has_the_four_phases() {
    let r = episode("popup", "weekly-deal", &SearchConfig::default());
    for it in 1..=r.iterations_used {
        let ph = r.trace.phases(it);
        assert_eq!(ph.first(), Some(&Phase::Selection), "iteration {it}: {ph:?}");
        assert!(ph.contains(&Phase::Simulation));
        assert_eq!(ph.iter().filter(|p| **p == Phase::Backpropagation).count(), 1);
    }
    assert_eq!(r.trace.end().unwrap().phase, Phase::EpisodeEnd);
}

#[test]
fn popup_failure_repaired_by_refinement() {
    let r = episode("popup", "weekly-deal", &SearchConfig::default());
    assert!(r.success);
    let refinement = r.trace.events.iter().find(|e| e.phase == Phase::Refinement).unwrap();
    assert_eq!(refinement.detail["reward"]["r_micro"], 1);
    assert!(r.solution_subplans[0].starts_with("Close the popup"));
    let edge = &r.tree.node(r.tree.root()).unwrap().edges[0];
    assert!(edge.subplan.replaces().is_some());
}

#[test]
fn zero_retries_leaves_failed_edge() {
    let cfg = SearchConfig {
        refine_retries: 0,
        budget: 1,
        ..SearchConfig::default()
    };
    let r = episode("popup", "weekly-deal", &cfg);
    assert!(!r.success);
    assert_eq!(phases(&r.trace, Phase::Refinement), 0);
    let edge = &r.tree.node(r.tree.root()).unwrap().edges[0];
    assert!(edge.failed);
    assert_eq!(edge.q_value, 0.0);
}

#[test]
fn dual_path_pivots_to_search_route() {
    let r = episode("dual_path", "monitor-model", &SearchConfig::default());
    assert!(r.success);
    let refinement = r.trace.events.iter().find(|e| e.phase == Phase::Refinement).unwrap();
    assert_eq!(refinement.detail["reason_type"], "FeasibilityError");
    let g = fixtures::dual_path();
    let oracle = oracle_solve(&g, g.task("monitor-model").unwrap(), 12).unwrap();
    assert!(r.path_length().unwrap() >= oracle.len());
}

#[test]
fn no_refinement_keeps_subplan_and_fails() {
    let cfg = SearchConfig {
        refinement: RefinementMode::Disabled,
        ..SearchConfig::default()
    };
    let r = episode("popup", "weekly-deal", &cfg);
    assert!(!r.success);
    assert_eq!(phases(&r.trace, Phase::Refinement), 0);
}

#[test]
fn reflection_only_leaves_tree_text_unchanged() {
    let base = episode("popup", "weekly-deal", &SearchConfig {
        refinement: RefinementMode::Disabled,
        budget: 1,
        ..SearchConfig::default()
    });
    let r = episode("popup", "weekly-deal", &SearchConfig {
        refinement: RefinementMode::ReflectionOnly,
        budget: 1,
        ..SearchConfig::default()
    });
    let before = &base.tree.node(base.tree.root()).unwrap().edges[0];
    let after = &r.tree.node(r.tree.root()).unwrap().edges[0];
    assert_eq!(before.subplan.text(), after.subplan.text());
    assert!(after.subplan.replaces().is_none());
    assert!(after.feedback.as_deref().unwrap().contains("Suggested revision"));
}

#[test]
fn micro_only_rewards_are_binary() {
    let cfg = SearchConfig {
        reward_mode: RewardMode::MicroOnly,
        ..SearchConfig::default()
    };
    for (f, t) in [("chain", "widget-price"), ("popup", "weekly-deal"), ("impossible", "order-number")] {
        let r = episode(f, t, &cfg);
        for e in r.trace.events.iter().filter(|e| e.phase == Phase::Backpropagation) {
            let v = e.detail["reward"].as_f64().unwrap();
            assert!(v == 0.0 || v == 1.0, "{f}: reward {v}");
        }
    }
}

#[test]
fn macro_only_scores_failed_grounding() {
    let g = Arc::new(fixtures::chain());
    let mut p = bundle(&g, "widget-price", 0, 0.0);
    p.micro_judge = Arc::new(Broken);
    let cfg = SearchConfig {
        reward_mode: RewardMode::MacroOnly,
        refinement: RefinementMode::Disabled,
        budget: 1,
        ..SearchConfig::default()
    };
    let mut env = WebWorld::new(g, "widget-price", 0).unwrap();
    let r = run_episode(&mut env, &p, &cfg).unwrap();
    let sim = r.trace.events.iter().find(|e| e.phase == Phase::Simulation).unwrap();
    assert_eq!(sim.detail["reward"]["r_micro"], 0);
    assert!(sim.detail["reward"]["reward"].as_f64().unwrap() > 0.0);
    assert!(!r.success);
}

#[test]
fn two_click_subplan_earns_partial_progress() {
    let g = Arc::new(fixtures::chain());
    let p = bundle(&g, "widget-price", 0, 0.0);
    let mut env = WebWorld::new(g.clone(), "widget-price", 0).unwrap();
    let (obs, _) = env.reset().unwrap();
    let pre_state = env.ground_truth().unwrap().clone();
    let mut seg = TrajectorySegment::start(obs);
    let oracle = oracle_solve(&g, g.task("widget-price").unwrap(), 10).unwrap();
    for a in &oracle[..2] {
        let out = env.step(a);
        seg.push(a.clone(), out.observation);
    }
    let target = g.page(&seg.post().page).unwrap().title.clone();
    let subplan = Subplan::new(format!("Open '{target}'")).unwrap();
    let ctx = EvaluationContext {
        goal: env.instruction(),
        plan_history: &[],
        subplan: &subplan,
        segment: &seg,
        pre_state: Some(&pre_state),
        post_state: env.ground_truth(),
    };
    let rec = SearchConfig::default()
        .dual_gate()
        .evaluate(&ctx, p.micro_judge.as_ref(), p.macro_judge.as_ref());
    assert_eq!(rec.r_micro, 1);
    assert!((rec.reward - 2.0 / 3.0).abs() < 1e-9, "reward {}", rec.reward);
}

#[test]
fn same_seed_same_trace() {
    let g = Arc::new(fixtures::dual_path());
    let run = || {
        let p = bundle(&g, "monitor-model", 7, 0.3);
        let mut env = WebWorld::new(g.clone(), "monitor-model", 7).unwrap();
        let mut r = run_episode(&mut env, &p, &SearchConfig::default()).unwrap();
        for e in &mut r.trace.events {
            e.elapsed_ms = None;
        }
        r.trace.to_jsonl()
    };
    assert_eq!(run(), run());
}

#[test]
fn trace_round_trips_through_jsonl() {
    let r = episode("popup", "weekly-deal", &SearchConfig::default());
    let text = r.trace.to_jsonl();
    assert_eq!(text.lines().count(), r.trace.events.len());
    assert_eq!(EpisodeTrace::from_jsonl(&text).unwrap(), r.trace);
}

#[test]
fn verbose_traces_keep_prompt_text() {
    let cfg = SearchConfig {
        verbose: true,
        ..SearchConfig::default()
    };
    let r = episode("chain", "widget-price", &cfg);
    let sim = r.trace.events.iter().find(|e| e.phase == Phase::Simulation).unwrap();
    let prompt = &sim.detail["prompts"][0];
    assert_eq!(prompt["role"], "operator");
    assert!(prompt["text"].as_str().unwrap().contains("Current Subplan to Execute"));
    let quiet = episode("chain", "widget-price", &SearchConfig::default());
    let sim = quiet.trace.events.iter().find(|e| e.phase == Phase::Simulation).unwrap();
    assert!(sim.detail["prompts"][0].get("text").is_none());
}

#[test]
fn best_first_and_action_variants_run() {
    for (strategy, kind) in [
        (SearchStrategy::BestFirst, EdgeKind::Subplan),
        (SearchStrategy::Uct, EdgeKind::Action),
        (SearchStrategy::BestFirst, EdgeKind::Action),
    ] {
        let cfg = SearchConfig {
            strategy,
            edge_kind: kind,
            c: if strategy == SearchStrategy::BestFirst { 0.0 } else { 0.5 },
            budget: 20,
            ..SearchConfig::default()
        };
        let r = episode("chain", "widget-price", &cfg);
        assert!(r.success, "{strategy:?}/{kind:?}: {:?}", r.stop);
        assert_eq!(r.path_length(), Some(3));
    }
}

#[test]
fn action_edges_cost_one_step_each() {
    let cfg = SearchConfig {
        edge_kind: EdgeKind::Action,
        ..SearchConfig::default()
    };
    let r = episode("impossible", "order-number", &cfg);
    assert_eq!(r.interactions, r.iterations_used as u64);
}

#[test]
fn invalid_config_rejected() {
    let g = Arc::new(fixtures::chain());
    let p = bundle(&g, "widget-price", 0, 0.0);
    let mut env = WebWorld::new(g, "widget-price", 0).unwrap();
    let cfg = SearchConfig {
        c: f64::NAN,
        ..SearchConfig::default()
    };
    assert!(run_episode(&mut env, &p, &cfg).is_err());
}

struct Broken;

impl Planner for Broken {
    fn propose(&self, _: &PlannerInput<'_>) -> Result<Vec<Subplan>, PolicyError> {
        Err(PolicyError::parse(Role::Planner, "no JSON"))
    }
}

impl Operator for Broken {
    fn decide(&self, _: &OperatorInput<'_>) -> Result<OperatorDecision, PolicyError> {
        Err(PolicyError::Endpoint {
            role: Role::Operator,
            detail: "connection refused".into(),
        })
    }

    fn propose_actions(&self, _: &ProposalInput<'_>) -> Result<Vec<AtomicAction>, PolicyError> {
        Ok(vec![])
    }
}

impl MicroJudge for Broken {
    fn verify(&self, _: &EvaluationContext<'_>) -> Result<bool, PolicyError> {
        Ok(false)
    }
}

impl MacroJudge for Broken {
    fn assess(&self, _: &EvaluationContext<'_>, _: usize, _: usize) -> Result<MacroStatus, PolicyError> {
        Ok(MacroStatus::new(MacroCode::E))
    }
}

#[test]
fn planner_failure_at_root_ends_episode() {
    let g = Arc::new(fixtures::chain());
    let mut p = bundle(&g, "widget-price", 0, 0.0);
    p.planner = Arc::new(Broken);
    let mut env = WebWorld::new(g, "widget-price", 0).unwrap();
    let r = run_episode(&mut env, &p, &SearchConfig::default()).unwrap();
    assert_eq!(r.stop, StopReason::RootExhausted);
    assert!(r.tree.node(r.tree.root()).unwrap().exhausted);
}

#[test]
fn endpoint_failure_is_recorded() {
    let g = Arc::new(fixtures::chain());
    let mut p = bundle(&g, "widget-price", 0, 0.0);
    p.operator = Arc::new(Broken);
    let mut env = WebWorld::new(g, "widget-price", 0).unwrap();
    let r = run_episode(&mut env, &p, &SearchConfig::default()).unwrap();
    assert_eq!(r.stop, StopReason::PolicyFailure);
    assert!(r.error.unwrap().contains("connection refused"));
    assert!(!r.success);
}

#[test]
fn child_history_marks_revised_subplan() {
    let r = episode("popup", "weekly-deal", &SearchConfig::default());
    let child = r.tree.nodes().iter().find(|n| n.depth == 1);
    if let Some(child) = child {
        let statuses: Vec<SubplanStatus> = child.plan_history.iter().map(|h| h.status).collect();
        assert_eq!(statuses, vec![SubplanStatus::NotCompleted, SubplanStatus::Completed]);
    }
    assert_eq!(r.tree.node(r.tree.root()).unwrap().observation.as_ref().unwrap().page, PageId::new("p0"));
}
