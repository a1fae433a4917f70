#[path = "support/mock_http.rs"]
mod mock_http;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::Value;

use mock_http::{completion, MockServer};
use planmcts::gate::MacroCode;
use planmcts::llm::parse::{extract_json, parse_macro, parse_micro, parse_operator, parse_planner, parse_reflector};
use planmcts::llm::prompts::{self, keys, placeholders};
use planmcts::llm::render::{render_history, render_planner};
use planmcts::llm::{render, AdapterConfig, Bindings, ChatClient, ChatMessage, ClientError, LlmFactory, RenderError, UsageMeter};
use planmcts::policy::{PlannerInput, PolicyFactory, ReasonType, Role};
use planmcts::search::{run_episode, Phase, SearchConfig};
use planmcts::tree::{HistoryEntry, SubplanStatus};
use planmcts::world::{fixtures, AtomicAction, ElementId, Environment, WebWorld};

fn client(url: &str, retries: u32) -> ChatClient {
    let cfg = AdapterConfig {
        endpoint: url.to_string(),
        max_retries: retries,
        backoff_base_ms: 5,
        timeout_ms: 5_000,
        api_key_env: None,
        ..AdapterConfig::default()
    };
    ChatClient::new(cfg, Arc::new(UsageMeter::default())).unwrap()
}

fn ask(c: &ChatClient) -> Result<planmcts::llm::Completion, ClientError> {
    c.complete(Role::Operator, &[ChatMessage::system("s"), ChatMessage::user("u")])
}

#[test]
fn ok_response_returned() {
    let server = MockServer::schedule(vec![200], "hello");
    let c = client(&server.url, 3);
    let out = ask(&c).unwrap();
    assert_eq!(out.text, "hello");
    assert_eq!(out.attempts, 1);
    assert_eq!((out.prompt_tokens, out.completion_tokens), (11, 5));
    let body: Value = serde_json::from_str(&server.requests()[0]).unwrap();
    assert_eq!(body["messages"][1]["content"], "u");
    assert_eq!(body["temperature"], 0.0);
}

#[test]
fn rate_limit_then_success_backs_off_twice() {
    let server = MockServer::schedule(vec![429, 429, 200], "ok");
    let c = client(&server.url, 3);
    let t = Instant::now();
    let out = ask(&c).unwrap();
    assert_eq!(out.attempts, 3);
    assert_eq!(server.requests().len(), 3);
    // Backoff sleeps of 5 ms and 10 ms.
    assert!(t.elapsed() >= Duration::from_millis(15));
    let u = c.usage().snapshot();
    assert_eq!(u[&Role::Operator].calls, 1);
}

#[test]
fn persistent_server_error_exhausts_retries() {
    let server = MockServer::schedule(vec![500], "");
    let c = client(&server.url, 2);
    match ask(&c) {
        Err(ClientError::EndpointUnavailable { attempts, last }) => {
            assert_eq!(attempts, 3);
            assert!(last.contains("500"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.requests().len(), 3);
    assert!(c.usage().snapshot().is_empty());
}

#[test]
fn client_error_not_retried() {
    let server = MockServer::schedule(vec![400], "");
    let c = client(&server.url, 3);
    assert!(matches!(ask(&c), Err(ClientError::Rejected { status: 400, .. })));
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn malformed_body_reported() {
    let server = MockServer::start(Box::new(|_, _| (200, "{\"choices\": []}".to_string())));
    let c = client(&server.url, 0);
    assert!(matches!(ask(&c), Err(ClientError::BadResponse(_))));
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    drop(listener);
    let c = client(&url, 1);
    assert!(matches!(ask(&c), Err(ClientError::EndpointUnavailable { attempts: 2, .. })));
}

#[test]
fn config_validation() {
    let bad = AdapterConfig {
        timeout_ms: 0,
        ..AdapterConfig::default()
    };
    assert!(ChatClient::new(bad, Arc::new(UsageMeter::default())).is_err());
}

#[test]
fn planner_fenced_json_in_order() {
    let raw = "Here you go:\n```json\n{\"subplans\": [\n {\"thought\": \"a\", \"subplan\": \"one\"},\n {\"thought\": \"b\", \"subplan\": \"two\"},\n {\"thought\": \"c\", \"subplan\": \"three\"}\n]}\n```";
    let s = parse_planner(raw, 3).unwrap();
    let texts: Vec<&str> = s.iter().map(|p| p.text()).collect();
    assert_eq!(texts, ["one", "two", "three"]);
    assert_eq!(s[1].thought.as_deref(), Some("b"));
}

#[test]
fn planner_truncates_to_k() {
    let items: Vec<String> = (0..5).map(|i| format!("{{\"subplan\": \"p{i}\"}}")).collect();
    let raw = format!("{{\"subplans\": [{}]}}", items.join(","));
    assert_eq!(parse_planner(&raw, 3).unwrap().len(), 3);
}

#[test]
fn planner_prose_is_failure() {
    assert!(parse_planner("I would click the first link.", 3).is_err());
}

#[test]
fn operator_single_click() {
    let raw = "### Reason ###\nthe link leads to products\n\n### Action ###\nclick(42)\n";
    let d = parse_operator(raw).unwrap();
    assert_eq!(d.action, AtomicAction::Click { target: ElementId(42) });
    assert!(!d.subplan_done);
    assert_eq!(d.reason, "the link leads to products");
}

#[test]
fn operator_two_actions_rejected() {
    assert!(parse_operator("### Action ###\nclick(1)\nclick(2)\n").is_err());
}

#[test]
fn operator_message_is_terminal() {
    let d = parse_operator("### Action ###\nsend_msg_to_user(\"$19.99\")").unwrap();
    assert_eq!(d.action, AtomicAction::send("$19.99"));
    assert!(d.subplan_done);
}

#[test]
fn operator_action_round_trips_display() {
    for a in [
        AtomicAction::Click { target: ElementId(7) },
        AtomicAction::send("Welcome \"home\""),
        AtomicAction::Noop,
    ] {
        let d = parse_operator(&format!("### Action ###\n{a}")).unwrap();
        assert_eq!(d.action, a);
    }
}

#[test]
fn macro_codes() {
    assert_eq!(parse_macro("STATUS CODE: B").unwrap().code, MacroCode::B);
    assert_eq!(parse_macro("status code: a").unwrap().code, MacroCode::A);
    assert!(parse_macro("STATUS CODE: F").is_err());
    assert!(parse_macro("no code here").is_err());
    let s = parse_macro("**STATUS CODE:** C\nNOTES: halfway there").unwrap();
    assert_eq!(s.code, MacroCode::C);
    assert_eq!(s.notes.as_deref(), Some("halfway there"));
}

#[test]
fn micro_verdicts() {
    assert!(parse_micro("Reasoning...\nCompleted: yes").unwrap());
    assert!(!parse_micro("**Completed:** no").unwrap());
    assert!(parse_micro("Completed: maybe").is_err());
}

#[test]
fn reflector_types() {
    let v = parse_reflector("```json\n{\"reason\": \"Type B: too many steps\", \"revised_plan\": \"Open the menu\"}\n```").unwrap();
    assert_eq!(v.reason_type, ReasonType::ComplexityError);
    assert_eq!(v.revised_plan, "Open the menu");
    let v = parse_reflector("{\"reason\": \"Type A: element missing\", \"revised plan\": \"Use search\"}").unwrap();
    assert_eq!(v.reason_type, ReasonType::FeasibilityError);
    assert!(parse_reflector("{\"reason\": \"x\", \"revised_plan\": \"  \"}").is_err());
}

#[test]
fn extract_json_handles_fences_and_braces_in_strings() {
    assert_eq!(extract_json("```\n{\"a\": 1}\n```").unwrap()["a"], 1);
    assert_eq!(extract_json("pre {\"a\": \"}{\"} post").unwrap()["a"], "}{");
    assert_eq!(extract_json("{bad} then {\"b\": 2}").unwrap()["b"], 2);
    assert!(extract_json("nothing").is_none());
}

fn planner_prompt(history: &[HistoryEntry], k: usize) -> String {
    let g = Arc::new(fixtures::chain());
    let env = WebWorld::new(g, "widget-price", 0).unwrap();
    let obs = env.observe();
    let p = render_planner(&PlannerInput {
        goal: env.instruction(),
        observation: &obs,
        history,
        k,
        state: None,
    })
    .unwrap();
    format!("{}\n{}", p.system, p.user)
}

#[test]
fn planner_prompt_asks_for_k_diverse_candidates() {
    assert!(planner_prompt(&[], 3).contains("provide 3 DIVERSE subplan candidates"));
    assert!(planner_prompt(&[], 2).contains("provide 2 DIVERSE subplan candidates"));
}

#[test]
fn empty_history_renders_none() {
    assert_eq!(render_history(&[]), "(none)");
    assert!(planner_prompt(&[], 3).contains("(none)"));
}

#[test]
fn failed_history_entry_visible_to_planner() {
    let h = [HistoryEntry {
        text: "Click the 'Deals' link".into(),
        status: SubplanStatus::NotCompleted,
        note: Some("a popup blocked the page".into()),
    }];
    let text = planner_prompt(&h, 3);
    assert!(text.contains("Click the 'Deals' link [Not Completed]"));
    assert!(text.contains("a popup blocked the page"));
}

#[test]
fn anchored_template_strings() {
    assert!(prompts::MICRO_JUDGE.system_text.contains("Check Terminal Actions"));
    assert!(prompts::MACRO_JUDGE.system_text.contains("STATUS CODE"));
    assert!(prompts::REFLECTOR.system_text.contains("Output Format (JSON ONLY)"));
    assert!(prompts::PLANNER.user_text.contains("DIVERSE subplan candidates"));
}

#[test]
fn every_placeholder_is_a_known_key() {
    let known = [
        keys::BRANCHING_FACTOR,
        keys::GOAL,
        keys::SUBPLAN_HISTORY,
        keys::PREVIOUS_PLANS,
        keys::SCREENSHOT,
        keys::AXTREE,
        keys::SUBPLAN,
        keys::INTERACTION_HISTORY,
        keys::ACTION_SPACE,
        keys::PRE_SCREENSHOT,
        keys::PRE_AXTREE,
        keys::POST_SCREENSHOT,
        keys::POST_AXTREE,
        keys::FAILED_SUBPLAN,
        keys::EXECUTION_TRACE,
    ];
    for role in Role::ALL {
        let t = prompts::template(role);
        for p in placeholders(t.system_text).into_iter().chain(placeholders(t.user_text)) {
            assert!(known.contains(&p), "{role}: unknown placeholder {p}");
        }
    }
}

#[test]
fn unbound_placeholder_is_an_error() {
    let err = render(&prompts::PLANNER, &Bindings::new()).unwrap_err();
    assert!(matches!(err, RenderError::UnboundPlaceholder(_)));
}

/// Role-aware mock that walks the chain fixture: p0 -> p1 -> p2, then answers.
fn chain_agent(_: usize, body: &str) -> (u16, String) {
    let req: Value = serde_json::from_str(body).unwrap();
    let system = req["messages"][0]["content"].as_str().unwrap_or("");
    let user = req["messages"][1]["content"].as_str().unwrap_or("");
    let text = if system.contains("expert Planner") {
        "```json\n{\"subplans\": [{\"thought\": \"go\", \"subplan\": \"Open the 'Widget Pro' page and report the price\"}]}\n```".to_string()
    } else if system.contains("UI Assistant") {
        let action = if user.contains("(page: p0)") {
            "click(1)"
        } else if user.contains("(page: p1)") {
            "click(4)"
        } else {
            "send_msg_to_user(\"$19.99\")"
        };
        format!("### Reason ###\nfollow the catalog\n\n### Action ###\n{action}")
    } else if system.contains("precise evaluator") {
        "Completed: yes".to_string()
    } else if system.contains("State Value") {
        "STATUS CODE: A".to_string()
    } else {
        "{\"reason\": \"Type A\", \"revised_plan\": \"retry\"}".to_string()
    };
    (200, completion(&text, 100, 10))
}

#[test]
fn llm_bundle_solves_chain_against_mock() {
    let server = MockServer::start(Box::new(chain_agent));
    let c = Arc::new(client(&server.url, 1));
    let factory = LlmFactory::new(c).recording(true);
    let g = Arc::new(fixtures::chain());
    let task = g.task("widget-price").unwrap().clone();
    let p = factory.bundle(&g, &task, 0);
    let mut env = WebWorld::new(g, "widget-price", 0).unwrap();
    let cfg = SearchConfig {
        verbose: true,
        ..SearchConfig::default()
    };
    let r = run_episode(&mut env, &p, &cfg).unwrap();
    assert!(r.success, "{:?} {:?}", r.stop, r.error);
    assert_eq!(r.path_length(), Some(3));
    assert_eq!(r.tokens[&Role::Operator].calls, 3);
    assert_eq!(r.tokens[&Role::MacroJudge].calls, 3);
    let total_calls: u64 = r.tokens.values().map(|t| t.calls).sum();
    assert_eq!(total_calls as usize, server.requests().len());
    let sim = r.trace.events.iter().find(|e| e.phase == Phase::Simulation).unwrap();
    assert!(sim.tokens.is_some());
    assert_eq!(sim.detail["exchanges"].as_array().unwrap().len(), 3 + 1 + 3);
}

#[test]
fn unparseable_planner_output_is_retried() {
    let server = MockServer::start(Box::new(|i, body| {
        if i == 0 {
            (200, completion("let me think about it", 1, 1))
        } else {
            chain_agent(i, body)
        }
    }));
    let factory = LlmFactory::new(Arc::new(client(&server.url, 0)));
    let g = Arc::new(fixtures::chain());
    let task = g.task("widget-price").unwrap().clone();
    let p = factory.bundle(&g, &task, 0);
    let mut env = WebWorld::new(g, "widget-price", 0).unwrap();
    let r = run_episode(&mut env, &p, &SearchConfig::default()).unwrap();
    assert!(r.success);
    assert_eq!(r.tokens[&Role::Planner].calls, 2);
}
