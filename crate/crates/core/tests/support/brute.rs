//! Breadth-first enumeration over the public environment interface.
//!
//! Deliberately shares no code with the crate's own oracle: it only uses
//! `reset`, `step`, `snapshot` and `restore_state`, tries every element on
//! every page, and may answer with any visible label or any word of one.

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

use planmcts::world::{AtomicAction, ElementRole, Environment, PageGraph, WebWorld};

fn candidates(env: &WebWorld) -> Vec<AtomicAction> {
    let obs = env.observe();
    let inputs = env.task().inputs.clone();
    let mut out = Vec::new();
    for e in &obs.elements {
        out.push(AtomicAction::Click { target: e.id });
        if e.role == ElementRole::Textbox {
            for t in &inputs {
                out.push(AtomicAction::Type {
                    target: e.id,
                    text: t.clone(),
                });
            }
        }
    }
    let mut answers: Vec<String> = Vec::new();
    for e in &obs.elements {
        let texts = std::iter::once(e.label.as_str()).chain(e.value.as_deref());
        for text in texts {
            answers.push(text.to_string());
            for word in text.split_whitespace() {
                answers.push(word.trim_matches(|c: char| ",:;()'\"".contains(c)).to_string());
            }
        }
    }
    answers.retain(|a| !a.is_empty());
    answers.dedup();
    out.extend(answers.into_iter().map(AtomicAction::send));
    out
}

/// Length-minimal successful trajectory of at most `max_len` actions.
pub fn brute_shortest(graph: Arc<PageGraph>, task: &str, max_len: usize) -> Option<Vec<AtomicAction>> {
    let mut env = WebWorld::new(graph, task, 0).ok()?;
    let (_, root) = env.reset().ok()?;
    let mut seen = HashSet::new();
    seen.insert(env.ground_truth()?.without_clock());
    let mut queue = VecDeque::from([(root, Vec::new())]);
    while let Some((handle, path)) = queue.pop_front() {
        if path.len() >= max_len {
            continue;
        }
        env.restore_state(&handle).ok()?;
        for a in candidates(&env) {
            env.restore_state(&handle).ok()?;
            let out = env.step(&a);
            let mut next = path.clone();
            next.push(a);
            if out.terminated {
                if out.success {
                    return Some(next);
                }
                continue;
            }
            if seen.insert(env.ground_truth()?.without_clock()) {
                queue.push_back((env.snapshot(), next));
            }
        }
    }
    None
}
