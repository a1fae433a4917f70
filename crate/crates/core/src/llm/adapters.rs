//! Policy roles backed by a chat-completion endpoint.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::gate::{EvaluationContext, MacroStatus};
use crate::policy::{
    MacroJudge, MicroJudge, Operator, OperatorDecision, OperatorInput, Planner, PlannerInput,
    PolicyBundle, PolicyError, PolicyFactory, ProposalInput, Reflector, ReflectorInput,
    ReflectorVerdict, Role,
};
use crate::tree::Subplan;
use crate::world::{AtomicAction, PageGraph, TaskSpec};

use super::client::{ChatClient, ChatMessage, ClientError, UsageMeter};
use super::parse::{parse_macro, parse_micro, parse_operator, parse_planner, parse_reflector};
use super::render::{
    render_macro, render_micro, render_operator, render_planner, render_reflector, RenderError,
    RenderedPrompt,
};

/// One request/response pair, kept for verbose traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub role: Role,
    pub system: String,
    pub user: String,
    pub response: Option<String>,
}

#[derive(Debug, Default)]
pub struct Transcript {
    entries: Mutex<Vec<Exchange>>,
}

impl Transcript {
    pub fn push(&self, e: Exchange) {
        self.entries.lock().expect("transcript poisoned").push(e);
    }

    /// Remove and return everything recorded so far.
    pub fn drain(&self) -> Vec<Exchange> {
        std::mem::take(&mut *self.entries.lock().expect("transcript poisoned"))
    }
}

pub struct LlmPolicies {
    client: Arc<ChatClient>,
    usage: Arc<UsageMeter>,
    transcript: Option<Arc<Transcript>>,
}

impl LlmPolicies {
    pub fn new(client: Arc<ChatClient>) -> Self {
        LlmPolicies {
            client,
            usage: Arc::new(UsageMeter::default()),
            transcript: None,
        }
    }

    /// Tokens spent by this set of policies only.
    pub fn usage(&self) -> &Arc<UsageMeter> {
        &self.usage
    }

    pub fn with_transcript(mut self, t: Arc<Transcript>) -> Self {
        self.transcript = Some(t);
        self
    }

    fn ask(&self, role: Role, prompt: &RenderedPrompt) -> Result<String, PolicyError> {
        let messages = [
            ChatMessage::system(prompt.system.clone()),
            ChatMessage::user(prompt.user.clone()),
        ];
        let result = self.client.complete(role, &messages);
        if let Ok(c) = &result {
            self.usage.record(role, c.prompt_tokens, c.completion_tokens);
        }
        if let Some(t) = &self.transcript {
            t.push(Exchange {
                role,
                system: prompt.system.clone(),
                user: prompt.user.clone(),
                response: result.as_ref().ok().map(|c| c.text.clone()),
            });
        }
        result.map(|c| c.text).map_err(|e| endpoint(role, e))
    }

    /// Query and parse, re-asking up to the configured parse retries.
    fn ask_parsed<T>(
        &self,
        role: Role,
        prompt: &RenderedPrompt,
        parse: impl Fn(&str) -> Result<T, PolicyError>,
    ) -> Result<T, PolicyError> {
        let mut last = None;
        for _ in 0..=self.client.config().parse_retries {
            let raw = self.ask(role, prompt)?;
            match parse(&raw) {
                Ok(v) => return Ok(v),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| PolicyError::parse(role, "no attempts made")))
    }
}

fn endpoint(role: Role, e: ClientError) -> PolicyError {
    PolicyError::Endpoint {
        role,
        detail: e.to_string(),
    }
}

fn rendered(role: Role, r: Result<RenderedPrompt, RenderError>) -> Result<RenderedPrompt, PolicyError> {
    r.map_err(|e| PolicyError::Render {
        role,
        detail: e.to_string(),
    })
}

impl Planner for LlmPolicies {
    fn propose(&self, input: &PlannerInput<'_>) -> Result<Vec<Subplan>, PolicyError> {
        let prompt = rendered(Role::Planner, render_planner(input))?;
        let k = input.k;
        self.ask_parsed(Role::Planner, &prompt, |raw| parse_planner(raw, k))
    }
}

impl Operator for LlmPolicies {
    fn decide(&self, input: &OperatorInput<'_>) -> Result<OperatorDecision, PolicyError> {
        let prompt = rendered(Role::Operator, render_operator(input))?;
        self.ask_parsed(Role::Operator, &prompt, parse_operator)
    }

    fn propose_actions(&self, input: &ProposalInput<'_>) -> Result<Vec<AtomicAction>, PolicyError> {
        let mut out: Vec<AtomicAction> = Vec::new();
        for _ in 0..input.k.max(1) {
            let mut text = "Choose the single next action that makes progress on the user instruction.".to_string();
            if !out.is_empty() {
                let taken: Vec<String> = out.iter().map(|a| a.to_string()).collect();
                text.push_str(&format!(" Propose an action different from: {}.", taken.join(", ")));
            }
            let subplan = Subplan::new(text).expect("non-empty");
            let op = OperatorInput {
                goal: input.goal,
                observation: input.observation,
                history: &[],
                local: input.local,
                subplan: &subplan,
                state: None,
            };
            match self.decide(&op) {
                Ok(d) if !d.action.is_noop() && !out.contains(&d.action) => out.push(d.action),
                Ok(_) => break,
                Err(e) if out.is_empty() => return Err(e),
                Err(_) => break,
            }
        }
        Ok(out)
    }
}

impl MicroJudge for LlmPolicies {
    fn verify(&self, ctx: &EvaluationContext<'_>) -> Result<bool, PolicyError> {
        let prompt = rendered(Role::MicroJudge, render_micro(ctx))?;
        let raw = self.ask(Role::MicroJudge, &prompt)?;
        parse_micro(&raw)
    }
}

impl MacroJudge for LlmPolicies {
    fn assess(
        &self,
        ctx: &EvaluationContext<'_>,
        _sample: usize,
        _attempt: usize,
    ) -> Result<MacroStatus, PolicyError> {
        let prompt = rendered(Role::MacroJudge, render_macro(ctx))?;
        let raw = self.ask(Role::MacroJudge, &prompt)?;
        parse_macro(&raw)
    }
}

impl Reflector for LlmPolicies {
    fn revise(&self, input: &ReflectorInput<'_>) -> Result<ReflectorVerdict, PolicyError> {
        let prompt = rendered(Role::Reflector, render_reflector(input))?;
        self.ask_parsed(Role::Reflector, &prompt, parse_reflector)
    }
}

/// Shares one client across all episodes.
pub struct LlmFactory {
    client: Arc<ChatClient>,
    record_exchanges: bool,
}

impl LlmFactory {
    pub fn new(client: Arc<ChatClient>) -> Self {
        LlmFactory {
            client,
            record_exchanges: false,
        }
    }

    /// Keep every request/response pair for verbose traces.
    pub fn recording(mut self, on: bool) -> Self {
        self.record_exchanges = on;
        self
    }

    pub fn client(&self) -> &Arc<ChatClient> {
        &self.client
    }
}

impl PolicyFactory for LlmFactory {
    fn bundle(&self, _graph: &Arc<PageGraph>, _task: &TaskSpec, _seed: u64) -> PolicyBundle {
        let transcript = self.record_exchanges.then(|| Arc::new(Transcript::default()));
        let mut p = LlmPolicies::new(self.client.clone());
        if let Some(t) = &transcript {
            p = p.with_transcript(t.clone());
        }
        let usage = p.usage().clone();
        let p = Arc::new(p);
        PolicyBundle {
            planner: p.clone(),
            operator: p.clone(),
            micro_judge: p.clone(),
            macro_judge: p.clone(),
            reflector: p,
            usage: Some(usage),
            transcript,
        }
    }
}
