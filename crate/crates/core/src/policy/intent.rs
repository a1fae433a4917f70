//! Mapping free-text subplans onto simulator targets for scripted adapters.

use crate::world::{Capabilities, ElementId, ElementRole, PageGraph, PageId};

use super::PolicyTable;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntentTarget {
    Page(PageId),
    /// Reach the page, then send the task answer.
    PageThenAnswer(PageId),
    /// Send the task answer from wherever the agent stands.
    Answer,
    Click(ElementId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intent {
    pub target: IntentTarget,
    pub dismiss_popups: bool,
    pub inputs: Vec<String>,
}

impl Intent {
    /// Capabilities used when executing the intent. Without dismissal the
    /// executor plans as if dialogs were absent and runs into them.
    pub fn execution_caps(&self) -> Capabilities {
        Capabilities {
            dismiss_popups: self.dismiss_popups,
            inputs: self.inputs.clone(),
            ignore_popups: !self.dismiss_popups,
        }
    }

    /// Capabilities the intent genuinely grants.
    pub fn strict_caps(&self) -> Capabilities {
        Capabilities {
            dismiss_popups: self.dismiss_popups,
            inputs: self.inputs.clone(),
            ignore_popups: false,
        }
    }

    pub fn wants_answer(&self) -> bool {
        matches!(
            self.target,
            IntentTarget::Answer | IntentTarget::PageThenAnswer(_)
        )
    }

    pub fn page(&self) -> Option<&PageId> {
        match &self.target {
            IntentTarget::Page(p) | IntentTarget::PageThenAnswer(p) => Some(p),
            _ => None,
        }
    }
}

/// Single-quoted spans with the byte offset of their opening quote.
fn quoted(text: &str) -> Vec<(usize, String)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        let opens = c == '\'' && (i == 0 || !chars[i - 1].1.is_alphanumeric());
        if opens {
            let close = (i + 1..chars.len()).find(|&j| {
                chars[j].1 == '\''
                    && chars.get(j + 1).is_none_or(|(_, n)| !n.is_alphanumeric())
            });
            if let Some(j) = close {
                let inner = &text[chars[i].0 + 1..chars[j].0];
                if !inner.trim().is_empty() {
                    out.push((pos, inner.trim().to_string()));
                }
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

fn element_reference(lower: &str) -> Option<u32> {
    if let Some(open) = lower.find('[') {
        let rest = &lower[open + 1..];
        if let Some(close) = rest.find(']') {
            if let Ok(n) = rest[..close].trim().parse() {
                return Some(n);
            }
        }
    }
    let idx = lower.find("element ")?;
    let digits: String = lower[idx + 8..]
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.parse().ok()
}

const REPORT_WORDS: &[&str] = &["report", "answer", "tell the user", "send the"];

/// Interpret `text` against `graph`, with `here` as the current page.
pub fn resolve_intent(
    text: &str,
    graph: &PageGraph,
    here: &PageId,
    table: Option<&PolicyTable>,
) -> Option<Intent> {
    let lower = text.to_lowercase();
    let report = REPORT_WORDS.iter().any(|w| lower.contains(w));
    let dismiss = lower.contains("close the popup")
        || lower.contains("dismiss")
        || lower.contains("close the dialog");

    if let Some(rule) = table.and_then(|t| t.intent_for(text)) {
        let target = match (&rule.page, rule.report) {
            (Some(p), true) => IntentTarget::PageThenAnswer(p.clone()),
            (Some(p), false) => IntentTarget::Page(p.clone()),
            (None, _) => IntentTarget::Answer,
        };
        return Some(Intent {
            target,
            dismiss_popups: rule.dismiss_popups || dismiss,
            inputs: rule.inputs.clone(),
        });
    }

    let spans = quoted(text);
    let mut inputs = Vec::new();
    for (pos, span) in &spans {
        if lower[..*pos].trim_end().ends_with("search for") {
            inputs.push(span.clone());
        }
    }
    let mut pages = spans
        .iter()
        .filter_map(|(_, s)| graph.page_by_title(s))
        .map(|p| p.id.clone());
    let page = if inputs.is_empty() {
        pages.next()
    } else {
        pages.next_back()
    };
    if let Some(p) = page {
        let target = if report {
            IntentTarget::PageThenAnswer(p)
        } else {
            IntentTarget::Page(p)
        };
        return Some(Intent {
            target,
            dismiss_popups: dismiss,
            inputs,
        });
    }
    if report {
        return Some(Intent {
            target: IntentTarget::Answer,
            dismiss_popups: dismiss,
            inputs,
        });
    }
    if let Some(n) = element_reference(&lower) {
        return Some(Intent {
            target: IntentTarget::Click(ElementId(n)),
            dismiss_popups: dismiss,
            inputs,
        });
    }
    let page = graph.page(here)?;
    let el = page
        .elements
        .iter()
        .filter(|e| e.role != ElementRole::Text && !e.label.trim().is_empty())
        .filter(|e| lower.contains(&e.label.to_lowercase()))
        .max_by_key(|e| e.label.len())?;
    let target = match &el.transition {
        Some(to) if to != here => IntentTarget::Page(to.clone()),
        _ => IntentTarget::Click(el.id),
    };
    Some(Intent {
        target,
        dismiss_popups: dismiss,
        inputs,
    })
}
