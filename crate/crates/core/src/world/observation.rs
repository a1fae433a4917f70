use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ElementId, ElementRole, PageId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementView {
    pub id: ElementId,
    pub role: ElementRole,
    pub label: String,
    /// Current content of a textbox.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopupView {
    pub message: String,
    pub close: ElementId,
}

/// What a policy perceives: the current page only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub page: PageId,
    pub title: String,
    pub elements: Vec<ElementView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub popup: Option<PopupView>,
    /// Set when the action that produced this observation was rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub step: u32,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub terminated: bool,
}

impl Observation {
    pub fn element(&self, id: ElementId) -> Option<&ElementView> {
        self.elements.iter().find(|e| e.id == id)
    }

    /// True when `needle` occurs in any visible label or textbox value.
    pub fn shows(&self, needle: &str) -> bool {
        let needle = needle.trim().to_lowercase();
        if needle.is_empty() {
            return false;
        }
        self.elements.iter().any(|e| {
            e.label.to_lowercase().contains(&needle)
                || e.value
                    .as_ref()
                    .is_some_and(|v| v.to_lowercase().contains(&needle))
        })
    }

    /// Textual element listing in the style of a pruned accessibility tree.
    pub fn render_axtree(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "RootWebArea '{}' (page: {})", self.title, self.page);
        if let Some(p) = &self.popup {
            let _ = writeln!(
                out,
                "  dialog '{}' (modal; close with [{}])",
                p.message, p.close
            );
        }
        for e in &self.elements {
            match &e.value {
                Some(v) => {
                    let _ = writeln!(out, "  [{}] {} '{}' value='{}'", e.id, e.role.as_str(), e.label, v);
                }
                None => {
                    let _ = writeln!(out, "  [{}] {} '{}'", e.id, e.role.as_str(), e.label);
                }
            }
        }
        if let Some(err) = &self.error {
            let _ = writeln!(out, "  (last action failed: {err})");
        }
        out
    }
}
