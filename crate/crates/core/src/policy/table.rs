//! Hand-authored lookup tables for the scripted planner and intent resolver.
//!
//! ```json
//! {
//!   "format": "planmcts.policy/v1",
//!   "planner": [
//!     { "page": "catalog", "subplans": ["filter results by price", "open the search box"] }
//!   ],
//!   "intents": [
//!     { "match": "filter results by price", "page": "catalog-filtered" }
//!   ]
//! }
//! ```
//!
//! Planner rules are keyed by page id and an optional case-insensitive
//! substring of the instruction. Intent rules map a substring of a subplan
//! to the page it should reach.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::PageId;

pub const POLICY_FORMAT: &str = "planmcts.policy/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerRule {
    pub page: PageId,
    /// Substring the instruction must contain for the rule to apply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    pub subplans: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentRule {
    #[serde(rename = "match")]
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<PageId>,
    /// The subplan ends by reporting the answer.
    #[serde(default)]
    pub report: bool,
    #[serde(default)]
    pub dismiss_popups: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    #[serde(default)]
    pub format: Option<String>,
    #[serde(default)]
    pub planner: Vec<PlannerRule>,
    #[serde(default)]
    pub intents: Vec<IntentRule>,
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("invalid policy table: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported policy table format `{0}`")]
    Format(String),
    #[error("planner rule for page `{0}` lists no subplans")]
    EmptyRule(PageId),
}

impl PolicyTable {
    pub fn from_json(text: &str) -> Result<Self, TableError> {
        let table: PolicyTable = serde_json::from_str(text)?;
        if let Some(f) = &table.format {
            if f != POLICY_FORMAT {
                return Err(TableError::Format(f.clone()));
            }
        }
        for rule in &table.planner {
            if rule.subplans.iter().all(|s| s.trim().is_empty()) {
                return Err(TableError::EmptyRule(rule.page.clone()));
            }
        }
        Ok(table)
    }

    /// Subplans of the first planner rule matching `page` and `goal`.
    pub fn planner_for(&self, page: &PageId, goal: &str) -> Option<&[String]> {
        let goal = goal.to_lowercase();
        self.planner
            .iter()
            .find(|r| {
                &r.page == page
                    && r
                        .when
                        .as_ref()
                        .is_none_or(|w| goal.contains(&w.to_lowercase()))
            })
            .map(|r| r.subplans.as_slice())
    }

    pub fn intent_for(&self, subplan: &str) -> Option<&IntentRule> {
        let text = subplan.to_lowercase();
        self.intents
            .iter()
            .find(|r| text.contains(&r.pattern.to_lowercase()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_by_page_and_goal() {
        let t = PolicyTable::from_json(
            r#"{"planner":[
                {"page":"catalog","when":"cheap","subplans":["a"]},
                {"page":"catalog","subplans":["b","c"]}
            ]}"#,
        )
        .unwrap();
        let p = PageId::new("catalog");
        assert_eq!(t.planner_for(&p, "find something CHEAP"), Some(&["a".to_string()][..]));
        assert_eq!(t.planner_for(&p, "anything").unwrap().len(), 2);
        assert!(t.planner_for(&PageId::new("x"), "cheap").is_none());
    }

    #[test]
    fn rejects_empty_rule_and_foreign_format() {
        assert!(matches!(
            PolicyTable::from_json(r#"{"planner":[{"page":"a","subplans":[]}]}"#),
            Err(TableError::EmptyRule(_))
        ));
        assert!(matches!(
            PolicyTable::from_json(r#"{"format":"x/v2"}"#),
            Err(TableError::Format(_))
        ));
    }
}
