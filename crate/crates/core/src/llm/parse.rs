//! Structured-output extraction from free-form model text.
//!
//! Every function here is total: it returns a value or a typed failure for
//! any input string.

use serde_json::Value;

use crate::gate::{MacroCode, MacroStatus};
use crate::policy::{OperatorDecision, PolicyError, ReasonType, ReflectorVerdict, Role};
use crate::tree::Subplan;
use crate::world::AtomicAction;

/// Bodies of all fenced code blocks, in order.
fn fenced_blocks(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = raw;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map_or(after.len(), |n| n + 1);
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                out.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => break,
        }
    }
    out
}

/// Candidate top-level `{...}` spans, honouring JSON string escapes.
fn balanced_objects(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    while let Some(off) = text[start..].find('{') {
        let open = start + off;
        let mut depth = 0usize;
        let mut in_str = false;
        let mut esc = false;
        let mut end = None;
        for (i, &b) in bytes.iter().enumerate().skip(open) {
            if in_str {
                match b {
                    _ if esc => esc = false,
                    b'\\' => esc = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(e) => {
                out.push(&text[open..=e]);
                start = e + 1;
            }
            None => start = open + 1,
        }
    }
    out
}

/// First JSON object found in `raw`: fenced blocks first, then the first
/// balanced object in the surrounding text.
pub fn extract_json(raw: &str) -> Option<Value> {
    for block in fenced_blocks(raw) {
        if let Ok(v @ Value::Object(_)) = serde_json::from_str::<Value>(block.trim()) {
            return Some(v);
        }
        for span in balanced_objects(block) {
            if let Ok(v @ Value::Object(_)) = serde_json::from_str::<Value>(span) {
                return Some(v);
            }
        }
    }
    balanced_objects(raw)
        .into_iter()
        .find_map(|span| match serde_json::from_str::<Value>(span) {
            Ok(v @ Value::Object(_)) => Some(v),
            _ => None,
        })
}

pub fn parse_planner(raw: &str, k: usize) -> Result<Vec<Subplan>, PolicyError> {
    let fail = |d: &str| PolicyError::parse(Role::Planner, d);
    let value = extract_json(raw).ok_or_else(|| fail("no JSON object found"))?;
    let items = value
        .get("subplans")
        .and_then(Value::as_array)
        .ok_or_else(|| fail("JSON object has no `subplans` array"))?;
    let mut out = Vec::new();
    for item in items {
        let (text, thought) = match item {
            Value::String(s) => (s.as_str(), None),
            Value::Object(o) => (
                o.get("subplan")
                    .or_else(|| o.get("plan"))
                    .and_then(Value::as_str)
                    .unwrap_or(""),
                o.get("thought").and_then(Value::as_str),
            ),
            _ => ("", None),
        };
        if let Ok(mut s) = Subplan::new(text.trim()) {
            if let Some(t) = thought {
                s = s.with_thought(t);
            }
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(fail("`subplans` contains no usable entry"));
    }
    out.truncate(k.max(1));
    Ok(out)
}

/// Body of the `### Name ###` section, up to the next `###` header.
fn section<'a>(raw: &'a str, name: &str) -> Option<&'a str> {
    let lower = raw.to_ascii_lowercase();
    let needle = format!("### {} ###", name.to_ascii_lowercase());
    let start = lower.rfind(&needle)? + needle.len();
    let body = &raw[start..];
    let end = body
        .match_indices("###")
        .map(|(i, _)| i)
        .find(|&i| body[..i].ends_with('\n') || i == 0)
        .unwrap_or(body.len());
    Some(&body[..end])
}

pub fn parse_operator(raw: &str) -> Result<OperatorDecision, PolicyError> {
    let fail = |d: String| PolicyError::parse(Role::Operator, d);
    let body = section(raw, "Action").ok_or_else(|| fail("no `### Action ###` section".into()))?;
    let lines: Vec<&str> = body
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("```"))
        .collect();
    let line = match lines.as_slice() {
        [one] => *one,
        [] => return Err(fail("the Action section is empty".into())),
        many => return Err(fail(format!("expected one action, found {}", many.len()))),
    };
    let action: AtomicAction = line
        .parse()
        .map_err(|e| fail(format!("`{line}`: {e}")))?;
    let reason = section(raw, "Reason").map(str::trim).unwrap_or("").to_string();
    let subplan_done = action.is_noop() || action.is_terminal();
    Ok(OperatorDecision {
        action,
        reason,
        subplan_done,
    })
}

/// `Completed: yes|no`, last occurrence wins.
pub fn parse_micro(raw: &str) -> Result<bool, PolicyError> {
    for line in raw.lines().rev() {
        let l = line.trim().trim_start_matches(['*', '-', ' ']).to_ascii_lowercase();
        let Some(rest) = l.strip_prefix("completed") else {
            continue;
        };
        let rest = rest.trim_start_matches(['*', ' ']);
        let Some(rest) = rest.strip_prefix(':') else {
            continue;
        };
        let word: String = rest
            .trim_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '*' | '`'))
            .chars()
            .take_while(|c| c.is_ascii_alphabetic())
            .collect();
        match word.as_str() {
            "yes" => return Ok(true),
            "no" => return Ok(false),
            _ => {}
        }
    }
    Err(PolicyError::parse(Role::MicroJudge, "no `Completed: yes|no` line"))
}

pub fn parse_macro(raw: &str) -> Result<MacroStatus, PolicyError> {
    let fail = |d: &str| PolicyError::parse(Role::MacroJudge, d);
    let mut code = None;
    for line in raw.lines() {
        let l = line.trim().trim_start_matches(['*', '-', '#', ' ']);
        let lower = l.to_ascii_lowercase();
        let Some(idx) = lower.find("status code") else {
            continue;
        };
        let rest = l[idx + "status code".len()..].trim_start_matches(['*', ' ']);
        let Some(rest) = rest.strip_prefix(':') else {
            continue;
        };
        let token: String = rest
            .trim_start_matches(|c: char| c.is_whitespace() || c == '*' || c == '"' || c == '`')
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric())
            .collect();
        code = Some(token.parse::<MacroCode>().map_err(|_| fail("status code must be A-E"))?);
        break;
    }
    let code = code.ok_or_else(|| fail("no `STATUS CODE:` line"))?;
    let notes = raw.lines().find_map(|l| {
        let t = l.trim().trim_start_matches(['*', '-', ' ']);
        t.to_ascii_lowercase()
            .starts_with("notes:")
            .then(|| t[6..].trim().to_string())
            .filter(|s| !s.is_empty())
    });
    Ok(MacroStatus { code, notes })
}

pub fn parse_reflector(raw: &str) -> Result<ReflectorVerdict, PolicyError> {
    let fail = |d: &str| PolicyError::parse(Role::Reflector, d);
    let value = extract_json(raw).ok_or_else(|| fail("no JSON object found"))?;
    let revised = value
        .get("revised_plan")
        .or_else(|| value.get("revised plan"))
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| fail("missing or empty `revised_plan`"))?;
    let reason = value
        .get("reason")
        .and_then(Value::as_str)
        .unwrap_or("")
        .trim()
        .to_string();
    let lower = reason.to_ascii_lowercase();
    let reason_type = if lower.contains("type b") || lower.contains("complexity") {
        ReasonType::ComplexityError
    } else {
        ReasonType::FeasibilityError
    };
    Ok(ReflectorVerdict {
        reason_type,
        reason,
        revised_plan: revised.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planner_fenced_and_truncated() {
        let raw = "Sure!\n```json\n{\"subplans\":[{\"thought\":\"t1\",\"subplan\":\"a\"},{\"subplan\":\"b\"},{\"subplan\":\"c\"},{\"subplan\":\"d\"},{\"subplan\":\"e\"}]}\n```\nDone.";
        let s = parse_planner(raw, 3).unwrap();
        let texts: Vec<_> = s.iter().map(|s| s.text()).collect();
        assert_eq!(texts, ["a", "b", "c"]);
        assert_eq!(s[0].thought.as_deref(), Some("t1"));
        assert!(parse_planner("no json here", 3).is_err());
    }

    #[test]
    fn json_in_prose_with_braces_in_strings() {
        let raw = r#"Here you go: {"reason": "a {weird} one", "revised_plan": "Open 'Cart'"} thanks"#;
        let v = extract_json(raw).unwrap();
        assert_eq!(v["revised_plan"], "Open 'Cart'");
    }

    #[test]
    fn operator_single_action() {
        let raw = "### Reason ###\nthe link is visible\n\n### Action ###\nclick(42)\n";
        let d = parse_operator(raw).unwrap();
        assert_eq!(d.action, AtomicAction::click(42));
        assert_eq!(d.reason, "the link is visible");
        assert!(!d.subplan_done);
        let two = "### Action ###\nclick(1)\nclick(2)\n";
        assert!(parse_operator(two).is_err());
        let send = "### Action ###\n```\nsend_msg_to_user(\"$19.99\")\n```";
        let d = parse_operator(send).unwrap();
        assert_eq!(d.action, AtomicAction::send("$19.99"));
        assert!(d.subplan_done);
    }

    #[test]
    fn micro_and_macro_lines() {
        assert_eq!(parse_micro("Thoughts: fine\nCompleted: \"yes\""), Ok(true));
        assert_eq!(parse_micro("**Completed:** no"), Ok(false));
        assert!(parse_micro("maybe").is_err());
        assert_eq!(parse_macro("STATUS CODE: B").unwrap().code, MacroCode::B);
        assert_eq!(parse_macro("status code: a").unwrap().code, MacroCode::A);
        assert!(parse_macro("STATUS CODE: F").is_err());
        let m = parse_macro("Thoughts: x\nSTATUS CODE: C\nNotes: keep going").unwrap();
        assert_eq!(m.notes.as_deref(), Some("keep going"));
    }

    #[test]
    fn reflector_reason_type() {
        let v = parse_reflector(r#"{"reason":"Type B: too many steps","revised_plan":"Open 'Deals'"}"#).unwrap();
        assert_eq!(v.reason_type, ReasonType::ComplexityError);
        let v = parse_reflector(r#"{"reason":"Type A","revised_plan":"use search"}"#).unwrap();
        assert_eq!(v.reason_type, ReasonType::FeasibilityError);
        assert!(parse_reflector(r#"{"reason":"x","revised_plan":"  "}"#).is_err());
    }
}
