//! Atomic action vocabulary and its textual grammar.
//!
//! The grammar is the one the operator prompt advertises:
//!
//! ```text
//! click(42)
//! type(17, "wireless headphones")
//! scroll(down)
//! goto("p3")
//! send_msg_to_user("$19.99")
//! noop()
//! ```
//!
//! String arguments use JSON escaping, so `Display` followed by `FromStr`
//! round-trips every action.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ElementId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrollDirection {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AtomicAction {
    Click { target: ElementId },
    Type { target: ElementId, text: String },
    Scroll { direction: ScrollDirection },
    Goto { page: String },
    SendMessage { text: String },
    /// Marker used by the operator to signal that the subplan is already done.
    Noop,
}

impl AtomicAction {
    pub fn click(id: u32) -> Self {
        AtomicAction::Click {
            target: ElementId(id),
        }
    }

    pub fn send(text: impl Into<String>) -> Self {
        AtomicAction::SendMessage { text: text.into() }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, AtomicAction::SendMessage { .. })
    }

    pub fn is_noop(&self) -> bool {
        matches!(self, AtomicAction::Noop)
    }

    /// Element the action addresses, if any.
    pub fn target(&self) -> Option<ElementId> {
        match self {
            AtomicAction::Click { target } | AtomicAction::Type { target, .. } => Some(*target),
            _ => None,
        }
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).unwrap_or_else(|_| format!("\"{s}\""))
}

impl fmt::Display for AtomicAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomicAction::Click { target } => write!(f, "click({})", target.0),
            AtomicAction::Type { target, text } => write!(f, "type({}, {})", target.0, quote(text)),
            AtomicAction::Scroll { direction } => match direction {
                ScrollDirection::Up => f.write_str("scroll(up)"),
                ScrollDirection::Down => f.write_str("scroll(down)"),
            },
            AtomicAction::Goto { page } => write!(f, "goto({})", quote(page)),
            AtomicAction::SendMessage { text } => write!(f, "send_msg_to_user({})", quote(text)),
            AtomicAction::Noop => f.write_str("noop()"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionParseError {
    #[error("empty action")]
    Empty,
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("malformed arguments for `{name}`: {detail}")]
    BadArguments { name: String, detail: String },
    #[error("missing closing parenthesis")]
    Unclosed,
    #[error("unexpected trailing input `{0}`")]
    Trailing(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Arg {
    Int(u32),
    Str(String),
    Word(String),
}

struct ArgLexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> ArgLexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn string(&mut self) -> Result<String, String> {
        // Find the closing quote, honouring backslash escapes, then let
        // serde_json decode the literal.
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos + 1;
        let mut escaped = false;
        while i < bytes.len() {
            let b = bytes[i];
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                let literal = &self.src[start..=i];
                self.pos = i + 1;
                return serde_json::from_str::<String>(literal)
                    .or_else(|_| Ok(literal[1..literal.len() - 1].to_string()));
            }
            i += 1;
        }
        Err("unterminated string".to_string())
    }

    fn next_arg(&mut self) -> Result<Option<Arg>, String> {
        self.skip_ws();
        let Some(c) = self.peek() else {
            return Ok(None);
        };
        if c == '"' {
            return self.string().map(|s| Some(Arg::Str(s)));
        }
        if c == '\'' {
            let rest = &self.src[self.pos + 1..];
            let end = rest.find('\'').ok_or("unterminated string")?;
            let s = rest[..end].to_string();
            self.pos += end + 2;
            return Ok(Some(Arg::Str(s)));
        }
        let rest = &self.src[self.pos..];
        let end = rest.find(',').unwrap_or(rest.len());
        let token = rest[..end].trim();
        self.pos += end;
        if token.is_empty() {
            return Err("empty argument".to_string());
        }
        let token = token.trim_start_matches('[').trim_end_matches(']');
        if let Ok(n) = token.parse::<u32>() {
            Ok(Some(Arg::Int(n)))
        } else {
            Ok(Some(Arg::Word(token.to_string())))
        }
    }

    fn args(mut self) -> Result<Vec<Arg>, String> {
        let mut out = Vec::new();
        loop {
            match self.next_arg()? {
                None => break,
                Some(a) => out.push(a),
            }
            self.skip_ws();
            match self.peek() {
                None => break,
                Some(',') => {
                    self.pos += 1;
                    self.skip_ws();
                    if self.peek().is_none() {
                        return Err("trailing comma".to_string());
                    }
                }
                Some(c) => return Err(format!("unexpected `{c}`")),
            }
        }
        Ok(out)
    }
}

impl FromStr for AtomicAction {
    type Err = ActionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_matches('`').trim();
        if s.is_empty() {
            return Err(ActionParseError::Empty);
        }
        let (name, inner) = match s.find('(') {
            Some(open) => {
                if !s.ends_with(')') {
                    return Err(ActionParseError::Unclosed);
                }
                (&s[..open], &s[open + 1..s.len() - 1])
            }
            None => (s, ""),
        };
        let name = name.trim().to_ascii_lowercase();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(ActionParseError::UnknownAction(name));
        }
        let bad = |detail: &str| ActionParseError::BadArguments {
            name: name.clone(),
            detail: detail.to_string(),
        };
        let args = ArgLexer { src: inner, pos: 0 }
            .args()
            .map_err(|e| bad(&e))?;

        match name.as_str() {
            "click" => match args.as_slice() {
                [Arg::Int(id)] => Ok(AtomicAction::click(*id)),
                _ => Err(bad("expected one element id")),
            },
            "type" | "fill" => match args.as_slice() {
                [Arg::Int(id), Arg::Str(text)] => Ok(AtomicAction::Type {
                    target: ElementId(*id),
                    text: text.clone(),
                }),
                _ => Err(bad("expected element id and quoted text")),
            },
            "scroll" => match args.as_slice() {
                [Arg::Word(w)] | [Arg::Str(w)] => match w.to_ascii_lowercase().as_str() {
                    "up" => Ok(AtomicAction::Scroll {
                        direction: ScrollDirection::Up,
                    }),
                    "down" => Ok(AtomicAction::Scroll {
                        direction: ScrollDirection::Down,
                    }),
                    _ => Err(bad("direction must be up or down")),
                },
                _ => Err(bad("expected a direction")),
            },
            "goto" => match args.as_slice() {
                [Arg::Str(p)] | [Arg::Word(p)] => Ok(AtomicAction::Goto { page: p.clone() }),
                _ => Err(bad("expected a page")),
            },
            "send_msg_to_user" | "send_message" => match args.as_slice() {
                [Arg::Str(text)] => Ok(AtomicAction::SendMessage { text: text.clone() }),
                [] => Ok(AtomicAction::SendMessage {
                    text: String::new(),
                }),
                _ => Err(bad("expected one quoted message")),
            },
            "noop" | "stop" | "done" => {
                if args.is_empty() {
                    Ok(AtomicAction::Noop)
                } else {
                    Err(bad("takes no arguments"))
                }
            }
            other => Err(ActionParseError::UnknownAction(other.to_string())),
        }
    }
}
