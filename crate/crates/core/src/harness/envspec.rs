//! Environment sources: files, bundled fixtures and generator sweeps.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::world::{fixtures, generate, GeneratorParams, PageGraph, WorldError};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    File(PathBuf),
    Fixture(String),
    /// One generated graph per seed in `seeds`.
    Generated {
        params: GeneratorParams,
        seeds: std::ops::Range<u64>,
    },
}

fn parse_range(s: &str) -> Result<std::ops::Range<u64>, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed `{t}`: {e}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b)?);
            if b < a {
                return Err(format!("empty seed range `{s}`"));
            }
            Ok(a..b + 1)
        }
        None => {
            let a = num(s)?;
            Ok(a..a + 1)
        }
    }
}

/// Parses `a..b` (inclusive) or a comma-separated list of such items.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, HarnessError> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        out.extend(parse_range(part).map_err(HarnessError::Spec)?);
    }
    if out.is_empty() {
        return Err(HarnessError::Spec("no seeds given".into()));
    }
    Ok(out)
}

impl FromStr for EnvSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(name) = s.strip_prefix("fixture:") {
            return Ok(EnvSpec::Fixture(name.to_string()));
        }
        let Some(rest) = s.strip_prefix("gen:") else {
            return Ok(EnvSpec::File(PathBuf::from(s)));
        };
        let mut params = GeneratorParams::default();
        let mut seeds = 0..1;
        let bad = |k: &str, v: &str| HarnessError::Spec(format!("bad value `{v}` for `{k}`"));
        for item in rest.split(',').filter(|i| !i.is_empty()) {
            let (k, v) = item.split_once('=').unwrap_or((item, "true"));
            match k.trim() {
                "b" | "branching" => params.branching = v.parse().map_err(|_| bad(k, v))?,
                "d" | "depth" => params.depth = v.parse().map_err(|_| bad(k, v))?,
                "v" | "valid_paths" => params.valid_paths = v.parse().map_err(|_| bad(k, v))?,
                "rho" | "distractor_ratio" => {
                    params.distractor_ratio = v.parse().map_err(|_| bad(k, v))?
                }
                "impossible" => params.impossible = v.parse().map_err(|_| bad(k, v))?,
                "seed" | "seeds" => seeds = parse_range(v).map_err(HarnessError::Spec)?,
                other => return Err(HarnessError::Spec(format!("unknown generator key `{other}`"))),
            }
        }
        Ok(EnvSpec::Generated { params, seeds })
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSpec::File(p) => write!(f, "{}", p.display()),
            EnvSpec::Fixture(n) => write!(f, "fixture:{n}"),
            EnvSpec::Generated { params: p, seeds } => write!(
                f,
                "gen:b={},d={},v={},rho={},seeds={}..{}{}",
                p.branching,
                p.depth,
                p.valid_paths,
                p.distractor_ratio,
                seeds.start,
                seeds.end.saturating_sub(1),
                if p.impossible { ",impossible" } else { "" }
            ),
        }
    }
}

pub fn load_file(path: &Path) -> Result<PageGraph, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.to_path_buf(), e))?;
    Ok(PageGraph::from_json(&text)?)
}

impl EnvSpec {
    pub fn load(&self) -> Result<Vec<Arc<PageGraph>>, HarnessError> {
        match self {
            EnvSpec::File(p) => Ok(vec![Arc::new(load_file(p)?)]),
            EnvSpec::Fixture(n) => fixtures::by_name(n)
                .map(|g| vec![Arc::new(g)])
                .ok_or_else(|| HarnessError::Spec(format!("unknown fixture `{n}`; known: {}", fixtures::NAMES.join(", ")))),
            EnvSpec::Generated { params, seeds } => seeds
                .clone()
                .map(|seed| {
                    let p = GeneratorParams { seed, ..params.clone() };
                    generate(&p).map(Arc::new)
                })
                .collect::<Result<Vec<_>, WorldError>>()
                .map_err(Into::into),
        }
    }
}
