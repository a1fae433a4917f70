//! Gated reward: a binary completion check multiplied by a sampled progress score.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::policy::{MacroJudge, MicroJudge};
use crate::search::TrajectorySegment;
use crate::tree::{HistoryEntry, Subplan};
use crate::world::{Observation, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MacroCode {
    A,
    B,
    C,
    D,
    E,
}

impl MacroCode {
    pub const ALL: [MacroCode; 5] = [MacroCode::A, MacroCode::B, MacroCode::C, MacroCode::D, MacroCode::E];
}

impl fmt::Display for MacroCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            MacroCode::A => "A",
            MacroCode::B => "B",
            MacroCode::C => "C",
            MacroCode::D => "D",
            MacroCode::E => "E",
        };
        f.write_str(c)
    }
}

impl FromStr for MacroCode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(MacroCode::A),
            "B" => Ok(MacroCode::B),
            "C" => Ok(MacroCode::C),
            "D" => Ok(MacroCode::D),
            "E" => Ok(MacroCode::E),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroStatus {
    pub code: MacroCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl MacroStatus {
    pub fn new(code: MacroCode) -> Self {
        MacroStatus { code, notes: None }
    }
}

/// Scalar value of each status code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatusScale {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl Default for StatusScale {
    fn default() -> Self {
        StatusScale {
            a: 1.0,
            b: 0.75,
            c: 0.5,
            d: 0.25,
            e: 0.0,
        }
    }
}

impl StatusScale {
    pub fn value(&self, code: MacroCode) -> f64 {
        let v = match code {
            MacroCode::A => self.a,
            MacroCode::B => self.b,
            MacroCode::C => self.c,
            MacroCode::D => self.d,
            MacroCode::E => self.e,
        };
        v.clamp(0.0, 1.0)
    }
}

/// Everything a judge may look at.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationContext<'a> {
    pub goal: &'a str,
    pub plan_history: &'a [HistoryEntry],
    pub subplan: &'a Subplan,
    pub segment: &'a TrajectorySegment,
    /// Simulator states around the segment, for ground-truth judges only.
    pub pre_state: Option<&'a WorldState>,
    pub post_state: Option<&'a WorldState>,
}

impl<'a> EvaluationContext<'a> {
    pub fn pre_obs(&self) -> &'a Observation {
        self.segment.pre()
    }

    pub fn post_obs(&self) -> &'a Observation {
        self.segment.post()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub r_micro: u8,
    pub macro_samples: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub macro_statuses: Vec<Option<MacroStatus>>,
    pub r_macro: f64,
    pub reward: f64,
    /// Number of macro judge invocations, redraws included.
    pub macro_calls: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<String>,
}

impl RewardRecord {
    pub fn zero() -> Self {
        RewardRecord {
            r_micro: 0,
            macro_samples: Vec::new(),
            macro_statuses: Vec::new(),
            r_macro: 0.0,
            reward: 0.0,
            macro_calls: 0,
            annotations: Vec::new(),
        }
    }
}

/// Hard gate: `r_micro * r_macro`.
pub fn gate(r_micro: u8, r_macro: f64) -> f64 {
    if r_micro == 0 {
        return 0.0;
    }
    r_macro.clamp(0.0, 1.0)
}

/// Binary verdict plus an annotation when the judge failed outright.
pub fn micro_verify(ctx: &EvaluationContext<'_>, judge: &dyn MicroJudge) -> (u8, Option<String>) {
    match judge.verify(ctx) {
        Ok(true) => (1, None),
        Ok(false) => (0, None),
        Err(e) => (0, Some(format!("micro judge failed: {e}"))),
    }
}

/// Result of sampling the macro judge.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroAssessment {
    pub mean: f64,
    pub samples: Vec<f64>,
    pub statuses: Vec<Option<MacroStatus>>,
    pub calls: usize,
    pub annotations: Vec<String>,
}

/// Extra draws allowed per sample after a parse failure.
pub const MACRO_REDRAWS: usize = 2;

fn draw(
    ctx: &EvaluationContext<'_>,
    judge: &dyn MacroJudge,
    sample: usize,
) -> (Option<MacroStatus>, usize, Option<String>) {
    let mut last = String::new();
    for attempt in 0..=MACRO_REDRAWS {
        match judge.assess(ctx, sample, attempt) {
            Ok(s) => return (Some(s), attempt + 1, None),
            Err(e) => last = e.to_string(),
        }
    }
    (
        None,
        MACRO_REDRAWS + 1,
        Some(format!("macro sample {sample} unparseable, scored 0: {last}")),
    )
}

pub fn macro_assess(
    ctx: &EvaluationContext<'_>,
    judge: &dyn MacroJudge,
    n_samples: usize,
    scale: &StatusScale,
    concurrent: bool,
) -> MacroAssessment {
    let n = n_samples.max(1);
    let draws: Vec<_> = if concurrent && n > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..n).map(|i| s.spawn(move || draw(ctx, judge, i))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("macro sample thread panicked"))
                .collect()
        })
    } else {
        (0..n).map(|i| draw(ctx, judge, i)).collect()
    };
    let mut out = MacroAssessment {
        mean: 0.0,
        samples: Vec::with_capacity(n),
        statuses: Vec::with_capacity(n),
        calls: 0,
        annotations: Vec::new(),
    };
    for (status, calls, note) in draws {
        out.samples.push(status.as_ref().map_or(0.0, |s| scale.value(s.code)));
        out.statuses.push(status);
        out.calls += calls;
        out.annotations.extend(note);
    }
    out.mean = out.samples.iter().sum::<f64>() / out.samples.len() as f64;
    out
}

/// Which components of the gate feed the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    #[default]
    Dual,
    MicroOnly,
    MacroOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualGate {
    pub scale: StatusScale,
    pub n_samples: usize,
    pub concurrent: bool,
    pub mode: RewardMode,
}

impl Default for DualGate {
    fn default() -> Self {
        DualGate {
            scale: StatusScale::default(),
            n_samples: 3,
            concurrent: false,
            mode: RewardMode::Dual,
        }
    }
}

impl DualGate {
    pub fn evaluate(
        &self,
        ctx: &EvaluationContext<'_>,
        micro: &dyn MicroJudge,
        macro_judge: &dyn MacroJudge,
    ) -> RewardRecord {
        let mut rec = RewardRecord::zero();
        let (bit, note) = micro_verify(ctx, micro);
        rec.r_micro = bit;
        rec.annotations.extend(note);
        let need_macro = match self.mode {
            RewardMode::Dual => bit == 1,
            RewardMode::MicroOnly => false,
            RewardMode::MacroOnly => true,
        };
        if need_macro {
            let m = macro_assess(ctx, macro_judge, self.n_samples, &self.scale, self.concurrent);
            rec.r_macro = m.mean;
            rec.macro_samples = m.samples;
            rec.macro_statuses = m.statuses;
            rec.macro_calls = m.calls;
            rec.annotations.extend(m.annotations);
        }
        rec.reward = match self.mode {
            RewardMode::Dual => gate(rec.r_micro, rec.r_macro),
            RewardMode::MicroOnly => f64::from(rec.r_micro),
            RewardMode::MacroOnly => rec.r_macro,
        };
        rec
    }
}
