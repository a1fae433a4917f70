use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gate::RewardMode;
use crate::search::{ContextMode, EdgeKind, RefinementMode, SearchConfig, SearchStrategy};

use super::HarnessError;

/// The four search families compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VariantKind {
    PlanMCTS,
    PlanSearch,
    ActionMCTS,
    ActionSearch,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [
        VariantKind::PlanMCTS,
        VariantKind::PlanSearch,
        VariantKind::ActionMCTS,
        VariantKind::ActionSearch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::PlanMCTS => "PlanMCTS",
            VariantKind::PlanSearch => "PlanSearch",
            VariantKind::ActionMCTS => "ActionMCTS",
            VariantKind::ActionSearch => "ActionSearch",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        VariantKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| HarnessError::Spec(format!("unknown variant `{s}`")))
    }
}

/// Fields a variant may change relative to the base configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Overrides {
    pub reward_mode: Option<RewardMode>,
    pub refinement: Option<RefinementMode>,
    pub context: Option<ContextMode>,
    pub budget: Option<usize>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub label: String,
    pub kind: VariantKind,
    #[serde(default)]
    pub overrides: Overrides,
}

impl VariantSpec {
    pub fn new(kind: VariantKind) -> Self {
        VariantSpec {
            label: kind.to_string(),
            kind,
            overrides: Overrides::default(),
        }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with(mut self, f: impl FnOnce(&mut Overrides)) -> Self {
        f(&mut self.overrides);
        self
    }

    /// Concrete configuration for this variant on top of `base`.
    pub fn config(&self, base: &SearchConfig) -> SearchConfig {
        let mut cfg = base.clone();
        let (strategy, edge_kind) = match self.kind {
            VariantKind::PlanMCTS => (SearchStrategy::Uct, EdgeKind::Subplan),
            VariantKind::PlanSearch => (SearchStrategy::BestFirst, EdgeKind::Subplan),
            VariantKind::ActionMCTS => (SearchStrategy::Uct, EdgeKind::Action),
            VariantKind::ActionSearch => (SearchStrategy::BestFirst, EdgeKind::Action),
        };
        cfg.strategy = strategy;
        cfg.edge_kind = edge_kind;
        if strategy == SearchStrategy::BestFirst {
            cfg.c = 0.0;
        }
        let o = &self.overrides;
        if let Some(v) = o.reward_mode {
            cfg.reward_mode = v;
        }
        if let Some(v) = o.refinement {
            cfg.refinement = v;
        }
        if let Some(v) = o.context {
            cfg.context = v;
        }
        if let Some(v) = o.budget {
            cfg.budget = v;
        }
        if let Some(v) = o.c {
            cfg.c = v;
        }
        cfg
    }
}

/// Ablation group a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationGroup {
    Full,
    RewardDesign,
    Refinement,
}

/// Full PlanMCTS followed by the reward and refinement ablations.
pub fn ablation_variants() -> Vec<(AblationGroup, VariantSpec)> {
    let base = VariantSpec::new(VariantKind::PlanMCTS);
    vec![
        (AblationGroup::Full, base.clone().labeled("full")),
        (
            AblationGroup::RewardDesign,
            base.clone()
                .labeled("micro-only")
                .with(|o| o.reward_mode = Some(RewardMode::MicroOnly)),
        ),
        (
            AblationGroup::RewardDesign,
            base.clone()
                .labeled("macro-only")
                .with(|o| o.reward_mode = Some(RewardMode::MacroOnly)),
        ),
        (
            AblationGroup::Refinement,
            base.clone()
                .labeled("no-refinement")
                .with(|o| o.refinement = Some(RefinementMode::Disabled)),
        ),
        (
            AblationGroup::Refinement,
            base.labeled("reflection-only")
                .with(|o| o.refinement = Some(RefinementMode::ReflectionOnly)),
        ),
    ]
}

/// PlanMCTS with every path action fed back to the operator.
pub fn full_history_variant() -> VariantSpec {
    VariantSpec::new(VariantKind::PlanMCTS)
        .labeled("PlanMCTS-full-history")
        .with(|o| o.context = Some(ContextMode::FullHistory))
}

/// Resolve a CLI variant name, including ablation and context labels.
pub fn variant_by_name(name: &str) -> Result<VariantSpec, HarnessError> {
    if let Some((_, v)) = ablation_variants().into_iter().find(|(_, v)| v.label == name) {
        return Ok(v);
    }
    if name == "full-history" || name == full_history_variant().label {
        return Ok(full_history_variant());
    }
    name.parse().map(VariantSpec::new)
}
