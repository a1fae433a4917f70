use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use planmcts::gate::{
    gate, macro_assess, DualGate, EvaluationContext, MacroCode, MacroStatus, RewardMode, StatusScale, MACRO_REDRAWS,
};
use planmcts::policy::{MacroJudge, MicroJudge, PolicyError, Role};
use planmcts::search::TrajectorySegment;
use planmcts::tree::Subplan;
use planmcts::world::{fixtures, Environment, WebWorld};

struct FixedMicro(Result<bool, ()>);

impl MicroJudge for FixedMicro {
    fn verify(&self, _: &EvaluationContext<'_>) -> Result<bool, PolicyError> {
        self.0.map_err(|_| PolicyError::parse(Role::MicroJudge, "garbled"))
    }
}

/// Answers `codes[sample]`; `None` entries fail to parse on every draw.
struct ScriptMacro {
    codes: Vec<Option<MacroCode>>,
    calls: AtomicUsize,
}

impl ScriptMacro {
    fn new(codes: Vec<Option<MacroCode>>) -> Self {
        ScriptMacro {
            codes,
            calls: AtomicUsize::new(0),
        }
    }
}

impl MacroJudge for ScriptMacro {
    fn assess(&self, _: &EvaluationContext<'_>, sample: usize, _attempt: usize) -> Result<MacroStatus, PolicyError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match self.codes[sample % self.codes.len()] {
            Some(c) => Ok(MacroStatus::new(c)),
            None => Err(PolicyError::parse(Role::MacroJudge, "no status code")),
        }
    }
}

/// Fails the first `fail_first` draws of every sample, then answers `code`.
struct FlakyMacro {
    fail_first: usize,
    code: MacroCode,
}

impl MacroJudge for FlakyMacro {
    fn assess(&self, _: &EvaluationContext<'_>, _: usize, attempt: usize) -> Result<MacroStatus, PolicyError> {
        if attempt < self.fail_first {
            Err(PolicyError::parse(Role::MacroJudge, "flaky"))
        } else {
            Ok(MacroStatus::new(self.code))
        }
    }
}

fn with_ctx<R>(f: impl FnOnce(&EvaluationContext<'_>) -> R) -> R {
    let g = Arc::new(fixtures::chain());
    let env = WebWorld::new(g, "widget-price", 0).unwrap();
    let segment = TrajectorySegment::start(env.observe());
    let subplan = Subplan::new("open the catalog").unwrap();
    let ctx = EvaluationContext {
        goal: "find the price",
        plan_history: &[],
        subplan: &subplan,
        segment: &segment,
        pre_state: None,
        post_state: None,
    };
    f(&ctx)
}

#[test]
fn gate_zero_micro_always_zero() {
    for i in 0..=100 {
        let m = i as f64 / 100.0;
        assert_eq!(gate(0, m), 0.0);
        assert_eq!(gate(1, m), m);
    }
}

#[test]
fn gate_clamps_out_of_range_macro() {
    assert_eq!(gate(1, 1.5), 1.0);
    assert_eq!(gate(1, -0.2), 0.0);
}

#[test]
fn default_scale_maps_codes() {
    let s = StatusScale::default();
    let got: Vec<f64> = MacroCode::ALL.iter().map(|c| s.value(*c)).collect();
    assert_eq!(got, vec![1.0, 0.75, 0.5, 0.25, 0.0]);
}

#[test]
fn macro_mean_of_three_samples() {
    with_ctx(|ctx| {
        let judge = ScriptMacro::new(vec![Some(MacroCode::A), Some(MacroCode::B), Some(MacroCode::C)]);
        let m = macro_assess(ctx, &judge, 3, &StatusScale::default(), false);
        assert_eq!(m.samples, vec![1.0, 0.75, 0.5]);
        assert!((m.mean - 0.75).abs() < 1e-12);
        assert_eq!(m.calls, 3);
    });
}

#[test]
fn unparseable_sample_redrawn_then_scored_zero() {
    with_ctx(|ctx| {
        let judge = ScriptMacro::new(vec![Some(MacroCode::A), None, Some(MacroCode::A)]);
        let m = macro_assess(ctx, &judge, 3, &StatusScale::default(), false);
        assert_eq!(m.samples, vec![1.0, 0.0, 1.0]);
        assert_eq!(m.calls, 2 + MACRO_REDRAWS + 1);
        assert_eq!(m.annotations.len(), 1);
    });
}

#[test]
fn redraw_recovers_within_limit() {
    with_ctx(|ctx| {
        let judge = FlakyMacro {
            fail_first: MACRO_REDRAWS,
            code: MacroCode::B,
        };
        let m = macro_assess(ctx, &judge, 2, &StatusScale::default(), false);
        assert_eq!(m.samples, vec![0.75, 0.75]);
        assert_eq!(m.calls, 2 * (MACRO_REDRAWS + 1));
        assert!(m.annotations.is_empty());
    });
}

#[test]
fn concurrent_sampling_matches_sequential() {
    with_ctx(|ctx| {
        let codes = vec![Some(MacroCode::D), Some(MacroCode::A), None, Some(MacroCode::C)];
        let a = macro_assess(ctx, &ScriptMacro::new(codes.clone()), 4, &StatusScale::default(), false);
        let b = macro_assess(ctx, &ScriptMacro::new(codes), 4, &StatusScale::default(), true);
        assert_eq!(a, b);
    });
}

fn dual(mode: RewardMode) -> DualGate {
    DualGate {
        mode,
        ..DualGate::default()
    }
}

#[test]
fn dual_gate_skips_macro_on_failed_micro() {
    with_ctx(|ctx| {
        let judge = ScriptMacro::new(vec![Some(MacroCode::A)]);
        let rec = dual(RewardMode::Dual).evaluate(ctx, &FixedMicro(Ok(false)), &judge);
        assert_eq!(rec.reward, 0.0);
        assert_eq!(rec.macro_calls, 0);
        assert_eq!(judge.calls.load(Ordering::SeqCst), 0);
    });
}

#[test]
fn dual_gate_passes_macro_through() {
    with_ctx(|ctx| {
        let judge = ScriptMacro::new(vec![Some(MacroCode::B)]);
        let rec = dual(RewardMode::Dual).evaluate(ctx, &FixedMicro(Ok(true)), &judge);
        assert_eq!(rec.r_micro, 1);
        assert_eq!(rec.reward, 0.75);
    });
}

#[test]
fn micro_judge_error_counts_as_failure() {
    with_ctx(|ctx| {
        let judge = ScriptMacro::new(vec![Some(MacroCode::A)]);
        let rec = dual(RewardMode::Dual).evaluate(ctx, &FixedMicro(Err(())), &judge);
        assert_eq!(rec.r_micro, 0);
        assert_eq!(rec.reward, 0.0);
        assert_eq!(rec.annotations.len(), 1);
    });
}

#[test]
fn micro_only_rewards_are_binary() {
    with_ctx(|ctx| {
        let judge = ScriptMacro::new(vec![Some(MacroCode::C)]);
        let g = dual(RewardMode::MicroOnly);
        assert_eq!(g.evaluate(ctx, &FixedMicro(Ok(true)), &judge).reward, 1.0);
        assert_eq!(g.evaluate(ctx, &FixedMicro(Ok(false)), &judge).reward, 0.0);
        assert_eq!(judge.calls.load(Ordering::SeqCst), 0);
    });
}

#[test]
fn macro_only_scores_failed_grounding() {
    with_ctx(|ctx| {
        let judge = ScriptMacro::new(vec![Some(MacroCode::B)]);
        let rec = dual(RewardMode::MacroOnly).evaluate(ctx, &FixedMicro(Ok(false)), &judge);
        assert_eq!(rec.r_micro, 0);
        assert_eq!(rec.reward, 0.75);
    });
}

#[test]
fn macro_code_parsing() {
    assert_eq!("b".parse::<MacroCode>().unwrap(), MacroCode::B);
    assert_eq!(" E ".parse::<MacroCode>().unwrap(), MacroCode::E);
    assert!("F".parse::<MacroCode>().is_err());
}
