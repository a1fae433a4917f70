//! CSV tables and static SVG charts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::batch::BatchReport;
use super::metrics::MetricSet;
use super::variant::AblationGroup;
use super::HarnessError;

fn fixed(v: f64) -> String {
    format!("{v:.4}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fixed).unwrap_or_default()
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String, HarnessError> {
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Csv(e.to_string()))
}

const SUMMARY_HEADER: [&str; 13] = [
    "variant",
    "episodes",
    "success_rate",
    "success_stderr",
    "action_interactions",
    "interactions_stderr",
    "path_length",
    "budget_utilization",
    "subplan_completion_rate",
    "operator_context_chars",
    "model_calls",
    "prompt_tokens",
    "completion_tokens",
];

fn summary_row(label: &str, m: &MetricSet) -> Vec<String> {
    let calls: u64 = m.tokens.values().map(|t| t.calls).sum();
    let prompt: u64 = m.tokens.values().map(|t| t.prompt_tokens).sum();
    let completion: u64 = m.tokens.values().map(|t| t.completion_tokens).sum();
    vec![
        label.to_string(),
        m.episodes.to_string(),
        fixed(m.success_rate),
        fixed(m.success_stderr),
        fixed(m.action_interactions),
        fixed(m.interactions_stderr),
        opt(m.path_length),
        fixed(m.budget_utilization),
        fixed(m.subplan_completion_rate),
        fixed(m.operator_context),
        calls.to_string(),
        prompt.to_string(),
        completion.to_string(),
    ]
}

/// One metrics row per report.
pub fn summary_csv(reports: &[&BatchReport]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).map_err(|e| HarnessError::Csv(e.to_string()))?;
    for r in reports {
        w.write_record(summary_row(&r.variant, &r.metrics))
            .map_err(|e| HarnessError::Csv(e.to_string()))?;
    }
    into_string(w)
}

/// Per-episode breakdown.
pub fn episodes_csv(reports: &[&BatchReport]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "variant",
        "env",
        "task",
        "seed",
        "success",
        "answer",
        "iterations_used",
        "budget",
        "interactions",
        "path_length",
        "subplans_grounded",
        "subplans_verified",
        "stop",
        "error",
    ])
    .map_err(|e| HarnessError::Csv(e.to_string()))?;
    for r in reports {
        for ep in &r.episodes {
            let e = &ep.record;
            let stop = e
                .stop
                .map(|s| serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())
                .unwrap_or_default();
            w.write_record([
                e.variant.clone(),
                e.env.clone(),
                e.task.clone(),
                e.seed.to_string(),
                e.stats.success.to_string(),
                e.answer.clone().unwrap_or_default(),
                e.stats.iterations_used.to_string(),
                e.stats.budget.to_string(),
                e.stats.interactions.to_string(),
                e.stats.path_length.map(|l| l.to_string()).unwrap_or_default(),
                e.stats.subplans_grounded.to_string(),
                e.stats.subplans_verified.to_string(),
                stop,
                e.error.clone().unwrap_or_default(),
            ])
            .map_err(|e| HarnessError::Csv(e.to_string()))?;
        }
    }
    into_string(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: String,
    pub metrics: MetricSet,
    /// Success rate minus the baseline's, in percentage points.
    pub success_delta: f64,
    /// Relative change of mean interactions against the baseline, in percent.
    pub interactions_change: Option<f64>,
    pub path_length_change: Option<f64>,
}

/// Variants over the same (env, task, seed) set; the first is the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

fn rel_change(x: f64, base: f64) -> Option<f64> {
    (base != 0.0).then(|| 100.0 * (x - base) / base)
}

pub fn compare(reports: &[&BatchReport]) -> Result<Comparison, HarnessError> {
    if reports.len() < 2 {
        return Err(HarnessError::MismatchedTaskSets(format!(
            "comparison needs at least two variants, got {}",
            reports.len()
        )));
    }
    let keys = reports[0].keys();
    for r in &reports[1..] {
        if r.keys() != keys {
            return Err(HarnessError::MismatchedTaskSets(format!(
                "`{}` and `{}` ran different task/seed sets",
                reports[0].variant, r.variant
            )));
        }
    }
    let base = &reports[0].metrics;
    let rows = reports
        .iter()
        .map(|r| {
            let m = &r.metrics;
            ComparisonRow {
                variant: r.variant.clone(),
                metrics: m.clone(),
                success_delta: m.success_rate - base.success_rate,
                interactions_change: rel_change(m.action_interactions, base.action_interactions),
                path_length_change: match (m.path_length, base.path_length) {
                    (Some(a), Some(b)) => rel_change(a, b),
                    _ => None,
                },
            }
        })
        .collect();
    Ok(Comparison { rows })
}

impl Comparison {
    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = SUMMARY_HEADER.to_vec();
        header.extend(["success_delta_pp", "interactions_change_pct", "path_length_change_pct"]);
        w.write_record(&header).map_err(|e| HarnessError::Csv(e.to_string()))?;
        for r in &self.rows {
            let mut row = summary_row(&r.variant, &r.metrics);
            row.push(fixed(r.success_delta));
            row.push(opt(r.interactions_change));
            row.push(opt(r.path_length_change));
            w.write_record(&row).map_err(|e| HarnessError::Csv(e.to_string()))?;
        }
        into_string(w)
    }
}

/// Rows in the layout Method / SR / drop / Budget Util / Step Len.
pub fn ablation_csv(rows: &[(AblationGroup, &BatchReport)]) -> Result<String, HarnessError> {
    let full = rows
        .iter()
        .find(|(g, _)| *g == AblationGroup::Full)
        .map(|(_, r)| r.metrics.success_rate);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "group", "success_rate", "success_drop", "budget_utilization", "step_length"])
        .map_err(|e| HarnessError::Csv(e.to_string()))?;
    for (group, r) in rows {
        let g = serde_json::to_value(group)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let drop = full.map(|f| f - r.metrics.success_rate);
        w.write_record([
            r.variant.clone(),
            g,
            fixed(r.metrics.success_rate),
            opt(drop),
            fixed(r.metrics.budget_utilization),
            opt(r.metrics.path_length),
        ])
        .map_err(|e| HarnessError::Csv(e.to_string()))?;
    }
    into_string(w)
}

const PALETTE: [&str; 6] = ["#3b6ea5", "#d9822b", "#4f9a5b", "#b5473a", "#7d5ba6", "#7a7a7a"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped bars: one group per metric, one bar per variant.
pub fn bar_chart_svg(title: &str, metrics: &[&str], series: &[(String, Vec<f64>)]) -> String {
    let (w, h) = (640.0, 360.0);
    let (left, right, top, bottom) = (56.0, 16.0, 40.0, 64.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let max = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let groups = metrics.len().max(1) as f64;
    let group_w = plot_w / groups;
    let bar_w = (group_w * 0.8) / series.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, esc(title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, top + plot_h, left + plot_w, top + plot_h);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + plot_h);
    for t in 0..=4 {
        let v = max * t as f64 / 4.0;
        let y = top + plot_h - plot_h * t as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.1}</text>"#, left - 6.0, y + 4.0, v);
    }
    for (gi, name) in metrics.iter().enumerate() {
        let gx = left + group_w * gi as f64 + group_w * 0.1;
        for (si, (_, vals)) in series.iter().enumerate() {
            let v = vals.get(gi).copied().unwrap_or(0.0);
            let bh = plot_h * v / max;
            let x = gx + bar_w * si as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{bh:.1}" fill="{}"><title>{v:.3}</title></rect>"#,
                top + plot_h - bh,
                bar_w * 0.92,
                PALETTE[si % PALETTE.len()]
            );
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, gx + group_w * 0.4, top + plot_h + 18.0, esc(name));
    }
    legend(&mut s, series.iter().map(|(n, _)| n.as_str()), left, h - 22.0);
    s.push_str("</svg>\n");
    s
}

fn legend<'a>(s: &mut String, names: impl Iterator<Item = &'a str>, x0: f64, y: f64) {
    let mut x = x0;
    for (i, n) in names.enumerate() {
        let _ = writeln!(s, r#"<rect x="{x:.1}" y="{}" width="10" height="10" fill="{}"/>"#, y - 9.0, PALETTE[i % PALETTE.len()]);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{y}">{}</text>"#, x + 14.0, esc(n));
        x += 24.0 + 7.0 * n.len() as f64;
    }
}

/// Step lines of cumulative success against per-episode cost.
pub fn scaling_chart_svg(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (640.0, 360.0);
    let (left, right, top, bottom) = (56.0, 16.0, 40.0, 64.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let max_x = series
        .iter()
        .flat_map(|(_, p)| p.iter().map(|(x, _)| *x))
        .fold(0.0f64, f64::max)
        .max(1.0);
    let sx = |x: f64| left + plot_w * x / max_x;
    let sy = |y: f64| top + plot_h - plot_h * y / 100.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, esc(title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, top + plot_h, left + plot_w, top + plot_h);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + plot_h);
    for t in 0..=4 {
        let y = 25.0 * t as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.0}%</text>"#, left - 6.0, sy(y) + 4.0);
        let xv = max_x * t as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{xv:.0}</text>"#, sx(xv), top + plot_h + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + plot_w / 2.0, top + plot_h + 32.0, esc(x_label));
    for (i, (_, pts)) in series.iter().enumerate() {
        let mut d = format!("M{:.1},{:.1}", sx(0.0), sy(0.0));
        let mut last_y = 0.0;
        for (x, y) in pts {
            let _ = write!(d, " L{:.1},{:.1} L{:.1},{:.1}", sx(*x), sy(last_y), sx(*x), sy(*y));
            last_y = *y;
        }
        let _ = write!(d, " L{:.1},{:.1}", sx(max_x), sy(last_y));
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{}" stroke-width="2"/>"#, PALETTE[i % PALETTE.len()]);
    }
    legend(&mut s, series.iter().map(|(n, _)| n.as_str()), left, h - 8.0);
    s.push_str("</svg>\n");
    s
}

/// Cumulative success curve of one report. Cost is model tokens when any
/// were spent, otherwise environment steps.
pub fn scaling_points(r: &BatchReport, use_tokens: bool) -> Vec<(f64, f64)> {
    let n = r.episodes.len().max(1) as f64;
    let mut costs: Vec<f64> = r
        .episodes
        .iter()
        .filter(|e| e.record.stats.success)
        .map(|e| {
            let s = &e.record.stats;
            if use_tokens {
                s.tokens.values().map(|t| t.total()).sum::<u64>() as f64
            } else {
                s.interactions as f64
            }
        })
        .collect();
    costs.sort_by(f64::total_cmp);
    costs
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, 100.0 * (i + 1) as f64 / n))
        .collect()
}

/// The efficiency bar chart and the scaling curve for a comparison.
pub fn comparison_charts(reports: &[&BatchReport]) -> Vec<(String, String)> {
    let series: Vec<(String, Vec<f64>)> = reports
        .iter()
        .map(|r| {
            (
                r.variant.clone(),
                vec![r.metrics.action_interactions, r.metrics.path_length.unwrap_or(0.0)],
            )
        })
        .collect();
    let bars = bar_chart_svg(
        "Efficiency: interactions and solution length",
        &["action interactions", "path length"],
        &series,
    );
    let use_tokens = reports.iter().any(|r| r.metrics.total_tokens() > 0);
    let curves: Vec<(String, Vec<(f64, f64)>)> = reports
        .iter()
        .map(|r| (r.variant.clone(), scaling_points(r, use_tokens)))
        .collect();
    let x_label = if use_tokens { "model tokens per episode" } else { "environment steps per episode" };
    let scaling = scaling_chart_svg("Success versus cost", x_label, &curves);
    vec![("efficiency.svg".into(), bars), ("scaling.svg".into(), scaling)]
}
