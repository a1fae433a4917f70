//! Batch evaluation: environments, variants, metrics and reports.

mod batch;
mod envspec;
mod metrics;
mod report;
mod variant;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::world::WorldError;

pub use batch::{collect_tasks, run_batch, BatchReport, BatchSpec, Episode, EpisodeRecord, TaskRef};
pub use envspec::{parse_seeds, EnvSpec};
pub use metrics::{EpisodeStats, MetricSet};
pub use report::{
    ablation_csv, bar_chart_svg, compare, comparison_charts, episodes_csv, scaling_chart_svg, scaling_points,
    summary_csv, Comparison, ComparisonRow,
};
pub use variant::{
    ablation_variants, full_history_variant, variant_by_name, AblationGroup, Overrides, VariantKind, VariantSpec,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Spec(String),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, #[source] std::io::Error),
    #[error("bad trace {path}: {source}", path = .0.display(), source = .1)]
    Trace(PathBuf, #[source] serde_json::Error),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("mismatched task sets: {0}")]
    MismatchedTaskSets(String),
    #[error("csv: {0}")]
    Csv(String),
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::Io(parent.to_path_buf(), e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::Io(path.to_path_buf(), e))
}

/// Write `summary.csv`, `episodes.csv`, `traces/` and, for two or more
/// reports, `comparison.csv` plus `charts/*.svg` under `dir`.
pub fn write_outputs(dir: &Path, reports: &[&BatchReport]) -> Result<(), HarnessError> {
    write_file(&dir.join("summary.csv"), &summary_csv(reports)?)?;
    write_file(&dir.join("episodes.csv"), &episodes_csv(reports)?)?;
    for r in reports {
        r.write_traces(dir)?;
    }
    if reports.len() >= 2 {
        let cmp = compare(reports)?;
        write_file(&dir.join("comparison.csv"), &cmp.to_csv()?)?;
    }
    for (name, svg) in comparison_charts(reports) {
        write_file(&dir.join("charts").join(name), &svg)?;
    }
    Ok(())
}
