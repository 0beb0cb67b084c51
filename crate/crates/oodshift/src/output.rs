//! CSV and JSON renderings of sweep results and evaluation reports.
//!
//! CSV uses '.' decimals, LF line endings and six fixed decimals for metric
//! values, so identical results give identical bytes on every platform.

use std::fmt::Write as _;

use oodshift_core::metrics::{EvalReport, SweepCell};
use oodshift_core::runner::{SweepKind, SweepResult, CONFIDENCE_LEVEL};
use serde::Serialize;

pub const SWEEP_CSV_HEADER: &str = "sweep,n_semantic,overlap_or_alpha,detector,trial,auroc,far95";

/// One row per (cell, trial).
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for cell in &result.cells {
        for (trial, report) in cell.reports.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6},{:.6}",
                result.kind.name(),
                cell.n_semantic,
                cell.sweep_parameter,
                cell.detector_name,
                trial,
                report.auroc,
                report.far95
            );
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct CellSummary<'a> {
    n_semantic: usize,
    parameter: f64,
    /// `1 - overlap` for the semantic sweep, the displacement otherwise.
    shift_strength: f64,
    detector: &'a str,
    n_trials: usize,
    mean_auroc: f64,
    ci_halfwidth: f64,
    mean_far95: f64,
    far95_ci_halfwidth: f64,
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    sweep: &'a str,
    parameter: &'a str,
    confidence_level: f64,
    config: &'a oodshift_core::runner::SweepConfig,
    cells: Vec<CellSummary<'a>>,
}

fn cell_summary(kind: SweepKind, cell: &SweepCell) -> CellSummary<'_> {
    CellSummary {
        n_semantic: cell.n_semantic,
        parameter: cell.sweep_parameter,
        shift_strength: match kind {
            SweepKind::Semantic => 1.0 - cell.sweep_parameter,
            SweepKind::Background => cell.sweep_parameter,
        },
        detector: &cell.detector_name,
        n_trials: cell.reports.len(),
        mean_auroc: cell.mean_auroc,
        ci_halfwidth: cell.ci_halfwidth,
        mean_far95: cell.mean_far95,
        far95_ci_halfwidth: cell.far95_ci_halfwidth,
    }
}

/// Per-cell means and confidence half-widths, with the resolved config.
pub fn sweep_summary_json(result: &SweepResult) -> String {
    let summary = SweepSummary {
        sweep: result.kind.name(),
        parameter: match result.kind {
            SweepKind::Semantic => "overlap_rate",
            SweepKind::Background => "alpha",
        },
        confidence_level: CONFIDENCE_LEVEL,
        config: &result.config,
        cells: result.cells.iter().map(|c| cell_summary(result.kind, c)).collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    text
}

/// `detector: AUROC a FAR95 f (n_id=.., n_ood=..)`.
pub fn report_line(report: &EvalReport) -> String {
    format!(
        "{}: AUROC {:.3} FAR95 {:.3} (n_id={}, n_ood={})",
        report.detector_name, report.auroc, report.far95, report.n_id, report.n_ood
    )
}
