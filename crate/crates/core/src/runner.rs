//! The two simulation sweeps, split into independent trial jobs.
//!
//! A [`Sweep`] enumerates [`TrialJob`]s; each job is a pure function of the
//! config and its indices, so jobs can run on any executor in any order.
//! [`Sweep::assemble`] orders outcomes by `(cell, trial)` before aggregating.
//!
//! Seeds: `trial_seed = H(master_seed, sweep_kind, seed_cell, trial)` where
//! `H` chains the SplitMix64 finalizer over the four words, and each random
//! draw within a trial uses `mix64(trial_seed ^ stream_tag)`. For the
//! semantic sweep `seed_cell` is the overlap-grid index. For the background
//! sweep it is the dims-split index: every alpha in a split reuses the same
//! ID spec, ID sample and OOD noise (common random numbers), so the curves
//! over alpha differ only by the displacement itself.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::detectors::{OracleDetector, OracleScorer};
use crate::error::{invalid, Result};
use crate::math::mix64;
use crate::metrics::{aggregate_trials, EvalReport, SweepCell};
use crate::simcore::{background_shift_spec, build_id_spec, sample, semantic_shift_spec, Origin};

pub const SCHEMA_VERSION: u32 = 1;
pub const CONFIDENCE_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Semantic,
    Background,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Semantic => "semantic",
            SweepKind::Background => "background",
        }
    }

    fn tag(self) -> u64 {
        match self {
            SweepKind::Semantic => 1,
            SweepKind::Background => 2,
        }
    }

    /// Overlap rates 0.0, 0.1, ..., 1.0 or displacements {0.05, 0.1, 0.2, 0.5, 1.0}.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepKind::Semantic => (0..=10).map(|k| f64::from(k) / 10.0).collect(),
            SweepKind::Background => alloc::vec![0.05, 0.1, 0.2, 0.5, 1.0],
        }
    }
}

impl core::str::FromStr for SweepKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semantic" => Ok(SweepKind::Semantic),
            "background" => Ok(SweepKind::Background),
            other => Err(invalid(
                "sweep",
                alloc::format!("unknown sweep `{other}`; valid values: semantic, background"),
            )),
        }
    }
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}
fn default_total_dims() -> usize {
    200
}
fn default_n_semantic() -> usize {
    40
}
fn default_samples_per_side() -> usize {
    10_000
}
fn default_n_trials() -> usize {
    20
}
fn default_magnitude() -> f64 {
    1.0
}
fn default_dims_splits() -> Vec<usize> {
    (1..=9).map(|k| 20 * k).collect()
}

/// Sweep configuration as read from JSON; omitted fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default = "default_total_dims")]
    pub total_dims: usize,
    /// Semantic dimensions for the semantic sweep.
    #[serde(default = "default_n_semantic")]
    pub n_semantic: usize,
    #[serde(default = "default_samples_per_side")]
    pub samples_per_side: usize,
    #[serde(default = "default_n_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_magnitude")]
    pub semantic_magnitude: f64,
    /// Overlap rates (semantic) or displacements (background); `None` means
    /// the sweep's default grid.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    /// Semantic-dimension counts crossed with the grid (background only).
    #[serde(default = "default_dims_splits")]
    pub dims_splits: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            total_dims: default_total_dims(),
            n_semantic: default_n_semantic(),
            samples_per_side: default_samples_per_side(),
            n_trials: default_n_trials(),
            master_seed: 0,
            semantic_magnitude: default_magnitude(),
            grid: None,
            dims_splits: default_dims_splits(),
        }
    }
}

impl SweepConfig {
    /// The grid for `kind`, resolving `None` to the default.
    pub fn grid_for(&self, kind: SweepKind) -> Vec<f64> {
        self.grid.clone().unwrap_or_else(|| kind.default_grid())
    }

    /// Copy with the grid made explicit, as recorded in manifests.
    pub fn resolved(&self, kind: SweepKind) -> Self {
        Self {
            grid: Some(self.grid_for(kind)),
            ..self.clone()
        }
    }

    pub fn validate(&self, kind: SweepKind) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                alloc::format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.n_trials < 2 {
            return Err(invalid(
                "n_trials",
                "at least two trials are needed for a confidence band",
            ));
        }
        if self.samples_per_side == 0 {
            return Err(invalid("samples_per_side", "must be at least 1"));
        }
        if !(self.semantic_magnitude.is_finite() && self.semantic_magnitude > 0.0) {
            return Err(invalid("semantic_magnitude", "must be positive and finite"));
        }
        let grid = self.grid_for(kind);
        if grid.is_empty() {
            return Err(invalid("grid", "must not be empty"));
        }
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(invalid("grid", "values must be finite"));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("grid", "must be strictly increasing"));
        }
        match kind {
            SweepKind::Semantic => {
                if grid.iter().any(|r| !(0.0..=1.0).contains(r)) {
                    return Err(invalid("grid", "overlap rates must lie in [0, 1]"));
                }
                if self.n_semantic == 0 || self.n_semantic >= self.total_dims {
                    return Err(invalid("n_semantic", "must lie in [1, total_dims)"));
                }
                let m = self.total_dims - self.n_semantic;
                let lowest = grid[0];
                let moved = self.n_semantic - crate::math::round_half_up(lowest * self.n_semantic as f64);
                if moved > m {
                    return Err(invalid(
                        "grid",
                        "lowest overlap relocates more semantic dimensions than there are background dimensions",
                    ));
                }
            }
            SweepKind::Background => {
                if grid.iter().any(|a| *a < 0.0) {
                    return Err(invalid("grid", "displacements must be nonnegative"));
                }
                if self.dims_splits.is_empty() {
                    return Err(invalid("dims_splits", "must not be empty"));
                }
                if self.dims_splits.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(invalid("dims_splits", "must be strictly increasing"));
                }
                if self.dims_splits.iter().any(|&n| n == 0 || n >= self.total_dims) {
                    return Err(invalid("dims_splits", "every split must leave n >= 1 and m >= 1"));
                }
            }
        }
        Ok(())
    }
}

/// Seed of trial `trial` in seeding cell `cell`.
pub fn trial_seed(master_seed: u64, kind: SweepKind, cell: usize, trial: usize) -> u64 {
    let mut h = mix64(master_seed);
    h = mix64(h ^ kind.tag());
    h = mix64(h ^ cell as u64);
    mix64(h ^ trial as u64)
}

#[derive(Clone, Copy)]
enum Stream {
    IdSpec = 1,
    Shift = 2,
    IdSample = 3,
    OodSample = 4,
}

fn stream_seed(trial_seed: u64, stream: Stream) -> u64 {
    mix64(trial_seed ^ (stream as u64).wrapping_mul(0xA076_1D64_78BD_642F))
}

/// One unit of work: a seeding cell and a trial index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TrialJob {
    pub cell: usize,
    pub trial: usize,
}

/// One evaluated (sweep point, detector) pair within a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPoint {
    pub n_semantic: usize,
    pub sweep_parameter: f64,
    pub detector: OracleDetector,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub job: TrialJob,
    pub points: Vec<TrialPoint>,
}

/// All cells of a finished sweep, ordered by (n_semantic, parameter, detector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub config: SweepConfig,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Cells of one detector at one split, in grid order.
    pub fn series(&self, detector: OracleDetector, n_semantic: usize) -> Vec<&SweepCell> {
        self.cells
            .iter()
            .filter(|c| c.detector_name == detector.name() && c.n_semantic == n_semantic)
            .collect()
    }
}

/// A validated sweep, ready to hand out jobs.
#[derive(Debug, Clone)]
pub struct Sweep {
    kind: SweepKind,
    config: SweepConfig,
    grid: Vec<f64>,
}

impl Sweep {
    pub fn new(kind: SweepKind, config: &SweepConfig) -> Result<Self> {
        config.validate(kind)?;
        Ok(Self {
            kind,
            config: config.resolved(kind),
            grid: config.grid_for(kind),
        })
    }

    pub fn kind(&self) -> SweepKind {
        self.kind
    }

    pub fn config(&self) -> &SweepConfig {
        &self.config
    }

    fn seed_cells(&self) -> usize {
        match self.kind {
            SweepKind::Semantic => self.grid.len(),
            SweepKind::Background => self.config.dims_splits.len(),
        }
    }

    pub fn jobs(&self) -> Vec<TrialJob> {
        (0..self.seed_cells())
            .flat_map(|cell| (0..self.config.n_trials).map(move |trial| TrialJob { cell, trial }))
            .collect()
    }

    pub fn run_job(&self, job: TrialJob) -> Result<TrialOutcome> {
        let cfg = &self.config;
        let seed = trial_seed(cfg.master_seed, self.kind, job.cell, job.trial);
        let count = cfg.samples_per_side;
        let n_semantic = match self.kind {
            SweepKind::Semantic => cfg.n_semantic,
            SweepKind::Background => cfg.dims_splits[job.cell],
        };
        let id_spec = build_id_spec(
            cfg.total_dims,
            n_semantic,
            cfg.semantic_magnitude,
            stream_seed(seed, Stream::IdSpec),
        )?;
        let scorer = OracleScorer::new(&id_spec);
        let id_samples = sample(
            &id_spec,
            count,
            stream_seed(seed, Stream::IdSample),
            Origin::InDistribution,
        )?;
        let id_scores = OracleDetector::ALL
            .iter()
            .map(|&d| scorer.rank_keys(&id_samples, d))
            .collect::<Result<Vec<_>>>()?;
        drop(id_samples);

        let shifted: Vec<(f64, _)> = match self.kind {
            SweepKind::Semantic => {
                let r = self.grid[job.cell];
                let spec = semantic_shift_spec(&id_spec, r, stream_seed(seed, Stream::Shift))?;
                alloc::vec![(r, spec)]
            }
            SweepKind::Background => self
                .grid
                .iter()
                .map(|&alpha| Ok((alpha, background_shift_spec(&id_spec, alpha)?)))
                .collect::<Result<_>>()?,
        };

        let mut points = Vec::with_capacity(shifted.len() * 2);
        for (parameter, ood_spec) in shifted {
            let ood_samples = sample(
                &ood_spec,
                count,
                stream_seed(seed, Stream::OodSample),
                Origin::OutOfDistribution,
            )?;
            for (detector, id_scores) in OracleDetector::ALL.iter().zip(&id_scores) {
                let ood_scores = scorer.rank_keys(&ood_samples, *detector)?;
                points.push(TrialPoint {
                    n_semantic,
                    sweep_parameter: parameter,
                    detector: *detector,
                    report: EvalReport::from_scores(id_scores, &ood_scores)?,
                });
            }
        }
        Ok(TrialOutcome { job, points })
    }

    /// Aggregates outcomes (in any order) into cells. Every job must be
    /// present exactly once.
    pub fn assemble(&self, mut outcomes: Vec<TrialOutcome>) -> Result<SweepResult> {
        outcomes.sort_by_key(|o| o.job);
        if outcomes.iter().map(|o| o.job).ne(self.jobs()) {
            return Err(invalid("outcomes", "every job must be reported exactly once"));
        }
        // Key: (n_semantic, grid index, detector) -> per-trial reports in trial order.
        let mut groups: BTreeMap<(usize, usize, OracleDetector), (f64, Vec<EvalReport>)> = BTreeMap::new();
        for outcome in &outcomes {
            for point in &outcome.points {
                let grid_index = self
                    .grid
                    .iter()
                    .position(|&g| g == point.sweep_parameter)
                    .ok_or_else(|| invalid("outcomes", "point outside the grid"))?;
                groups
                    .entry((point.n_semantic, grid_index, point.detector))
                    .or_insert_with(|| (point.sweep_parameter, Vec::new()))
                    .1
                    .push(point.report.clone());
            }
        }
        let cells = groups
            .into_iter()
            .map(|((n_semantic, _, _), (parameter, reports))| {
                aggregate_trials(parameter, n_semantic, reports, CONFIDENCE_LEVEL)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepResult {
            kind: self.kind,
            config: self.config.clone(),
            cells,
        })
    }

    /// Runs every job on the current thread.
    pub fn run_sequential(&self) -> Result<SweepResult> {
        let outcomes = self
            .jobs()
            .into_iter()
            .map(|job| self.run_job(job))
            .collect::<Result<Vec<_>>>()?;
        self.assemble(outcomes)
    }
}

pub fn run_semantic_sweep(config: &SweepConfig) -> Result<SweepResult> {
    Sweep::new(SweepKind::Semantic, config)?.run_sequential()
}

pub fn run_background_sweep(config: &SweepConfig) -> Result<SweepResult> {
    Sweep::new(SweepKind::Background, config)?.run_sequential()
}

/// Human-readable label of a detector cell, e.g. for log lines.
pub fn cell_label(cell: &SweepCell) -> String {
    alloc::format!(
        "n={} param={} {}: {:.4} +- {:.4}",
        cell.n_semantic,
        cell.sweep_parameter,
        cell.detector_name,
        cell.mean_auroc,
        cell.ci_halfwidth
    )
}
