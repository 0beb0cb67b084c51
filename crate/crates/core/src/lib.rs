//! Semantic vs background distribution shift, in miniature.
//!
//! This crate holds the allocation-only algorithmic core:
//!
//! * [`simcore`]: two-class Gaussian mixtures over a feature space split into
//!   label-correlated (semantic) and label-independent (background) axes, the
//!   two shift constructors, and seeded sampling.
//! * [`detectors`]: the oracle LDA posterior (calibration / MSP) and the exact
//!   mixture log-density, plus MSP, token-PPL and `log p(x)` scoring of
//!   externally produced model outputs.
//! * [`metrics`]: AUROC, FAR95 and trial aggregation.
//! * [`runner`]: the semantic-overlap and background-displacement sweeps,
//!   expressed as independent trial jobs so any executor can run them.
//! * [`records`]: validated external model outputs and their evaluation.
//! * [`textshift`]: filler-append and class-partition text shifts and the
//!   bag-of-words logistic-regression oracle detector.
//!
//! File formats, parallel execution and the command line live in the
//! `oodshift` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod detectors;
mod error;
pub mod math;
pub mod metrics;
pub mod records;
pub mod runner;
pub mod simcore;
pub mod textshift;

pub use error::{Error, Result};
