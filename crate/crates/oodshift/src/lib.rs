//! File formats, parallel sweep execution and the `oodshift` command line on
//! top of [`oodshift_core`].

pub mod cli;
pub mod corpusio;
mod error;
pub mod exec;
pub mod manifest;
pub mod output;
pub mod scoreio;

pub use error::{Error, Result};
pub use oodshift_core as core;
