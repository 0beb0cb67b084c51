//! Parallel execution of sweep jobs. Results do not depend on the number of
//! worker threads: jobs are pure and outcomes are reordered before
//! aggregation.

use oodshift_core::runner::{Sweep, SweepConfig, SweepKind, SweepResult};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs a sweep on a pool of `threads` workers (`None`: one per core).
pub fn run_sweep(kind: SweepKind, config: &SweepConfig, threads: Option<usize>) -> Result<SweepResult> {
    let sweep = Sweep::new(kind, config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    let jobs = sweep.jobs();
    let outcomes = pool.install(|| {
        jobs.par_iter()
            .map(|&job| sweep.run_job(job))
            .collect::<oodshift_core::Result<Vec<_>>>()
    })?;
    Ok(sweep.assemble(outcomes)?)
}
