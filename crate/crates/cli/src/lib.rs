//! Job parsing, pass orchestration and reporting for the `fxcheck` binary.
//!
//! A job names a filter, its design spec and a fixed-point format. Running
//! it produces a [`report::Report`] whose exit code is 0 when every pass
//! succeeds, 1 on any violation, 2 on usage or configuration errors and 3
//! when a verdict is indeterminate.

pub mod job;
pub mod render;
pub mod report;
pub mod run;

pub use job::{parse_job, JobConfig, JobError, Overrides, Pass};
pub use report::Report;
pub use run::{run, RunError, RunOutput};
