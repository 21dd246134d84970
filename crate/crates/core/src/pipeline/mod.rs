//! End-to-end pipeline: expert demonstrations, behavior cloning, preference
//! generation, Monte-Carlo scoring, bucketing, staged training, evaluation.
//!
//! [`stages`](self) functions work in memory; [`Runner`] persists every stage's
//! artifacts with a manifest and can resume from whatever is already on disk.

mod config;
mod report;
mod run;
mod stages;

pub use config::{BcConfig, EvalConfig, PipelineConfig};
pub use report::{build_report, Report, RunArtifacts};
pub use run::{files, load_eval, EvalBundle, RunSummary, Runner, Stage};
pub use stages::{run_bc, run_bucket, run_eval, run_expert, run_mc, run_prefs, run_train, task_id, Prefs};
