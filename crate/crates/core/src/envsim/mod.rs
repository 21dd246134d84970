//! Synthetic long-horizon environments built from chains of sub-tasks.
//!
//! An episode is a sequence of `K` sub-tasks. Each sub-task requires an exact
//! action subsequence; a wrong action resets progress to the start of the
//! current sub-task and still consumes a step. Transitions are deterministic,
//! so every source of randomness lives in the policies acting on the chain.
//!
//! The observation id seen by policies is the flat progress position along the
//! concatenated sub-task sequences; the final id marks success.

mod config;
mod env;
mod expert;
mod trajectory;
mod values;

pub use config::{flat_env, subtask, EnvConfig, OutcomeRegime, StepRewards, SubtaskSpec, TieBreak};
pub use env::{replay_prefix, reset, step, EnvState, Transition};
pub use expert::scripted_expert;
pub use trajectory::{read_jsonl, write_jsonl, Span, Step, Trajectory};
pub use values::{bellman_residual, optimal_values, ValueTable, MAX_ENUMERABLE_STATES};
