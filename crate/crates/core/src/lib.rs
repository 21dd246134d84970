//! Hierarchical preference learning on synthetic long-horizon environments.
//!
//! The crate is organised bottom-up:
//!
//! - [`envsim`]: deterministic sub-task chain MDPs, a scripted expert and an
//!   exact finite-horizon value oracle.
//! - [`policy`]: tabular softmax policies, exact entropies, analytic
//!   gradients and behavior cloning.
//! - [`prefgen`]: trajectory-, step- and group-level preference pairs,
//!   segmentation strategies and Monte-Carlo group rewards.
//! - [`curriculum`]: the 3×3 length/difficulty bucket grid and the
//!   three-phase schedule.
//! - [`dpo`]: the DPO losses, the composite objective and the staged trainer.
//! - [`analysis`]: exact population losses and replicated bias/variance
//!   experiments for group-level losses.
//! - [`pipeline`]: the persisted, resumable end-to-end driver used by the CLI.
//!
//! Data-parallel loops (rollouts, Monte-Carlo estimates, replications) go
//! through [`exec`], which uses rayon when the `parallel` feature is enabled
//! and falls back to sequential iteration otherwise. Results are identical
//! either way.

pub mod analysis;
pub mod curriculum;
pub mod dpo;
pub mod envsim;
pub mod error;
pub mod eval;
pub mod exec;
pub mod io;
pub mod pipeline;
pub mod policy;
pub mod prefgen;
pub mod seed;

pub use error::{HplError, Result};
