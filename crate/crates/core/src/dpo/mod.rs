//! Preference losses at three granularities, the composite objective and the
//! curriculum-staged trainer.
//!
//! Every DPO term has the form `−log σ(β Δ_θ)` with
//! `Δ_θ = [log π_θ(w) − log π_ref(w)] − [log π_θ(l) − log π_ref(l)]`, where each
//! log-probability is summed over the segment's recorded (state, action) pairs.

mod config;
mod loss;
mod train;

pub use config::{CurriculumMode, DpoConfig, LossWeights};
pub use loss::{
    dpo_pair_loss, loss_group, loss_hpl, loss_step, loss_traj, pair_logits, sigmoid, softplus,
    HplDatasets, LossBreakdown, PairLogits,
};
pub use train::{gradient_check, train_hpl, EpochRecord, GradCheck, PhaseReport, TrainData, TrainReport};
