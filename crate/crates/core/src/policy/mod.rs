//! Tabular softmax policies over observation ids.
//!
//! `π(a|s) = exp(θ[s,a]) / Σ_b exp(θ[s,b])`, always evaluated through a
//! max-subtracted log-sum-exp. Gradients are carried in
//! [`GradientAccumulator`]s with the same row-major layout as the logits.

mod bc;
mod params;
mod rollout;

pub use bc::{bc_loss_and_grad, bc_train, BcRun};
pub use params::{log_softmax, GradientAccumulator, PolicyParams, ProbTable};
pub use rollout::{greedy_action, sample_action, sample_rollout, Rollout};
