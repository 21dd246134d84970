//! Bias and variance of trajectory-, step- and group-level DPO losses on
//! enumerable chains.
//!
//! Each pair starts from a shared state: the winner continues under θ and the
//! loser under the reference policy. An estimator scores a pair by the gap in
//! bootstrapped discounted returns `Σ γ^i r_i + γ^|u| V*(end)` over its unit;
//! the population target scores the same pair by the gap in full discounted
//! continuations to the horizon. Trajectory and step units already run to the
//! horizon, so only group units of length `k < T` are biased, by at most
//! `2 β R_max γ^k / (1 − γ)`.

mod biasvar;
mod bounds;
mod enumerate;
mod grid;
mod returns;

pub use biasvar::{estimate_bias_variance, estimate_many, BiasVarResult};
pub use bounds::{k_of_epsilon, step_variance_envelope, theoretical_bounds, TheoreticalBounds};
pub use enumerate::{
    expected_loss, population_loss, AnalysisSetup, MAX_ENUMERABLE_TRAJECTORIES, REF_LOGIT_SCALE, THETA_NOISE,
};
pub use grid::{k_of_epsilon_checks, run_grid, BiasVarGrid, Check, FullHorizon, GridReport, GroupLen};
pub use returns::{bradley_terry_prob, discounted_return, Granularity, ReturnSpec};

use crate::dpo::softplus;
