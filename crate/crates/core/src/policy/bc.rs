use super::params::{GradientAccumulator, PolicyParams};
use crate::envsim::Trajectory;
use crate::error::{HplError, Result};

/// `L_BC = −(1/|D|) Σ_τ Σ_t log π(a*_t | s*_t)` and its gradient.
///
/// Per occurrence of `(s, a)` the gradient row is `π(·|s) − e_a`, averaged
/// over trajectories.
pub fn bc_loss_and_grad(
    params: &PolicyParams,
    expert: &[Trajectory],
) -> Result<(f64, GradientAccumulator)> {
    if expert.is_empty() {
        return Err(HplError::usage("behavior cloning needs at least one trajectory"));
    }
    let table = params.prob_table();
    let mut grad = GradientAccumulator::zeros_like(params);
    let weight = 1.0 / expert.len() as f64;
    let mut loss = 0.0;
    for traj in expert {
        loss -= table.sequence_log_prob(&traj.steps)? * weight;
        grad.add_segment_score(&table, &traj.steps, -weight);
        grad.sample_count += traj.steps.len();
    }
    Ok((loss, grad))
}

/// Outcome of [`bc_train`]: final parameters and the full-batch loss before
/// every epoch, followed by the final loss.
#[derive(Debug, Clone)]
pub struct BcRun {
    pub params: PolicyParams,
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent on `L_BC` with a fixed learning rate.
pub fn bc_train(
    expert: &[Trajectory],
    init: &PolicyParams,
    lr: f64,
    epochs: usize,
) -> Result<BcRun> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(HplError::usage(format!("learning rate must be positive, got {lr}")));
    }
    let mut params = init.clone();
    let mut losses = Vec::with_capacity(epochs + 1);
    for _ in 0..epochs {
        let (loss, grad) = bc_loss_and_grad(&params, expert)?;
        losses.push(loss);
        params = params.descend(&grad, lr)?;
    }
    losses.push(bc_loss_and_grad(&params, expert)?.0);
    Ok(BcRun { params, losses })
}
