use serde::{Deserialize, Serialize};

use super::config::DpoConfig;
use crate::envsim::{Step, Trajectory};
use crate::error::{HplError, Result};
use crate::exec::Exec;
use crate::policy::{bc_loss_and_grad, GradientAccumulator, PolicyParams, ProbTable};
use crate::prefgen::{GroupPair, StepPair, TrajPair};

/// Logistic function, stable for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)`, stable for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// The four sequence log-probabilities of one pair and the derived margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairLogits {
    pub theta_w: f64,
    pub ref_w: f64,
    pub theta_l: f64,
    pub ref_l: f64,
    pub delta_theta: f64,
    /// `β · Δ_θ`.
    pub margin: f64,
}

impl PairLogits {
    /// `−log σ(β Δ_θ)`.
    pub fn loss(&self) -> f64 {
        softplus(-self.margin)
    }

    /// `∂loss/∂Δ_θ = −β σ(−β Δ_θ)`.
    pub fn dloss_ddelta(&self, beta: f64) -> f64 {
        -beta * sigmoid(-self.margin)
    }
}

pub fn pair_logits(
    theta: &ProbTable,
    reference: &ProbTable,
    winner: &[Step],
    loser: &[Step],
    beta: f64,
) -> Result<PairLogits> {
    if winner.is_empty() || loser.is_empty() {
        return Err(HplError::usage("preference pair with an empty segment"));
    }
    let theta_w = theta.sequence_log_prob(winner)?;
    let ref_w = reference.sequence_log_prob(winner)?;
    let theta_l = theta.sequence_log_prob(loser)?;
    let ref_l = reference.sequence_log_prob(loser)?;
    let delta_theta = (theta_w - ref_w) - (theta_l - ref_l);
    Ok(PairLogits { theta_w, ref_w, theta_l, ref_l, delta_theta, margin: beta * delta_theta })
}

/// Loss and gradient of a single pair.
pub fn dpo_pair_loss(
    theta: &PolicyParams,
    reference: &PolicyParams,
    winner: &[Step],
    loser: &[Step],
    beta: f64,
) -> Result<(f64, GradientAccumulator)> {
    let table = theta.prob_table();
    let pl = pair_logits(&table, &reference.prob_table(), winner, loser, beta)?;
    let mut grad = GradientAccumulator::zeros_like(theta);
    let c = pl.dloss_ddelta(beta);
    grad.add_segment_score(&table, winner, c);
    grad.add_segment_score(&table, loser, -c);
    grad.sample_count = 1;
    Ok((pl.loss(), grad))
}

/// Mean pair loss over `segments` with its gradient. Pair terms are computed
/// in parallel and reduced in index order.
fn mean_dpo(
    theta: &PolicyParams,
    reference: &ProbTable,
    segments: &[(&[Step], &[Step])],
    beta: f64,
    exec: Exec,
    label: &str,
) -> Result<(f64, GradientAccumulator)> {
    let mut grad = GradientAccumulator::zeros_like(theta);
    if segments.is_empty() {
        log::debug!("{label} loss evaluated on an empty dataset");
        return Ok((0.0, grad));
    }
    let table = theta.prob_table();
    let logits = exec.try_map(segments, |_, &(w, l)| pair_logits(&table, reference, w, l, beta))?;
    let scale = 1.0 / segments.len() as f64;
    let mut loss = 0.0;
    for (pl, &(w, l)) in logits.iter().zip(segments) {
        loss += pl.loss();
        let c = pl.dloss_ddelta(beta) * scale;
        grad.add_segment_score(&table, w, c);
        grad.add_segment_score(&table, l, -c);
    }
    grad.sample_count = segments.len();
    Ok((loss * scale, grad))
}

/// Whole trajectories scored from the initial state.
pub fn loss_traj(
    theta: &PolicyParams,
    reference: &PolicyParams,
    data: &[TrajPair],
    beta: f64,
    exec: Exec,
) -> Result<(f64, GradientAccumulator)> {
    let segs: Vec<_> = data.iter().map(|p| (&p.winner.steps[..], &p.loser.steps[..])).collect();
    mean_dpo(theta, &reference.prob_table(), &segs, beta, exec, "trajectory")
}

/// Suffixes after the shared prefix; the prefix contributes no terms.
pub fn loss_step(
    theta: &PolicyParams,
    reference: &PolicyParams,
    data: &[StepPair],
    beta: f64,
    exec: Exec,
) -> Result<(f64, GradientAccumulator)> {
    let segs: Vec<_> = data.iter().map(|p| (&p.winner_suffix[..], &p.loser_suffix[..])).collect();
    mean_dpo(theta, &reference.prob_table(), &segs, beta, exec, "step")
}

/// Paired groups given their shared context.
pub fn loss_group(
    theta: &PolicyParams,
    reference: &PolicyParams,
    data: &[GroupPair],
    beta: f64,
    exec: Exec,
) -> Result<(f64, GradientAccumulator)> {
    let segs: Vec<_> = data.iter().map(|p| (&p.winner.steps[..], &p.loser.steps[..])).collect();
    mean_dpo(theta, &reference.prob_table(), &segs, beta, exec, "group")
}

/// Training data for the composite objective. `group` holds the pairs active
/// in the current phase.
#[derive(Debug, Clone, Copy)]
pub struct HplDatasets<'a> {
    pub expert: &'a [Trajectory],
    pub traj: &'a [TrajPair],
    pub step: &'a [StepPair],
    pub group: &'a [GroupPair],
}

/// Component values of the composite loss; disabled components are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub bc: Option<f64>,
    pub traj: Option<f64>,
    pub step: Option<f64>,
    pub group: Option<f64>,
}

/// Weighted sum of the enabled components and of their gradients.
pub fn loss_hpl(
    theta: &PolicyParams,
    reference: &PolicyParams,
    data: &HplDatasets<'_>,
    config: &DpoConfig,
    exec: Exec,
) -> Result<(LossBreakdown, GradientAccumulator)> {
    config.validate()?;
    let active = [
        (config.include_bc, data.expert.is_empty()),
        (config.include_traj, data.traj.is_empty()),
        (config.include_step, data.step.is_empty()),
        (config.include_group, data.group.is_empty()),
    ];
    if active.iter().all(|&(on, empty)| !on || empty) {
        return Err(HplError::usage("every enabled loss component has an empty dataset"));
    }
    let mut out = LossBreakdown::default();
    let mut grad = GradientAccumulator::zeros_like(theta);
    let w = config.weights;
    if config.include_bc {
        if data.expert.is_empty() {
            log::debug!("behavior-cloning term enabled with no expert data");
            out.bc = Some(0.0);
        } else {
            let (l, g) = bc_loss_and_grad(theta, data.expert)?;
            out.total += w.bc * l;
            grad.add_scaled(&g, w.bc);
            out.bc = Some(l);
        }
    }
    let reference = reference.prob_table();
    let traj: Vec<_> = data.traj.iter().map(|p| (&p.winner.steps[..], &p.loser.steps[..])).collect();
    let step: Vec<_> = data.step.iter().map(|p| (&p.winner_suffix[..], &p.loser_suffix[..])).collect();
    let group: Vec<_> = data.group.iter().map(|p| (&p.winner.steps[..], &p.loser.steps[..])).collect();
    for (on, weight, segs, label, slot) in [
        (config.include_traj, w.traj, &traj, "trajectory", &mut out.traj),
        (config.include_step, w.step, &step, "step", &mut out.step),
        (config.include_group, w.group, &group, "group", &mut out.group),
    ] {
        if !on {
            continue;
        }
        let (l, g) = mean_dpo(theta, &reference, segs, config.beta, exec, label)?;
        out.total += weight * l;
        grad.add_scaled(&g, weight);
        *slot = Some(l);
    }
    Ok((out, grad))
}
