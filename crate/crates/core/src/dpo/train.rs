use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::{CurriculumMode, DpoConfig};
use super::loss::{loss_hpl, HplDatasets, LossBreakdown};
use crate::curriculum::{phase_dataset, CurriculumMatrix};
use crate::envsim::Trajectory;
use crate::error::Result;
use crate::exec::Exec;
use crate::policy::PolicyParams;
use crate::prefgen::{StepPair, TrajPair};

/// Inputs to [`train_hpl`]. Group pairs come from the matrix phase by phase.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub expert: &'a [Trajectory],
    pub traj: &'a [TrajPair],
    pub step: &'a [StepPair],
    pub matrix: &'a CurriculumMatrix,
}

/// Loss components before one gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: usize,
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: usize,
    pub epochs: usize,
    pub group_pairs: usize,
    /// Loss after the phase's last step, on that phase's data.
    pub end_loss: LossBreakdown,
}

/// Finite-difference check of the composite gradient at the initial policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub coords: Vec<(usize, usize)>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: DpoConfig,
    pub records: Vec<EpochRecord>,
    pub phases: Vec<PhaseReport>,
    pub grad_check: Option<GradCheck>,
    #[serde(skip)]
    pub final_params: Option<PolicyParams>,
    /// Parameters at the end of each phase.
    #[serde(skip)]
    pub phase_params: Vec<PolicyParams>,
}

impl TrainReport {
    /// Per-epoch loss table.
    pub fn to_csv(&self) -> String {
        let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from("phase,epoch,loss_total,loss_bc,loss_traj,loss_step,loss_group\n");
        for r in &self.records {
            let l = &r.loss;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.phase,
                r.epoch,
                l.total,
                cell(l.bc),
                cell(l.traj),
                cell(l.step),
                cell(l.group)
            );
        }
        out
    }
}

/// Central differences of the composite loss on the `n` coordinates with the
/// largest analytic gradient.
pub fn gradient_check(
    theta: &PolicyParams,
    reference: &PolicyParams,
    data: &HplDatasets<'_>,
    config: &DpoConfig,
    n: usize,
    h: f64,
) -> Result<GradCheck> {
    let (_, grad) = loss_hpl(theta, reference, data, config, Exec::Sequential)?;
    let mut order: Vec<usize> = (0..grad.grad.len()).collect();
    order.sort_by(|&a, &b| grad.grad[b].abs().total_cmp(&grad.grad[a].abs()).then(a.cmp(&b)));
    order.truncate(n);
    let mut check = GradCheck { coords: vec![], analytic: vec![], numeric: vec![], max_rel_error: 0.0 };
    for i in order {
        let mut plus = theta.clone();
        plus.logits[i] += h;
        let mut minus = theta.clone();
        minus.logits[i] -= h;
        let lp = loss_hpl(&plus, reference, data, config, Exec::Sequential)?.0.total;
        let lm = loss_hpl(&minus, reference, data, config, Exec::Sequential)?.0.total;
        let numeric = (lp - lm) / (2.0 * h);
        let analytic = grad.grad[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        check.max_rel_error = check.max_rel_error.max(rel);
        check.coords.push((i / theta.num_actions, i % theta.num_actions));
        check.analytic.push(analytic);
        check.numeric.push(numeric);
    }
    Ok(check)
}

fn has_data(sets: &HplDatasets<'_>, config: &DpoConfig) -> bool {
    (config.include_bc && !sets.expert.is_empty())
        || (config.include_traj && !sets.traj.is_empty())
        || (config.include_step && !sets.step.is_empty())
        || (config.include_group && !sets.group.is_empty())
}

/// Three curriculum phases of full-batch gradient descent on the composite
/// objective. The reference policy is never modified; with
/// `refreeze_reference` a fresh copy of the current policy replaces it at
/// each later phase.
pub fn train_hpl(
    init: &PolicyParams,
    reference: &PolicyParams,
    data: TrainData<'_>,
    config: &DpoConfig,
    exec: Exec,
) -> Result<TrainReport> {
    config.validate()?;
    let mut theta = init.clone();
    let mut current_ref = reference.clone();
    let mut report = TrainReport {
        config: config.clone(),
        records: Vec::new(),
        phases: Vec::new(),
        grad_check: None,
        final_params: None,
        phase_params: Vec::new(),
    };
    for phase in 1..=3 {
        let group = match config.curriculum {
            CurriculumMode::Staged => phase_dataset(data.matrix, phase)?,
            CurriculumMode::Static => phase_dataset(data.matrix, 3)?,
        };
        let sets = HplDatasets { expert: data.expert, traj: data.traj, step: data.step, group: &group };
        if phase > 1 && config.refreeze_reference {
            current_ref = theta.freeze_reference();
        }
        if !has_data(&sets, config) {
            log::warn!("phase {phase} has no data for any enabled component; skipped");
            report.phases.push(PhaseReport {
                phase,
                epochs: 0,
                group_pairs: 0,
                end_loss: LossBreakdown::default(),
            });
            report.phase_params.push(theta.clone());
            continue;
        }
        if report.grad_check.is_none() && config.grad_check_coords > 0 {
            report.grad_check =
                Some(gradient_check(&theta, &current_ref, &sets, config, config.grad_check_coords, 1e-5)?);
        }
        let epochs = config.phase_epochs[phase - 1];
        for epoch in 0..epochs {
            let (loss, grad) = loss_hpl(&theta, &current_ref, &sets, config, exec)?;
            report.records.push(EpochRecord { phase, epoch, loss });
            theta = theta.descend(&grad, config.lr)?;
        }
        let (end_loss, _) = loss_hpl(&theta, &current_ref, &sets, config, exec)?;
        log::info!("phase {phase}: {} group pairs, end loss {:.6}", group.len(), end_loss.total);
        report.phases.push(PhaseReport { phase, epochs, group_pairs: group.len(), end_loss });
        report.phase_params.push(theta.clone());
    }
    report.final_params = Some(theta);
    Ok(report)
}
