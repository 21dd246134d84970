use serde::{Deserialize, Serialize};

use crate::error::{HplError, Result};

/// Per-component multipliers on the composite objective. All 1.0 reproduces
/// the plain sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub bc: f64,
    pub traj: f64,
    pub step: f64,
    pub group: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { bc: 1.0, traj: 1.0, step: 1.0, group: 1.0 }
    }
}

/// How group pairs are fed across the three phases.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurriculumMode {
    /// Phase `s` trains on the buckets unlocked at `s`.
    #[default]
    Staged,
    /// Every phase trains on all buckets.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpoConfig {
    pub beta: f64,
    pub include_bc: bool,
    pub include_traj: bool,
    pub include_step: bool,
    pub include_group: bool,
    pub weights: LossWeights,
    pub lr: f64,
    pub seed: u64,
    /// Full-batch gradient steps in each of the three phases.
    pub phase_epochs: [usize; 3],
    pub curriculum: CurriculumMode,
    /// Replace the reference with the current policy at the start of phases
    /// 2 and 3.
    pub refreeze_reference: bool,
    /// Finite-difference check of the initial gradient on this many
    /// coordinates (0 disables it).
    pub grad_check_coords: usize,
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig {
            beta: 0.3,
            include_bc: true,
            include_traj: true,
            include_step: true,
            include_group: true,
            weights: LossWeights::default(),
            lr: 0.1,
            seed: 0,
            phase_epochs: [5, 5, 5],
            curriculum: CurriculumMode::Staged,
            refreeze_reference: false,
            grad_check_coords: 8,
        }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(HplError::config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(HplError::config(format!("lr must be non-negative, got {}", self.lr)));
        }
        if !(self.include_bc || self.include_traj || self.include_step || self.include_group) {
            return Err(HplError::config("at least one loss component must be enabled"));
        }
        let w = self.weights;
        if [w.bc, w.traj, w.step, w.group].iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(HplError::config("loss weights must be finite and non-negative"));
        }
        Ok(())
    }

    /// Only the behavior-cloning term.
    pub fn bc_only() -> Self {
        Self::only(true, false, false, false)
    }

    pub fn only(bc: bool, traj: bool, step: bool, group: bool) -> Self {
        DpoConfig {
            include_bc: bc,
            include_traj: traj,
            include_step: step,
            include_group: group,
            ..Self::default()
        }
    }
}
