use serde::{Deserialize, Serialize};

use crate::envsim::{Span, Step, Trajectory};

/// Trajectory-level pair: an expert trajectory and a worse reference rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajPair {
    /// Task instruction.
    pub u: String,
    pub winner: Trajectory,
    pub loser: Trajectory,
}

impl TrajPair {
    pub fn reward_w(&self) -> f64 {
        self.winner.outcome_reward
    }

    pub fn reward_l(&self) -> f64 {
        self.loser.outcome_reward
    }
}

/// Step-level pair sharing the expert prefix `steps[..t]`. The loser suffix
/// starts with a sampled non-expert action and records the states it visited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPair {
    pub task_id: String,
    pub t: usize,
    pub prefix: Vec<Step>,
    pub winner_suffix: Vec<Step>,
    pub loser_suffix: Vec<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupOrigin {
    Expert,
    Sampled,
}

/// A contiguous span of steps with the context that precedes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGroup {
    pub source_task: String,
    pub span: Span,
    pub context: Vec<Step>,
    pub steps: Vec<Step>,
    pub r_hat: Option<f64>,
    pub origin: GroupOrigin,
}

impl ActionGroup {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Context followed by the group's own steps.
    pub fn full_prefix(&self) -> Vec<Step> {
        let mut v = self.context.clone();
        v.extend_from_slice(&self.steps);
        v
    }
}

/// An expert group and an equal-length reference sample from the same context,
/// before Monte-Carlo scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCandidate {
    pub winner: ActionGroup,
    pub loser: ActionGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupWinner {
    pub span: Span,
    pub steps: Vec<Step>,
    pub r_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLoser {
    pub steps: Vec<Step>,
    pub r_hat: f64,
}

/// Scored group-level pair with `delta_r = winner.r_hat − loser.r_hat > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPair {
    pub task_id: String,
    pub context: Vec<Step>,
    pub winner: GroupWinner,
    pub loser: GroupLoser,
    pub delta_r: f64,
    pub length: usize,
}
