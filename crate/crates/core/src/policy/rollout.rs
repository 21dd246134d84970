use rand::Rng as _;

use super::params::ProbTable;
use crate::envsim::{step, EnvConfig, EnvState, Step, TieBreak};
use crate::error::{HplError, Result};
use crate::seed::Rng;

/// Inverse-CDF draw from a probability row. Zero-probability actions are
/// never returned.
pub fn sample_action(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = a;
            cum += p;
            if u < cum {
                return a;
            }
        }
    }
    last_positive
}

/// Argmax with the configured tie-break rule.
pub fn greedy_action(probs: &[f64], tie_break: TieBreak, rng: &mut Rng) -> usize {
    let best = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..probs.len()).filter(|&a| probs[a] == best).collect();
    match tie_break {
        TieBreak::LowestIndex => tied[0],
        TieBreak::Seeded if tied.len() == 1 => tied[0],
        TieBreak::Seeded => tied[rng.random_range(0..tied.len())],
    }
}

/// Steps produced by a policy from some start state, and where they ended.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub steps: Vec<Step>,
    pub end: EnvState,
}

impl Rollout {
    pub fn outcome_reward(&self, config: &EnvConfig) -> f64 {
        self.end.outcome_reward(config)
    }
}

/// Samples actions from the policy at each visited state until the episode
/// ends or `max_len` steps have been taken.
pub fn sample_rollout(
    policy: &ProbTable,
    config: &EnvConfig,
    start: &EnvState,
    max_len: usize,
    rng: &mut Rng,
) -> Result<Rollout> {
    if start.done {
        return Err(HplError::usage("rollout requested from a finished episode"));
    }
    let mut state = *start;
    let mut steps = Vec::new();
    while !state.done && steps.len() < max_len {
        let action = sample_action(policy.probs(state.obs), rng);
        let t = step(config, &state, action)?;
        steps.push(Step {
            obs: state.obs,
            action,
            reward: t.reward,
        });
        state = t.state;
    }
    Ok(Rollout { steps, end: state })
}
