use super::config::EnvConfig;
use super::env::{step, EnvState};
use crate::error::{HplError, Result};

/// Upper bound on `(horizon + 1) × num_states` for exact dynamic programming.
pub const MAX_ENUMERABLE_STATES: usize = 100_000;

/// Finite-horizon optimal values `V*_t(obs)`, indexed by elapsed steps and
/// observation id. Done states (success or horizon) have value 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    horizon: usize,
    num_obs: usize,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn value(&self, state: &EnvState) -> f64 {
        if state.done || state.steps_elapsed >= self.horizon {
            return 0.0;
        }
        self.values[state.steps_elapsed * self.num_obs + state.obs]
    }

    pub fn at(&self, steps_elapsed: usize, obs: usize) -> f64 {
        if steps_elapsed >= self.horizon {
            return 0.0;
        }
        self.values[steps_elapsed * self.num_obs + obs]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

fn state_at(config: &EnvConfig, t: usize, obs: usize) -> EnvState {
    let (completed, offset) = config.locate(obs);
    EnvState {
        obs,
        completed_subtasks: completed,
        offset,
        steps_elapsed: t,
        done: completed == config.num_subtasks() || t >= config.horizon,
    }
}

/// Backward induction over the time-indexed state space.
pub fn optimal_values(config: &EnvConfig) -> Result<ValueTable> {
    config.validate()?;
    let num_obs = config.num_states();
    let total = (config.horizon + 1) * num_obs;
    if total > MAX_ENUMERABLE_STATES {
        return Err(HplError::Capability(format!(
            "{total} time-indexed states exceed the enumeration limit {MAX_ENUMERABLE_STATES}"
        )));
    }
    let horizon = config.horizon;
    let mut values = vec![0.0; (horizon + 1) * num_obs];
    for t in (0..horizon).rev() {
        for obs in 0..num_obs {
            let s = state_at(config, t, obs);
            if s.done {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for a in 0..config.num_actions {
                let tr = step(config, &s, a)?;
                let next = if tr.done {
                    0.0
                } else {
                    values[(t + 1) * num_obs + tr.state.obs]
                };
                best = best.max(tr.reward + config.gamma * next);
            }
            values[t * num_obs + obs] = best;
        }
    }
    values.truncate(horizon * num_obs);
    Ok(ValueTable {
        horizon,
        num_obs,
        values,
    })
}

/// Largest `|V(s) − max_a [r(s,a) + γ V(s')]|` over all non-terminal states.
pub fn bellman_residual(config: &EnvConfig, table: &ValueTable) -> Result<f64> {
    let mut worst = 0.0f64;
    for t in 0..config.horizon {
        for obs in 0..config.num_states() {
            let s = state_at(config, t, obs);
            if s.done {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for a in 0..config.num_actions {
                let tr = step(config, &s, a)?;
                best = best.max(tr.reward + config.gamma * table.value(&tr.state));
            }
            worst = worst.max((table.value(&s) - best).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::subtask;
    use crate::envsim::{reset, StepRewards};

    /// Best discounted return over every action sequence, by brute force.
    fn brute_force_best(config: &EnvConfig, s: &EnvState) -> f64 {
        if s.done {
            return 0.0;
        }
        (0..config.num_actions)
            .map(|a| {
                let tr = step(config, s, a).unwrap();
                tr.reward + config.gamma * brute_force_best(config, &tr.state)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn deterministic_chain_values_are_discount_powers() {
        // One sub-task of length 5 with reward 1 on the final transition.
        // From progress position p the goal is d = 5 - p transitions away and
        // the reward arrives on the last of them, so V* = γ^(d-1).
        let c = EnvConfig {
            subtasks: vec![subtask("walk", &[1, 1, 1, 1, 1])],
            num_actions: 2,
            horizon: 30,
            gamma: 0.9,
            ..EnvConfig::analysis_default(30, 0.9)
        };
        let v = optimal_values(&c).unwrap();
        for p in 0..5 {
            let d = 5 - p;
            assert!((v.at(0, p) - 0.9f64.powi(d as i32 - 1)).abs() < 1e-15);
        }
    }

    #[test]
    fn terminal_states_have_zero_value() {
        let c = EnvConfig::desk_standard();
        let v = optimal_values(&c).unwrap();
        let mut s = reset(&c).unwrap();
        s.done = true;
        assert_eq!(v.value(&s), 0.0);
        assert_eq!(v.at(c.horizon, 0), 0.0);
    }

    #[test]
    fn two_state_loop_matches_exhaustive_enumeration() {
        // One single-action sub-task: a start state that loops on errors and
        // the success state.
        let c = EnvConfig {
            name: "loop".into(),
            num_actions: 2,
            horizon: 9,
            subtasks: vec![subtask("go", &[1])],
            gamma: 0.7,
            r_max: 1.0,
            rewards: StepRewards {
                advance: 0.0,
                complete: 1.0,
                error: 0.3,
            },
            ..EnvConfig::desk_standard()
        };
        let v = optimal_values(&c).unwrap();
        let mut s = reset(&c).unwrap();
        for t in 0..c.horizon {
            s.steps_elapsed = t;
            assert!((v.value(&s) - brute_force_best(&c, &s)).abs() < 1e-12);
        }
    }

    #[test]
    fn desk_chain_matches_brute_force_at_late_times() {
        let c = EnvConfig::desk_standard();
        let v = optimal_values(&c).unwrap();
        for obs in 0..c.num_states() - 1 {
            for t in c.horizon - 5..c.horizon {
                let s = state_at(&c, t, obs);
                assert!((v.value(&s) - brute_force_best(&c, &s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn residual_is_tiny() {
        for c in [EnvConfig::desk_standard(), EnvConfig::analysis_default(8, 0.5)] {
            let v = optimal_values(&c).unwrap();
            assert!(bellman_residual(&c, &v).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn oversized_state_space_is_a_capability_error() {
        let mut c = EnvConfig::desk_standard();
        c.subtasks = vec![subtask("long", &vec![0; 400])];
        c.horizon = 400;
        assert!(matches!(optimal_values(&c), Err(HplError::Capability(_))));
    }
}
