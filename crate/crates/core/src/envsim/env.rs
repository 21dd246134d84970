use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use super::trajectory::Step;
use crate::error::{HplError, Result};

/// Full environment state. `obs` is what policies condition on; the
/// remaining fields make the state Markov for the finite horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvState {
    pub obs: usize,
    pub completed_subtasks: usize,
    /// Progress inside the current sub-task.
    pub offset: usize,
    pub steps_elapsed: usize,
    pub done: bool,
}

impl EnvState {
    pub fn success(&self, config: &EnvConfig) -> bool {
        self.completed_subtasks == config.num_subtasks()
    }

    pub fn outcome_reward(&self, config: &EnvConfig) -> f64 {
        config.outcome_reward(self.completed_subtasks)
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// Initial state of the chain. Transitions are deterministic, so the
/// initial state depends only on the configuration.
pub fn reset(config: &EnvConfig) -> Result<EnvState> {
    config.validate()?;
    Ok(EnvState {
        obs: 0,
        completed_subtasks: 0,
        offset: 0,
        steps_elapsed: 0,
        done: false,
    })
}

/// Applies `action` to `state`. A correct action advances progress; a wrong
/// one resets progress to the start of the current sub-task. Both consume a
/// step.
pub fn step(config: &EnvConfig, state: &EnvState, action: usize) -> Result<Transition> {
    if state.done {
        return Err(HplError::usage("step called on a finished episode"));
    }
    if action >= config.num_actions {
        return Err(HplError::usage(format!(
            "action {action} out of range (num_actions = {})",
            config.num_actions
        )));
    }
    let current = config.subtasks.get(state.completed_subtasks).ok_or_else(|| {
        HplError::usage(format!(
            "state claims {} completed sub-tasks but is not done",
            state.completed_subtasks
        ))
    })?;
    let mut next = *state;
    next.steps_elapsed += 1;
    let reward = if current.actions[state.offset] == action {
        next.offset += 1;
        if next.offset == current.actions.len() {
            next.completed_subtasks += 1;
            next.offset = 0;
            config.rewards.complete
        } else {
            config.rewards.advance
        }
    } else {
        next.offset = 0;
        config.rewards.error
    };
    next.obs = config.obs_of(next.completed_subtasks, next.offset);
    next.done = next.success(config) || next.steps_elapsed >= config.horizon;
    Ok(Transition {
        state: next,
        reward,
        done: next.done,
    })
}

/// Re-simulates a step prefix from the initial state.
///
/// Recorded observations must agree with the replay; a mismatch means the
/// steps were not produced by this configuration.
pub fn replay_prefix(config: &EnvConfig, steps: &[Step]) -> Result<EnvState> {
    let mut state = reset(config)?;
    for (i, s) in steps.iter().enumerate() {
        if s.obs != state.obs {
            return Err(HplError::usage(format!(
                "step {i} records observation {} but replay is at {}",
                s.obs, state.obs
            )));
        }
        state = step(config, &state, s.action)
            .map_err(|e| HplError::usage(format!("replay failed at step {i}: {e}")))?
            .state;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::subtask;
    use crate::envsim::{scripted_expert, StepRewards};

    fn two_subtasks() -> EnvConfig {
        EnvConfig {
            name: "two".into(),
            num_actions: 3,
            horizon: 6,
            subtasks: vec![subtask("a", &[0, 1]), subtask("b", &[2, 0])],
            gamma: 0.9,
            r_max: 1.0,
            rewards: StepRewards {
                advance: 0.25,
                complete: 1.0,
                error: 0.0,
            },
            ..EnvConfig::desk_standard()
        }
    }

    #[test]
    fn reset_is_initial_and_deterministic() {
        let c = EnvConfig::desk_standard();
        let a = reset(&c).unwrap();
        assert_eq!(a.completed_subtasks, 0);
        assert_eq!(a.steps_elapsed, 0);
        assert_eq!(a, reset(&c).unwrap());
        let mut bad = c.clone();
        bad.horizon = 0;
        assert!(matches!(reset(&bad), Err(HplError::Config(_))));
    }

    #[test]
    fn correct_action_advances_within_subtask() {
        let c = EnvConfig::desk_standard();
        let s0 = reset(&c).unwrap();
        let t = step(&c, &s0, 0).unwrap();
        assert_eq!(t.state.offset, 1);
        assert_eq!(t.state.completed_subtasks, 0);
        assert_eq!(t.state.obs, 1);
        assert!(!t.done);
    }

    #[test]
    fn horizon_exhaustion_ends_episode() {
        let c = EnvConfig::desk_standard();
        let mut s = reset(&c).unwrap();
        s.steps_elapsed = c.horizon - 1;
        for a in 0..c.num_actions {
            assert!(step(&c, &s, a).unwrap().done);
        }
    }

    #[test]
    fn done_state_and_bad_action_are_usage_errors() {
        let c = EnvConfig::desk_standard();
        let mut s = reset(&c).unwrap();
        assert!(matches!(step(&c, &s, 99), Err(HplError::Usage(_))));
        s.done = true;
        assert!(matches!(step(&c, &s, 0), Err(HplError::Usage(_))));
    }

    /// Exhaustive check of the reset-on-error rule: from every reachable
    /// progress position and every action, the successor is either the next
    /// position (expert action) or the start of the current sub-task.
    #[test]
    fn reset_on_error_exhaustive() {
        let c = two_subtasks();
        for completed in 0..2 {
            for offset in 0..2 {
                for steps_elapsed in 0..c.horizon {
                    let s = EnvState {
                        obs: c.obs_of(completed, offset),
                        completed_subtasks: completed,
                        offset,
                        steps_elapsed,
                        done: false,
                    };
                    for a in 0..c.num_actions {
                        let t = step(&c, &s, a).unwrap();
                        assert_eq!(t.state.steps_elapsed, steps_elapsed + 1);
                        let required = c.subtasks[completed].actions[offset];
                        if a == required {
                            if offset == 1 {
                                assert_eq!(t.state.completed_subtasks, completed + 1);
                                assert_eq!(t.state.offset, 0);
                                assert_eq!(t.reward, 1.0);
                            } else {
                                assert_eq!(t.state.offset, 1);
                                assert_eq!(t.reward, 0.25);
                            }
                        } else {
                            assert_eq!(t.state.completed_subtasks, completed);
                            assert_eq!(t.state.offset, 0);
                            assert_eq!(t.state.obs, c.obs_of(completed, 0));
                            assert_eq!(t.reward, 0.0);
                        }
                        let expect_done = t.state.completed_subtasks == 2
                            || steps_elapsed + 1 == c.horizon;
                        assert_eq!(t.done, expect_done);
                    }
                }
            }
        }
    }

    #[test]
    fn replay_empty_prefix_is_initial_state() {
        let c = EnvConfig::desk_standard();
        assert_eq!(replay_prefix(&c, &[]).unwrap(), reset(&c).unwrap());
    }

    #[test]
    fn replay_full_expert_reproduces_outcome() {
        let c = EnvConfig::desk_standard();
        let t = scripted_expert(&c, "task-0").unwrap();
        let s = replay_prefix(&c, &t.steps).unwrap();
        assert!(s.done);
        assert_eq!(s.outcome_reward(&c), t.outcome_reward);
        assert_eq!(s.outcome_reward(&c), 1.0);
    }

    #[test]
    fn replay_partial_prefix_matches_stepwise_application() {
        // "find" is a length-3 sub-task; two correct actions leave it in progress.
        let c = EnvConfig::desk_standard();
        let t = scripted_expert(&c, "task-0").unwrap();
        let s = replay_prefix(&c, &t.steps[..2]).unwrap();
        assert_eq!(s.completed_subtasks, 0);
        assert_eq!(s.offset, 2);
        let mut manual = reset(&c).unwrap();
        for st in &t.steps[..2] {
            manual = step(&c, &manual, st.action).unwrap().state;
        }
        assert_eq!(s, manual);
    }

    #[test]
    fn replay_rejects_out_of_range_action() {
        let c = EnvConfig::desk_standard();
        let steps = [Step {
            obs: 0,
            action: 42,
            reward: 0.0,
        }];
        assert!(matches!(replay_prefix(&c, &steps), Err(HplError::Usage(_))));
    }
}
