use super::config::EnvConfig;
use super::env::{reset, step};
use super::trajectory::{Step, Trajectory};
use crate::error::Result;

/// Executes every sub-task's required sequence verbatim.
///
/// The expert is deterministic: the result depends only on the configuration
/// and the task id it is labelled with.
pub fn scripted_expert(config: &EnvConfig, task_id: &str) -> Result<Trajectory> {
    let mut state = reset(config)?;
    let mut steps = Vec::with_capacity(config.expert_len());
    let mut boundaries = Vec::with_capacity(config.num_subtasks());
    for st in &config.subtasks {
        let start = steps.len();
        for &action in &st.actions {
            let t = step(config, &state, action)?;
            steps.push(Step {
                obs: state.obs,
                action,
                reward: t.reward,
            });
            state = t.state;
        }
        boundaries.push([start, steps.len() - 1]);
    }
    debug_assert!(state.done && state.success(config));
    Ok(Trajectory {
        task_id: task_id.to_string(),
        instruction: config.name.clone(),
        steps,
        outcome_reward: state.outcome_reward(config),
        subtask_boundaries: Some(boundaries),
    })
}
