//! Policy evaluation by repeated episodes on the environment.

use serde::{Deserialize, Serialize};

use crate::envsim::{reset, step, EnvConfig};
use crate::error::{HplError, Result};
use crate::exec::Exec;
use crate::policy::{greedy_action, sample_action, PolicyParams};
use crate::seed;

/// How actions are chosen during evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decode {
    /// Draw from `π(·|s)`.
    #[default]
    Sample,
    /// Argmax with the environment's tie-break rule.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskRate {
    pub name: String,
    /// Fraction of episodes that completed this sub-task.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_outcome: f64,
    pub success_rate: f64,
    pub per_subtask: Vec<SubtaskRate>,
    pub seed: u64,
    pub decode: Decode,
}

/// Runs `episodes` independent episodes; episode `i` uses the stream
/// `derive_index(seed, i)`.
pub fn evaluate(
    params: &PolicyParams,
    config: &EnvConfig,
    episodes: usize,
    seed: u64,
    decode: Decode,
    exec: Exec,
) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(HplError::usage("evaluation needs at least one episode"));
    }
    params.check_env(config)?;
    let table = params.prob_table();
    let start = reset(config)?;
    let completed = exec.map_range(episodes, |i| -> Result<usize> {
        let mut rng = seed::rng(seed::derive_index(seed, i as u64));
        let mut state = start;
        while !state.done {
            let probs = table.probs(state.obs);
            let action = match decode {
                Decode::Sample => sample_action(probs, &mut rng),
                Decode::Greedy => greedy_action(probs, config.tie_break, &mut rng),
            };
            state = step(config, &state, action)?.state;
        }
        Ok(state.completed_subtasks)
    });
    let completed: Vec<usize> = completed.into_iter().collect::<Result<_>>()?;
    let n = episodes as f64;
    let k = config.num_subtasks();
    let per_subtask = config
        .subtasks
        .iter()
        .enumerate()
        .map(|(j, st)| SubtaskRate {
            name: st.name.clone(),
            rate: completed.iter().filter(|&&c| c > j).count() as f64 / n,
        })
        .collect();
    Ok(EvalSummary {
        episodes,
        mean_outcome: completed.iter().map(|&c| config.outcome_reward(c)).sum::<f64>() / n,
        success_rate: completed.iter().filter(|&&c| c == k).count() as f64 / n,
        per_subtask,
        seed,
        decode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::scripted_expert;
    use crate::policy::bc_train;

    #[test]
    fn expert_clone_always_succeeds() {
        let cfg = EnvConfig::desk_standard();
        let e = scripted_expert(&cfg, "e").unwrap();
        let run = bc_train(&[e], &PolicyParams::for_env(&cfg), 5.0, 200).unwrap();
        for decode in [Decode::Greedy, Decode::Sample] {
            let s = evaluate(&run.params, &cfg, 50, 3, decode, Exec::Sequential).unwrap();
            assert!(s.success_rate > 0.9, "{decode:?}: {}", s.success_rate);
            assert!(s.per_subtask.windows(2).all(|w| w[0].rate >= w[1].rate));
        }
    }

    #[test]
    fn uniform_policy_rarely_finishes_long_chain() {
        let cfg = EnvConfig::desk_standard();
        let s = evaluate(&PolicyParams::for_env(&cfg), &cfg, 200, 1, Decode::Sample, Exec::Sequential)
            .unwrap();
        assert!(s.success_rate < 0.05);
        assert_eq!(s.per_subtask.len(), 4);
        assert!(s.mean_outcome >= s.success_rate);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let cfg = EnvConfig::desk_standard();
        let p = PolicyParams::for_env(&cfg);
        let a = evaluate(&p, &cfg, 64, 9, Decode::Sample, Exec::Sequential).unwrap();
        let b = evaluate(&p, &cfg, 64, 9, Decode::Sample, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
