use super::types::ActionGroup;
use crate::envsim::{replay_prefix, EnvConfig, EnvState};
use crate::error::{HplError, Result};
use crate::policy::{sample_rollout, ProbTable};
use crate::seed;

/// Mean outcome reward of `m` reference rollouts from `state`. Rollout `j`
/// uses the stream `derive_index(seed, j)`, so two calls with the same seed
/// share their random numbers.
pub fn mc_outcome(
    reference: &ProbTable,
    config: &EnvConfig,
    state: &EnvState,
    m: usize,
    seed: u64,
) -> Result<f64> {
    if m == 0 {
        return Err(HplError::usage("Monte-Carlo estimate needs M >= 1"));
    }
    if state.done {
        return Ok(state.outcome_reward(config));
    }
    let mut total = 0.0;
    for j in 0..m {
        let mut rng = seed::rng(seed::derive_index(seed, j as u64));
        total += sample_rollout(reference, config, state, usize::MAX, &mut rng)?.outcome_reward(config);
    }
    Ok(total / m as f64)
}

/// `r̂(G)`: mean outcome of `m` reference completions after replaying the
/// group's context and its own steps.
pub fn estimate_group_reward(
    group: &ActionGroup,
    reference: &ProbTable,
    config: &EnvConfig,
    m: usize,
    seed: u64,
) -> Result<f64> {
    let state = replay_prefix(config, &group.full_prefix())?;
    mc_outcome(reference, config, &state, m, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::{reset, scripted_expert, step, subtask};
    use crate::policy::PolicyParams;
    use crate::prefgen::GroupOrigin;

    fn two_task_config() -> EnvConfig {
        EnvConfig {
            name: "two".into(),
            num_actions: 2,
            horizon: 6,
            subtasks: vec![subtask("a", &[0, 1]), subtask("b", &[1])],
            ..EnvConfig::desk_standard()
        }
    }

    /// Expected outcome by exhaustive enumeration of every completion.
    fn exact(cfg: &EnvConfig, table: &ProbTable, s: &EnvState) -> f64 {
        if s.done {
            return s.outcome_reward(cfg);
        }
        (0..cfg.num_actions)
            .map(|a| {
                let next = step(cfg, s, a).unwrap().state;
                table.probs(s.obs)[a] * exact(cfg, table, &next)
            })
            .sum()
    }

    fn group(ctx_len: usize, len: usize, cfg: &EnvConfig) -> ActionGroup {
        let e = scripted_expert(cfg, "g").unwrap();
        ActionGroup {
            source_task: "g".into(),
            span: [ctx_len, ctx_len + len - 1],
            context: e.steps[..ctx_len].to_vec(),
            steps: e.steps[ctx_len..ctx_len + len].to_vec(),
            r_hat: None,
            origin: GroupOrigin::Expert,
        }
    }

    #[test]
    fn finished_group_scores_its_outcome() {
        let cfg = two_task_config();
        let table = PolicyParams::for_env(&cfg).prob_table();
        let g = group(0, 3, &cfg);
        assert_eq!(estimate_group_reward(&g, &table, &cfg, 1, 7).unwrap(), 1.0);
        assert_eq!(estimate_group_reward(&g, &table, &cfg, 50, 8).unwrap(), 1.0);
    }

    #[test]
    fn matches_exact_enumeration() {
        let cfg = two_task_config();
        let table = PolicyParams::for_env(&cfg).prob_table();
        let g = group(0, 1, &cfg);
        let state = replay_prefix(&cfg, &g.full_prefix()).unwrap();
        let want = exact(&cfg, &table, &state);
        let got = estimate_group_reward(&g, &table, &cfg, 10_000, 11).unwrap();
        assert!((got - want).abs() < 0.02, "{got} vs {want}");
        let from_start = exact(&cfg, &table, &reset(&cfg).unwrap());
        assert!(from_start > 0.0 && from_start < 1.0);
    }

    #[test]
    fn zero_rollouts_is_an_error() {
        let cfg = two_task_config();
        let table = PolicyParams::for_env(&cfg).prob_table();
        assert!(estimate_group_reward(&group(0, 1, &cfg), &table, &cfg, 0, 1).is_err());
    }
}
