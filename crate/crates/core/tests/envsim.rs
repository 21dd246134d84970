mod common;

use std::collections::{HashSet, VecDeque};

use hpl_core::envsim::{bellman_residual, optimal_values, replay_prefix, reset, scripted_expert, step, EnvConfig};
use hpl_core::envsim::{read_jsonl, write_jsonl, Trajectory};
use proptest::prelude::*;

use common::{random_env, random_policy, rollout_trajectory};

/// Fewest steps from the initial state to success, ignoring the horizon.
fn bfs_success_distance(config: &EnvConfig) -> usize {
    let mut start = reset(config).unwrap();
    start.steps_elapsed = 0;
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([(start, 0usize)]);
    let mut unbounded = config.clone();
    unbounded.horizon = usize::MAX;
    while let Some((s, d)) = queue.pop_front() {
        if s.success(config) {
            return d;
        }
        if !seen.insert((s.obs, s.completed_subtasks, s.offset)) {
            continue;
        }
        for a in 0..config.num_actions {
            let mut next = step(&unbounded, &s, a).unwrap().state;
            next.steps_elapsed = 0;
            queue.push_back((next, d + 1));
        }
    }
    unreachable!("every chain is solvable")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rollouts_are_deterministic_and_rewards_bounded(env_seed in any::<u64>(), seed in any::<u64>()) {
        let config = random_env(env_seed);
        let policy = random_policy(&config, env_seed ^ 1, 2.0, "p");
        let a = rollout_trajectory(&config, &policy, "t", seed);
        let b = rollout_trajectory(&config, &policy, "t", seed);
        prop_assert_eq!(&a, &b);
        for s in &a.steps {
            prop_assert!((0.0..=config.r_max).contains(&s.reward));
        }
        prop_assert!((0.0..=1.0).contains(&a.outcome_reward));
        prop_assert!(a.len() <= config.horizon);
    }

    #[test]
    fn replay_reproduces_outcome(env_seed in any::<u64>(), seed in any::<u64>()) {
        let config = random_env(env_seed);
        let policy = random_policy(&config, env_seed ^ 2, 1.0, "p");
        let traj = rollout_trajectory(&config, &policy, "t", seed);
        let end = replay_prefix(&config, &traj.steps).unwrap();
        prop_assert_eq!(end.outcome_reward(&config), traj.outcome_reward);
    }

    #[test]
    fn expert_is_successful_and_shortest(env_seed in any::<u64>()) {
        let config = random_env(env_seed);
        let expert = scripted_expert(&config, "task").unwrap();
        prop_assert_eq!(expert.outcome_reward, 1.0);
        prop_assert_eq!(expert.len(), bfs_success_distance(&config));
        prop_assert_eq!(&expert, &scripted_expert(&config, "task").unwrap());
    }

    #[test]
    fn optimal_values_satisfy_bellman(env_seed in any::<u64>()) {
        let config = random_env(env_seed);
        let v = optimal_values(&config).unwrap();
        prop_assert!(bellman_residual(&config, &v).unwrap() <= 1e-10);
    }
}

#[test]
fn trajectories_round_trip_through_jsonl() {
    let config = EnvConfig::desk_standard();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("expert.jsonl");
    let trajs: Vec<Trajectory> = (0..3).map(|i| scripted_expert(&config, &format!("t{i}")).unwrap()).collect();
    write_jsonl(&path, &trajs).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    let back: Vec<Trajectory> = read_jsonl(&path).unwrap();
    assert_eq!(back, trajs);
}
