use serde::{Deserialize, Serialize};

use crate::dpo::sigmoid;
use crate::envsim::{optimal_values, EnvConfig, EnvState, Step, ValueTable};
use crate::error::Result;

/// Discount, reward bound and the exact optimal value function of an
/// enumerable environment.
#[derive(Debug, Clone)]
pub struct ReturnSpec {
    pub gamma: f64,
    pub r_max: f64,
    pub values: ValueTable,
}

impl ReturnSpec {
    pub fn for_env(config: &EnvConfig) -> Result<Self> {
        Ok(ReturnSpec {
            gamma: config.gamma,
            r_max: config.r_max,
            values: optimal_values(config)?,
        })
    }

    /// `V*` at a time-indexed state; zero once the episode is over.
    pub fn value(&self, state: &EnvState) -> f64 {
        self.values.value(state)
    }
}

/// `Σ γ^i r_i + γ^|u| V*(end)` for a segment whose replay ends in `end`.
pub fn discounted_return(segment: &[Step], end: &EnvState, spec: &ReturnSpec) -> f64 {
    let rewards: Vec<f64> = segment.iter().map(|s| s.reward).collect();
    bootstrapped_return(&rewards, end, spec)
}

pub(crate) fn bootstrapped_return(rewards: &[f64], end: &EnvState, spec: &ReturnSpec) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        total += discount * r;
        discount *= spec.gamma;
    }
    total + discount * spec.value(end)
}

/// Bradley-Terry preference probability `σ(β Δ*)`.
pub fn bradley_terry_prob(delta_star: f64, beta: f64) -> f64 {
    sigmoid(beta * delta_star)
}

/// Which comparison unit an estimator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "granularity", rename_all = "lowercase")]
pub enum Granularity {
    /// Whole trajectories.
    Traj,
    /// Every suffix of the trajectory.
    Step,
    /// Non-overlapping groups of `k` steps.
    Group { k: usize },
}

impl Granularity {
    pub fn name(&self) -> &'static str {
        match self {
            Granularity::Traj => "traj",
            Granularity::Step => "step",
            Granularity::Group { .. } => "group",
        }
    }

    pub fn k(&self) -> Option<usize> {
        match self {
            Granularity::Group { k } => Some(*k),
            _ => None,
        }
    }

    /// Pairs extracted per trajectory of horizon `horizon`.
    pub fn pairs_per_trajectory(&self, horizon: usize) -> usize {
        match self {
            Granularity::Traj => 1,
            Granularity::Step => horizon,
            Granularity::Group { k } => horizon / k,
        }
    }

    /// Start times and unit lengths of the pairs taken from one trajectory.
    /// Suffix units run to the horizon.
    pub fn units(&self, horizon: usize) -> Vec<(usize, usize)> {
        match self {
            Granularity::Traj => vec![(0, horizon)],
            Granularity::Step => (0..horizon).map(|t| (t, horizon - t)).collect(),
            Granularity::Group { k } => (0..horizon / k).map(|i| (i * k, *k)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::{replay_prefix, reset, step, subtask, StepRewards};

    fn chain3() -> EnvConfig {
        EnvConfig {
            name: "chain3".into(),
            num_actions: 2,
            horizon: 6,
            subtasks: vec![subtask("go", &[1, 1, 1])],
            gamma: 0.9,
            r_max: 1.0,
            rewards: StepRewards::default(),
            ..EnvConfig::analysis_default(6, 0.9)
        }
    }

    fn run(config: &EnvConfig, actions: &[usize]) -> (Vec<Step>, EnvState) {
        let mut s = reset(config).unwrap();
        let mut steps = vec![];
        for &a in actions {
            let tr = step(config, &s, a).unwrap();
            steps.push(Step { obs: s.obs, action: a, reward: tr.reward });
            s = tr.state;
        }
        (steps, s)
    }

    #[test]
    fn zero_reward_segment_is_discounted_value() {
        let c = chain3();
        let spec = ReturnSpec::for_env(&c).unwrap();
        let (steps, end) = run(&c, &[1, 1]);
        let expected = 0.81 * spec.value(&end);
        assert!((discounted_return(&steps, &end, &spec) - expected).abs() < 1e-15);
    }

    #[test]
    fn full_success_is_single_discounted_reward() {
        let c = chain3();
        let spec = ReturnSpec::for_env(&c).unwrap();
        let (steps, end) = run(&c, &[1, 1, 1]);
        assert!(end.done);
        assert!((discounted_return(&steps, &end, &spec) - 0.81).abs() < 1e-15);
    }

    #[test]
    fn random_segments_match_direct_summation() {
        let c = EnvConfig::analysis_default(8, 0.5);
        let spec = ReturnSpec::for_env(&c).unwrap();
        for code in 0u32..256 {
            let actions: Vec<usize> = (0..8).map(|i| ((code >> i) & 1) as usize).collect();
            let mut s = reset(&c).unwrap();
            let mut steps = vec![];
            for &a in &actions {
                if s.done {
                    break;
                }
                let tr = step(&c, &s, a).unwrap();
                steps.push(Step { obs: s.obs, action: a, reward: tr.reward });
                s = tr.state;
            }
            for start in 0..steps.len() {
                for end in start..=steps.len() {
                    let seg = &steps[start..end];
                    let end_state = replay_prefix(&c, &steps[..end]).unwrap();
                    let mut direct = 0.0;
                    for (i, st) in seg.iter().enumerate() {
                        direct += 0.5f64.powi(i as i32) * st.reward;
                    }
                    direct += 0.5f64.powi(seg.len() as i32) * spec.value(&end_state);
                    assert!((discounted_return(seg, &end_state, &spec) - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bradley_terry_values() {
        assert_eq!(bradley_terry_prob(0.0, 0.3), 0.5);
        assert!(bradley_terry_prob(1e6, 0.3) > 1.0 - 1e-12);
        let direct = 1.0 / (1.0 + (-0.3f64).exp());
        assert!((bradley_terry_prob(1.0, 0.3) - direct).abs() < 1e-15);
        assert!((bradley_terry_prob(1.0, 0.3) - 0.574_442_516_811_659_9).abs() < 1e-15);
    }

    #[test]
    fn units_tile_the_horizon() {
        assert_eq!(Granularity::Traj.units(8), vec![(0, 8)]);
        assert_eq!(Granularity::Step.units(3), vec![(0, 3), (1, 2), (2, 1)]);
        assert_eq!(Granularity::Group { k: 3 }.units(8), vec![(0, 3), (3, 3)]);
        assert_eq!(Granularity::Group { k: 3 }.pairs_per_trajectory(8), 2);
    }
}
