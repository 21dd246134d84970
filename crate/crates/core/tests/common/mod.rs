#![allow(dead_code)]

use hpl_core::envsim::{reset, subtask, EnvConfig, OutcomeRegime, Step, StepRewards, Trajectory};
use hpl_core::policy::{sample_rollout, GradientAccumulator, PolicyParams};
use hpl_core::prefgen::{GroupLoser, GroupPair, GroupWinner, StepPair, TrajPair};
use hpl_core::seed::{self, Rng};
use rand::Rng as _;

/// A random chain with 1–3 sub-tasks of 1–4 actions.
pub fn random_env(seed: u64) -> EnvConfig {
    let mut rng = seed::rng(seed);
    let num_actions = rng.random_range(2..=5);
    let k = rng.random_range(1..=3);
    let subtasks: Vec<_> = (0..k)
        .map(|i| {
            let len = rng.random_range(1..=4);
            let actions: Vec<usize> = (0..len).map(|_| rng.random_range(0..num_actions)).collect();
            subtask(&format!("s{i}"), &actions)
        })
        .collect();
    let expert_len: usize = subtasks.iter().map(|s| s.actions.len()).sum();
    EnvConfig {
        name: format!("random-{seed}"),
        num_actions,
        horizon: expert_len + rng.random_range(0..=6),
        subtasks,
        gamma: rng.random_range(0.5..0.99),
        r_max: 1.0,
        rewards: StepRewards {
            advance: rng.random_range(0.0..0.3),
            complete: 1.0,
            error: rng.random_range(0.0..0.1),
        },
        outcome: if rng.random_bool(0.5) { OutcomeRegime::Graded } else { OutcomeRegime::Binary },
        ..EnvConfig::desk_standard()
    }
}

/// Logits drawn uniformly from `[-scale, scale]`.
pub fn random_policy(config: &EnvConfig, seed: u64, scale: f64, tag: &str) -> PolicyParams {
    let mut rng = seed::rng(seed);
    let mut p = PolicyParams::for_env(config);
    p.tag = tag.into();
    for x in &mut p.logits {
        *x = rng.random_range(-scale..=scale);
    }
    p
}

/// Same shape as `base`, every logit shifted by uniform noise.
pub fn perturb(base: &PolicyParams, seed: u64, scale: f64) -> PolicyParams {
    let mut rng = seed::rng(seed);
    let mut p = base.clone();
    p.tag = "theta".into();
    for x in &mut p.logits {
        *x += rng.random_range(-scale..=scale);
    }
    p
}

pub fn rollout_trajectory(config: &EnvConfig, policy: &PolicyParams, task_id: &str, seed: u64) -> Trajectory {
    let start = reset(config).unwrap();
    let mut rng = seed::rng(seed);
    let r = sample_rollout(&policy.prob_table(), config, &start, usize::MAX, &mut rng).unwrap();
    Trajectory {
        task_id: task_id.into(),
        instruction: String::new(),
        outcome_reward: r.outcome_reward(config),
        steps: r.steps,
        subtask_boundaries: None,
    }
}

/// Random non-empty step segment over the policy's table.
pub fn random_segment(rng: &mut Rng, num_states: usize, num_actions: usize, max_len: usize) -> Vec<Step> {
    let len = rng.random_range(1..=max_len);
    (0..len)
        .map(|_| Step { obs: rng.random_range(0..num_states), action: rng.random_range(0..num_actions), reward: 0.0 })
        .collect()
}

fn traj_of(steps: Vec<Step>, outcome: f64) -> Trajectory {
    Trajectory { task_id: "t".into(), instruction: "u".into(), steps, outcome_reward: outcome, subtask_boundaries: None }
}

/// Random datasets of each granularity (segments need not be feasible
/// environment paths; the losses only read observation/action indices).
pub struct RandomData {
    pub expert: Vec<Trajectory>,
    pub traj: Vec<TrajPair>,
    pub step: Vec<StepPair>,
    pub group: Vec<GroupPair>,
}

pub fn random_data(seed: u64, num_states: usize, num_actions: usize, pairs: usize) -> RandomData {
    let mut rng = seed::rng(seed);
    let seg = |rng: &mut Rng| random_segment(rng, num_states, num_actions, 6);
    let expert = (0..2).map(|_| traj_of(seg(&mut rng), 1.0)).collect();
    let traj = (0..pairs)
        .map(|_| TrajPair { u: "u".into(), winner: traj_of(seg(&mut rng), 1.0), loser: traj_of(seg(&mut rng), 0.0) })
        .collect();
    let step = (0..pairs)
        .map(|i| StepPair {
            task_id: "t".into(),
            t: i,
            prefix: vec![],
            winner_suffix: seg(&mut rng),
            loser_suffix: seg(&mut rng),
        })
        .collect();
    let group = (0..pairs)
        .map(|_| {
            let w = seg(&mut rng);
            let l = seg(&mut rng);
            let length = w.len();
            GroupPair {
                task_id: "t".into(),
                context: vec![],
                winner: GroupWinner { span: [0, length - 1], steps: w, r_hat: 1.0 },
                loser: GroupLoser { steps: l, r_hat: 0.5 },
                delta_r: 0.5,
                length,
            }
        })
        .collect();
    RandomData { expert, traj, step, group }
}

/// Rounding noise of a central difference with h = 1e-5 on an O(1) loss.
pub const FD_NOISE: f64 = 1e-9;

/// Largest relative error between an analytic gradient and central
/// differences of `loss` on the given flat coordinates.
pub fn max_rel_error(
    params: &PolicyParams,
    grad: &GradientAccumulator,
    coords: &[usize],
    h: f64,
    loss: impl Fn(&PolicyParams) -> f64,
) -> f64 {
    coords
        .iter()
        .map(|&i| {
            let mut plus = params.clone();
            plus.logits[i] += h;
            let mut minus = params.clone();
            minus.logits[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let analytic = grad.grad[i];
            if analytic == 0.0 {
                // Exact cancellation: only rounding noise is admissible.
                return if numeric.abs() <= FD_NOISE { 0.0 } else { f64::INFINITY };
            }
            (analytic - numeric).abs() / analytic.abs().max(numeric.abs())
        })
        .fold(0.0, f64::max)
}

/// Flat coordinates of every logit in the states `steps` visit.
pub fn visited_coords(steps: &[&[Step]], num_actions: usize) -> Vec<usize> {
    let mut states: Vec<usize> = steps.iter().flat_map(|s| s.iter().map(|x| x.obs)).collect();
    states.sort_unstable();
    states.dedup();
    states.iter().flat_map(|&s| (0..num_actions).map(move |a| s * num_actions + a)).collect()
}
