use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};

use super::returns::{Granularity, ReturnSpec};
use crate::dpo::softplus;
use crate::envsim::{reset, step, EnvConfig, EnvState};
use crate::error::{HplError, Result};
use crate::policy::{PolicyParams, ProbTable};
use crate::seed;

/// Largest number of action sequences enumerated per policy.
pub const MAX_ENUMERABLE_TRAJECTORIES: u64 = 1_000_000;

/// Standard deviation of the reference logits drawn by [`AnalysisSetup::perturbed`].
pub const REF_LOGIT_SCALE: f64 = 0.5;
/// Standard deviation of the perturbation separating θ from the reference.
pub const THETA_NOISE: f64 = 0.1;

/// An enumerable environment together with the two policies of a pair model.
///
/// Pairs start from a shared state. The winner continues under θ and the
/// loser under the reference, and each unit is scored by its bootstrapped
/// discounted return.
#[derive(Debug, Clone)]
pub struct AnalysisSetup {
    pub config: EnvConfig,
    pub spec: ReturnSpec,
    pub theta: PolicyParams,
    pub reference: PolicyParams,
    pub beta: f64,
    theta_table: ProbTable,
    ref_table: ProbTable,
}

impl AnalysisSetup {
    pub fn new(config: EnvConfig, theta: PolicyParams, reference: PolicyParams, beta: f64) -> Result<Self> {
        config.validate()?;
        theta.check_env(&config)?;
        reference.check_env(&config)?;
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(HplError::usage(format!("beta must be non-negative, got {beta}")));
        }
        let count = (config.num_actions as u64).checked_pow(config.horizon as u32);
        if count.is_none_or(|c| c > MAX_ENUMERABLE_TRAJECTORIES) {
            return Err(HplError::Capability(format!(
                "{} actions over horizon {} exceed {MAX_ENUMERABLE_TRAJECTORIES} enumerable trajectories",
                config.num_actions, config.horizon
            )));
        }
        let spec = ReturnSpec::for_env(&config)?;
        Ok(AnalysisSetup {
            theta_table: theta.prob_table(),
            ref_table: reference.prob_table(),
            config,
            spec,
            theta,
            reference,
            beta,
        })
    }

    /// Reference logits `~ N(0, 0.5²)` and θ = reference + `N(0, 0.1²)`.
    pub fn perturbed(config: EnvConfig, beta: f64, seed: u64) -> Result<Self> {
        let mut rng = seed::rng(seed::derive(seed, "policies"));
        let ref_noise = Normal::new(0.0, REF_LOGIT_SCALE).expect("positive scale");
        let theta_noise = Normal::new(0.0, THETA_NOISE).expect("positive scale");
        let mut reference = PolicyParams::for_env(&config);
        reference.tag = "ref".into();
        for x in &mut reference.logits {
            *x = ref_noise.sample(&mut rng);
        }
        let mut theta = reference.clone();
        theta.tag = "theta".into();
        for x in &mut theta.logits {
            *x += theta_noise.sample(&mut rng);
        }
        Self::new(config, theta, reference, beta)
    }

    pub(crate) fn theta_table(&self) -> &ProbTable {
        &self.theta_table
    }

    pub(crate) fn ref_table(&self) -> &ProbTable {
        &self.ref_table
    }

    /// Per-pair loss `−log σ(β Δ)` for a return gap `Δ`.
    pub fn pair_loss(&self, delta: f64) -> f64 {
        softplus(-self.beta * delta)
    }
}

fn state_key(s: &EnvState) -> (usize, usize, usize, usize, bool) {
    (s.steps_elapsed, s.completed_subtasks, s.offset, s.obs, s.done)
}

/// Distribution of the state reached after `t` steps under `table`, with
/// finished episodes absorbing.
fn state_distribution(table: &ProbTable, config: &EnvConfig, t: usize) -> Result<Vec<(EnvState, f64)>> {
    let mut current = vec![(reset(config)?, 1.0)];
    for _ in 0..t {
        let mut next: BTreeMap<_, (EnvState, f64)> = BTreeMap::new();
        for (s, p) in current {
            if s.done {
                next.entry(state_key(&s)).or_insert((s, 0.0)).1 += p;
                continue;
            }
            for (a, &pa) in table.probs(s.obs).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                let tr = step(config, &s, a)?;
                next.entry(state_key(&tr.state)).or_insert((tr.state, 0.0)).1 += p * pa;
            }
        }
        current = next.into_values().collect();
    }
    Ok(current)
}

/// Every `len`-step continuation from `start` as `(probability, return)`,
/// the return bootstrapped with `V*` at the end state.
fn return_distribution(
    table: &ProbTable,
    setup: &AnalysisSetup,
    start: &EnvState,
    len: usize,
) -> Result<Vec<(f64, f64)>> {
    let gamma = setup.spec.gamma;
    // (probability, accumulated discounted reward, state)
    let mut frontier = vec![(1.0, 0.0, *start)];
    let mut discount = 1.0;
    for _ in 0..len {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for (p, acc, s) in frontier {
            if s.done {
                next.push((p, acc, s));
                continue;
            }
            for (a, &pa) in table.probs(s.obs).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                let tr = step(&setup.config, &s, a)?;
                next.push((p * pa, acc + discount * tr.reward, tr.state));
            }
        }
        frontier = next;
        discount *= gamma;
    }
    Ok(frontier
        .into_iter()
        .map(|(p, acc, s)| (p, acc + discount * setup.spec.value(&s)))
        .collect())
}

/// Expected pair loss over the start states at time `t`, with both units
/// running `len` steps.
fn expected_pair_loss(setup: &AnalysisSetup, t: usize, len: usize) -> Result<f64> {
    let mut total = 0.0;
    for (s, ps) in state_distribution(setup.theta_table(), &setup.config, t)? {
        let w = return_distribution(setup.theta_table(), setup, &s, len)?;
        let l = return_distribution(setup.ref_table(), setup, &s, len)?;
        let mut inner = 0.0;
        for &(pw, rw) in &w {
            for &(pl, rl) in &l {
                inner += pw * pl * setup.pair_loss(rw - rl);
            }
        }
        total += ps * inner;
    }
    Ok(total)
}

fn check_granularity(granularity: Granularity, horizon: usize) -> Result<()> {
    match granularity {
        Granularity::Group { k } if k == 0 || k > horizon => {
            Err(HplError::usage(format!("group length {k} must lie in 1..={horizon}")))
        }
        _ => Ok(()),
    }
}

/// Exact population loss `−E_μ log σ(β Δ*)`, where `Δ*` is the gap between
/// the full discounted continuations of the two units from their common
/// start state.
pub fn population_loss(setup: &AnalysisSetup, granularity: Granularity) -> Result<f64> {
    let horizon = setup.config.horizon;
    check_granularity(granularity, horizon)?;
    let units = granularity.units(horizon);
    let mut total = 0.0;
    for &(t, _) in &units {
        total += expected_pair_loss(setup, t, horizon - t)?;
    }
    Ok(total / units.len() as f64)
}

/// Exact expectation of the empirical loss, each unit scored by its own
/// bootstrapped return over the unit length.
pub fn expected_loss(setup: &AnalysisSetup, granularity: Granularity) -> Result<f64> {
    let horizon = setup.config.horizon;
    check_granularity(granularity, horizon)?;
    let units = granularity.units(horizon);
    let mut total = 0.0;
    for &(t, len) in &units {
        total += expected_pair_loss(setup, t, len)?;
    }
    Ok(total / units.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::{subtask, StepRewards};

    fn loop_env() -> EnvConfig {
        EnvConfig {
            name: "loop".into(),
            num_actions: 2,
            horizon: 2,
            subtasks: vec![subtask("go", &[1])],
            gamma: 0.9,
            r_max: 1.0,
            rewards: StepRewards::default(),
            ..EnvConfig::analysis_default(2, 0.9)
        }
    }

    fn policy(rows: &[[f64; 2]], tag: &str) -> PolicyParams {
        PolicyParams {
            num_states: rows.len(),
            num_actions: 2,
            tag: tag.into(),
            logits: rows.iter().flatten().copied().collect(),
        }
    }

    #[test]
    fn two_step_loop_matches_hand_enumeration() {
        let c = loop_env();
        let theta = policy(&[[0.3, -0.2], [0.0, 0.0]], "theta");
        let reference = policy(&[[-0.4, 0.5], [0.0, 0.0]], "ref");
        let beta = 0.7;
        let setup = AnalysisSetup::new(c, theta.clone(), reference.clone(), beta).unwrap();
        let pt = theta.probs(0).unwrap();
        let pr = reference.probs(0).unwrap();
        // Return of an action pair: success on the first step pays 1, on the
        // second pays γ; actions after success are inert.
        let ret = |a1: usize, a2: usize| {
            if a1 == 1 {
                1.0
            } else if a2 == 1 {
                0.9
            } else {
                0.0
            }
        };
        let mut hand = 0.0;
        let mut terms = 0;
        for w1 in 0..2 {
            for w2 in 0..2 {
                for l1 in 0..2 {
                    for l2 in 0..2 {
                        let p = pt[w1] * pt[w2] * pr[l1] * pr[l2];
                        let delta = ret(w1, w2) - ret(l1, l2);
                        hand += p * (1.0 + (-beta * delta).exp()).ln();
                        terms += 1;
                    }
                }
            }
        }
        assert_eq!(terms, 16);
        let got = population_loss(&setup, Granularity::Traj).unwrap();
        assert!((got - hand).abs() < 1e-12, "{got} vs {hand}");
    }

    #[test]
    fn zero_beta_gives_log_two() {
        let c = EnvConfig::analysis_default(4, 0.9);
        let setup = AnalysisSetup::perturbed(c, 0.0, 3).unwrap();
        for g in [Granularity::Traj, Granularity::Step, Granularity::Group { k: 1 }, Granularity::Group { k: 3 }] {
            assert!((population_loss(&setup, g).unwrap() - 2f64.ln()).abs() < 1e-12);
            assert!((expected_loss(&setup, g).unwrap() - 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn untruncated_units_have_no_bias() {
        let setup = AnalysisSetup::perturbed(EnvConfig::analysis_default(6, 0.9), 0.3, 1).unwrap();
        for g in [Granularity::Traj, Granularity::Step, Granularity::Group { k: 6 }] {
            let diff = expected_loss(&setup, g).unwrap() - population_loss(&setup, g).unwrap();
            assert!(diff.abs() < 1e-12);
        }
        let traj = population_loss(&setup, Granularity::Traj).unwrap();
        let full = expected_loss(&setup, Granularity::Group { k: 6 }).unwrap();
        assert!((traj - full).abs() < 1e-12);
    }

    #[test]
    fn group_bias_respects_envelope() {
        let setup = AnalysisSetup::perturbed(EnvConfig::analysis_default(8, 0.5), 0.3, 2).unwrap();
        for k in 1..=8 {
            let g = Granularity::Group { k };
            let bias = expected_loss(&setup, g).unwrap() - population_loss(&setup, g).unwrap();
            let bound = super::super::theoretical_bounds(k, 8, 0.5, 0.3, 1.0).unwrap().bias_bound;
            assert!(bias.abs() <= bound, "k={k}: {bias} > {bound}");
        }
    }

    #[test]
    fn oversized_space_is_a_capability_error() {
        let mut c = EnvConfig::analysis_default(8, 0.9);
        c.horizon = 21;
        let err = AnalysisSetup::perturbed(c, 0.3, 0).unwrap_err();
        assert!(matches!(err, HplError::Capability(_)));
    }

    #[test]
    fn invalid_group_length_is_rejected() {
        let setup = AnalysisSetup::perturbed(EnvConfig::analysis_default(4, 0.9), 0.3, 0).unwrap();
        assert!(population_loss(&setup, Granularity::Group { k: 5 }).is_err());
        assert!(expected_loss(&setup, Granularity::Group { k: 0 }).is_err());
    }
}
