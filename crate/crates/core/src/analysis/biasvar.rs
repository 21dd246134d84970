use serde::{Deserialize, Serialize};

use super::enumerate::{expected_loss, population_loss, AnalysisSetup};
use super::returns::{bootstrapped_return, Granularity};
use crate::envsim::{reset, step, EnvState};
use crate::error::{HplError, Result};
use crate::exec::Exec;
use crate::policy::{sample_action, ProbTable};
use crate::seed::{self, Rng};

/// Replicated estimate of the bias and variance of one empirical loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVarResult {
    pub granularity: Granularity,
    pub horizon: usize,
    pub gamma: f64,
    pub beta: f64,
    /// Trajectories per dataset.
    pub dataset_size: usize,
    pub replications: usize,
    pub population_loss: f64,
    /// Exact expectation of the empirical loss.
    pub expected_loss: f64,
    /// `expected_loss − population_loss`.
    pub exact_bias: f64,
    /// Mean empirical loss over replications.
    pub mean_loss: f64,
    pub bias_hat: f64,
    pub stderr_bias: f64,
    /// Sample variance of the empirical loss across replications.
    pub var_hat: f64,
    /// Variance of a single pair loss, pooled over every sampled pair.
    pub sigma_hat: f64,
    pub loss_min: f64,
    pub loss_max: f64,
}

/// A horizon-length trajectory with finished episodes padded by absorbing
/// zero-reward steps.
struct Path {
    states: Vec<EnvState>,
    rewards: Vec<f64>,
}

impl Path {
    fn sample(table: &ProbTable, setup: &AnalysisSetup, start: EnvState, len: usize, rng: &mut Rng) -> Result<Path> {
        let mut states = Vec::with_capacity(len + 1);
        let mut rewards = Vec::with_capacity(len);
        let mut s = start;
        states.push(s);
        for _ in 0..len {
            if s.done {
                rewards.push(0.0);
            } else {
                let a = sample_action(table.probs(s.obs), rng);
                let tr = step(&setup.config, &s, a)?;
                rewards.push(tr.reward);
                s = tr.state;
            }
            states.push(s);
        }
        Ok(Path { states, rewards })
    }

    fn unit_return(&self, from: usize, len: usize, setup: &AnalysisSetup) -> f64 {
        bootstrapped_return(&self.rewards[from..from + len], &self.states[from + len], &setup.spec)
    }
}

/// Pair losses of one trajectory for each requested granularity.
///
/// The loser starting at time `t` always draws from the stream
/// `derive_index(unit_seed, t + 1)`, so a shorter loser is a prefix of a
/// longer one and the pairs of one granularity do not depend on which
/// others are computed alongside.
fn trajectory_losses(setup: &AnalysisSetup, granularities: &[Granularity], unit_seed: u64) -> Result<Vec<Vec<f64>>> {
    let horizon = setup.config.horizon;
    let mut rng = seed::rng(seed::derive_index(unit_seed, 0));
    let winner = Path::sample(setup.theta_table(), setup, reset(&setup.config)?, horizon, &mut rng)?;
    let mut loser_len = vec![0usize; horizon];
    let unit_lists: Vec<Vec<(usize, usize)>> = granularities.iter().map(|g| g.units(horizon)).collect();
    for &(t, len) in unit_lists.iter().flatten() {
        loser_len[t] = loser_len[t].max(len);
    }
    let mut losers: Vec<Option<Path>> = Vec::with_capacity(horizon);
    for (t, &len) in loser_len.iter().enumerate() {
        if len == 0 {
            losers.push(None);
            continue;
        }
        let mut rng = seed::rng(seed::derive_index(unit_seed, t as u64 + 1));
        losers.push(Some(Path::sample(setup.ref_table(), setup, winner.states[t], len, &mut rng)?));
    }
    Ok(unit_lists
        .iter()
        .map(|units| {
            units
                .iter()
                .map(|&(t, len)| {
                    let loser = losers[t].as_ref().expect("loser sampled for every unit start");
                    setup.pair_loss(winner.unit_return(t, len, setup) - loser.unit_return(0, len, setup))
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    mean: f64,
    sum: f64,
    sum_sq: f64,
    count: usize,
    min: f64,
    max: f64,
}

/// Runs `replications` independent datasets of `n` trajectories and
/// summarises each requested granularity. Replication `r` uses the stream
/// `derive_index(seed, r)`; results are reduced in replication order.
pub fn estimate_many(
    setup: &AnalysisSetup,
    granularities: &[Granularity],
    n: usize,
    replications: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<BiasVarResult>> {
    if n == 0 {
        return Err(HplError::usage("dataset size must be at least 1"));
    }
    if replications < 2 {
        return Err(HplError::usage(format!("at least 2 replications are required, got {replications}")));
    }
    if granularities.is_empty() {
        return Err(HplError::usage("no granularity requested"));
    }
    let mut targets = Vec::with_capacity(granularities.len());
    for &g in granularities {
        targets.push((population_loss(setup, g)?, expected_loss(setup, g)?));
    }
    let per_rep: Vec<Result<Vec<Moments>>> = exec.map_range(replications, |r| {
        let rep_seed = seed::derive_index(seed, r as u64);
        let mut acc: Vec<Moments> = granularities
            .iter()
            .map(|_| Moments { mean: 0.0, sum: 0.0, sum_sq: 0.0, count: 0, min: f64::INFINITY, max: f64::NEG_INFINITY })
            .collect();
        for j in 0..n {
            let losses = trajectory_losses(setup, granularities, seed::derive_index(rep_seed, j as u64))?;
            for (m, ls) in acc.iter_mut().zip(&losses) {
                for &l in ls {
                    m.sum += l;
                    m.sum_sq += l * l;
                    m.count += 1;
                    m.min = m.min.min(l);
                    m.max = m.max.max(l);
                }
            }
        }
        for m in &mut acc {
            m.mean = m.sum / m.count as f64;
        }
        Ok(acc)
    });
    let per_rep: Vec<Vec<Moments>> = per_rep.into_iter().collect::<Result<_>>()?;
    let rf = replications as f64;
    Ok(granularities
        .iter()
        .enumerate()
        .map(|(gi, &granularity)| {
            let means: Vec<f64> = per_rep.iter().map(|rep| rep[gi].mean).collect();
            let mean_loss = means.iter().sum::<f64>() / rf;
            let var_hat = means.iter().map(|m| (m - mean_loss).powi(2)).sum::<f64>() / (rf - 1.0);
            let (sum, sum_sq, count) = per_rep.iter().fold((0.0, 0.0, 0usize), |(s, q, c), rep| {
                (s + rep[gi].sum, q + rep[gi].sum_sq, c + rep[gi].count)
            });
            let pooled_mean = sum / count as f64;
            let sigma_hat = ((sum_sq - count as f64 * pooled_mean * pooled_mean) / (count as f64 - 1.0)).max(0.0);
            let (population, expected) = targets[gi];
            BiasVarResult {
                granularity,
                horizon: setup.config.horizon,
                gamma: setup.spec.gamma,
                beta: setup.beta,
                dataset_size: n,
                replications,
                population_loss: population,
                expected_loss: expected,
                exact_bias: expected - population,
                mean_loss,
                bias_hat: mean_loss - population,
                stderr_bias: (var_hat / rf).sqrt(),
                var_hat,
                sigma_hat,
                loss_min: per_rep.iter().map(|rep| rep[gi].min).fold(f64::INFINITY, f64::min),
                loss_max: per_rep.iter().map(|rep| rep[gi].max).fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

/// Single-granularity form of [`estimate_many`].
pub fn estimate_bias_variance(
    setup: &AnalysisSetup,
    granularity: Granularity,
    n: usize,
    replications: usize,
    seed: u64,
    exec: Exec,
) -> Result<BiasVarResult> {
    Ok(estimate_many(setup, &[granularity], n, replications, seed, exec)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::EnvConfig;

    #[test]
    fn joint_and_single_estimates_agree() {
        let setup = AnalysisSetup::perturbed(EnvConfig::analysis_default(6, 0.9), 0.3, 4).unwrap();
        let gs = [Granularity::Traj, Granularity::Step, Granularity::Group { k: 2 }];
        let joint = estimate_many(&setup, &gs, 8, 20, 11, Exec::Sequential).unwrap();
        for (g, j) in gs.iter().zip(&joint) {
            let single = estimate_bias_variance(&setup, *g, 8, 20, 11, Exec::Sequential).unwrap();
            assert_eq!(&single, j);
        }
    }

    #[test]
    fn full_length_group_replays_the_trajectory_pairs() {
        let setup = AnalysisSetup::perturbed(EnvConfig::analysis_default(6, 0.9), 0.3, 4).unwrap();
        let r = estimate_many(&setup, &[Granularity::Traj, Granularity::Group { k: 6 }], 10, 30, 5, Exec::Sequential).unwrap();
        assert_eq!(r[0].mean_loss, r[1].mean_loss);
        assert_eq!(r[0].var_hat, r[1].var_hat);
    }

    #[test]
    fn parallel_matches_sequential() {
        let setup = AnalysisSetup::perturbed(EnvConfig::analysis_default(4, 0.5), 0.3, 9).unwrap();
        let a = estimate_bias_variance(&setup, Granularity::Step, 5, 16, 1, Exec::Sequential).unwrap();
        let b = estimate_bias_variance(&setup, Granularity::Step, 5, 16, 1, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_degenerate_designs() {
        let setup = AnalysisSetup::perturbed(EnvConfig::analysis_default(4, 0.5), 0.3, 9).unwrap();
        assert!(estimate_bias_variance(&setup, Granularity::Traj, 5, 1, 1, Exec::Sequential).is_err());
        assert!(estimate_bias_variance(&setup, Granularity::Traj, 0, 4, 1, Exec::Sequential).is_err());
    }
}
