use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::biasvar::{estimate_many, BiasVarResult};
use super::bounds::{k_of_epsilon, step_variance_envelope, theoretical_bounds};
use super::enumerate::AnalysisSetup;
use super::returns::Granularity;
use crate::envsim::EnvConfig;
use crate::error::{HplError, Result};
use crate::exec::Exec;

/// A group length in a grid: a fixed count or the full horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupLen {
    Fixed(usize),
    /// Written as the string `"T"`.
    Full(FullHorizon),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FullHorizon {
    T,
}

impl GroupLen {
    pub fn resolve(self, horizon: usize) -> usize {
        match self {
            GroupLen::Fixed(k) => k,
            GroupLen::Full(_) => horizon,
        }
    }
}

/// Experiment grid over `(T, γ, N)` cells, each estimating the trajectory,
/// step and group losses for every `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasVarGrid {
    pub horizons: Vec<usize>,
    pub gammas: Vec<f64>,
    pub dataset_sizes: Vec<usize>,
    pub ks: Vec<GroupLen>,
    pub beta: f64,
    pub replications: usize,
    pub seed: u64,
    /// Relative slack on the `k/T` variance ratio. Defaults to five relative
    /// standard errors of a variance estimate, `5·sqrt(2/(R−1))`.
    pub var_slack: Option<f64>,
}

impl Default for BiasVarGrid {
    fn default() -> Self {
        BiasVarGrid {
            horizons: vec![4, 8],
            gammas: vec![0.9],
            dataset_sizes: vec![100],
            ks: vec![GroupLen::Fixed(1), GroupLen::Fixed(2), GroupLen::Fixed(4), GroupLen::Full(FullHorizon::T)],
            beta: 0.3,
            replications: 2000,
            seed: 0,
            var_slack: None,
        }
    }
}

impl BiasVarGrid {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.gammas.is_empty() || self.dataset_sizes.is_empty() || self.ks.is_empty() {
            return Err(HplError::usage("bias/variance grid is empty"));
        }
        if self.replications < 2 {
            return Err(HplError::usage("at least 2 replications are required"));
        }
        Ok(())
    }

    pub fn slack(&self) -> f64 {
        self.var_slack
            .unwrap_or_else(|| 5.0 * (2.0 / (self.replications as f64 - 1.0)).sqrt())
    }
}

/// One asserted inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub cell: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, cell: &str, value: f64, limit: f64) -> Check {
        Check { name: name.into(), cell: cell.to_string(), value, limit, passed: value <= limit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub rows: Vec<BiasVarResult>,
    pub checks: Vec<Check>,
}

impl GridReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "granularity,k,N,T,gamma,beta,bias_hat,stderr_bias,var_hat,bound_bias,bound_var_ratio,\
             population_loss,expected_loss,exact_bias,sigma_hat\n",
        );
        for r in &self.rows {
            let (k, bound_bias, ratio) = match r.granularity {
                Granularity::Group { k } => {
                    let b = theoretical_bounds(k, r.horizon, r.gamma, r.beta, 1.0).expect("validated cell");
                    (k.to_string(), b.bias_bound.to_string(), b.var_ratio_bound.to_string())
                }
                Granularity::Traj => (String::new(), "0".into(), "1".into()),
                Granularity::Step => (String::new(), "0".into(), String::new()),
            };
            let _ = writeln!(
                out,
                "{},{k},{},{},{},{},{},{},{},{bound_bias},{ratio},{},{},{},{}",
                r.granularity.name(),
                r.dataset_size,
                r.horizon,
                r.gamma,
                r.beta,
                r.bias_hat,
                r.stderr_bias,
                r.var_hat,
                r.population_loss,
                r.expected_loss,
                r.exact_bias,
                r.sigma_hat,
            );
        }
        out
    }
}

/// `k(ε)` makes the theoretical bias bound at most `ε` on a parameter grid.
pub fn k_of_epsilon_checks() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for &eps in &[0.01, 0.05, 0.1, 0.25, 0.5] {
        for &gamma in &[0.5, 0.8, 0.9, 0.95, 0.99] {
            for &beta in &[0.1, 0.3, 1.0] {
                for &r_max in &[0.5, 1.0, 2.0] {
                    let k = k_of_epsilon(eps, gamma, beta, r_max)?;
                    let bound = theoretical_bounds(k, k, gamma, beta, r_max)?.bias_bound;
                    let cell = format!("eps={eps},gamma={gamma},beta={beta},r_max={r_max},k={k}");
                    checks.push(Check::at_most("k_of_epsilon_consistency", &cell, bound, eps));
                }
            }
        }
    }
    Ok(checks)
}

/// Runs every cell of the grid on the default analysis chain and checks the
/// zero-bias, bias-envelope, variance-ratio and boundedness statements.
pub fn run_grid(grid: &BiasVarGrid, exec: Exec) -> Result<GridReport> {
    grid.validate()?;
    let slack = grid.slack();
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &horizon in &grid.horizons {
        for &gamma in &grid.gammas {
            for &n in &grid.dataset_sizes {
                let cell = format!("T={horizon},gamma={gamma},N={n}");
                let wrap = |e: HplError| match e {
                    HplError::Capability(m) => HplError::Capability(format!("{cell}: {m}")),
                    HplError::Usage(m) => HplError::Usage(format!("{cell}: {m}")),
                    other => other,
                };
                let setup = AnalysisSetup::perturbed(EnvConfig::analysis_default(horizon, gamma), grid.beta, grid.seed)
                    .map_err(wrap)?;
                let mut ks: Vec<usize> = grid.ks.iter().map(|k| k.resolve(horizon)).collect();
                ks.sort_unstable();
                ks.dedup();
                let mut granularities = vec![Granularity::Traj, Granularity::Step];
                granularities.extend(ks.iter().map(|&k| Granularity::Group { k }));
                let results = estimate_many(&setup, &granularities, n, grid.replications, grid.seed, exec).map_err(wrap)?;
                let traj_var = results[0].var_hat;
                let l_max = theoretical_bounds(1, horizon, gamma, grid.beta, setup.config.r_max)
                    .map_err(wrap)?
                    .l_max;
                for r in &results {
                    let label = match r.granularity.k() {
                        Some(k) => format!("{}_k{k}", r.granularity.name()),
                        None => r.granularity.name().to_string(),
                    };
                    match r.granularity {
                        Granularity::Traj | Granularity::Step => {
                            checks.push(Check::at_most(
                                format!("zero_bias_{label}"),
                                &cell,
                                r.bias_hat.abs(),
                                3.0 * r.stderr_bias,
                            ));
                        }
                        Granularity::Group { k } => {
                            let b = theoretical_bounds(k, horizon, gamma, grid.beta, setup.config.r_max).map_err(wrap)?;
                            checks.push(Check::at_most(
                                format!("bias_envelope_{label}"),
                                &cell,
                                r.bias_hat.abs(),
                                b.bias_bound + 3.0 * r.stderr_bias,
                            ));
                            checks.push(Check::at_most(
                                format!("variance_ratio_{label}"),
                                &cell,
                                r.var_hat,
                                b.var_ratio_bound * traj_var * (1.0 + slack),
                            ));
                        }
                    }
                    if r.granularity == Granularity::Step {
                        let envelope = step_variance_envelope(n, horizon, gamma, grid.beta, setup.config.r_max);
                        checks.push(Check::at_most("step_variance_envelope", &cell, r.var_hat, envelope));
                    }
                    checks.push(Check::at_most(format!("loss_upper_{label}"), &cell, r.loss_max, l_max));
                    checks.push(Check::at_most(format!("loss_lower_{label}"), &cell, -r.loss_min, 0.0));
                }
                rows.extend(results);
            }
        }
    }
    checks.extend(k_of_epsilon_checks()?);
    Ok(GridReport { rows, checks })
}
