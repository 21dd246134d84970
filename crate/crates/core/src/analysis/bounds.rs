use serde::{Deserialize, Serialize};

use crate::error::{HplError, Result};

/// Closed-form constants of the group-level bias/variance trade-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalBounds {
    /// `2 β R_max γ^k / (1 − γ)`.
    pub bias_bound: f64,
    /// `k / T`.
    pub var_ratio_bound: f64,
    /// `log(1 + exp(2 β R_max / (1 − γ)))`, the largest per-pair loss.
    pub l_max: f64,
}

fn check_params(gamma: f64, beta: f64, r_max: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(HplError::usage(format!("gamma must lie in (0,1), got {gamma}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(HplError::usage(format!("beta must be positive, got {beta}")));
    }
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(HplError::usage(format!("r_max must be positive, got {r_max}")));
    }
    Ok(())
}

/// Smallest group length whose truncation bias is at most `epsilon`:
/// `⌈log_γ((1 − γ) ε / (2 β R_max))⌉`, never below 1.
pub fn k_of_epsilon(epsilon: f64, gamma: f64, beta: f64, r_max: f64) -> Result<usize> {
    check_params(gamma, beta, r_max)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(HplError::usage(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    let arg = (1.0 - gamma) * epsilon / (2.0 * beta * r_max);
    if arg >= 1.0 {
        return Ok(1);
    }
    let exact = arg.ln() / gamma.ln();
    let nearest = exact.round();
    let k = if (exact - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        exact.ceil()
    };
    Ok((k as usize).max(1))
}

/// Bias bound, variance ratio and loss ceiling for group length `k` on
/// horizon `horizon`.
pub fn theoretical_bounds(
    k: usize,
    horizon: usize,
    gamma: f64,
    beta: f64,
    r_max: f64,
) -> Result<TheoreticalBounds> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(HplError::usage(format!("gamma must lie in [0,1), got {gamma}")));
    }
    if k == 0 || k > horizon {
        return Err(HplError::usage(format!("group length {k} must lie in 1..={horizon}")));
    }
    let scale = 2.0 * beta * r_max / (1.0 - gamma);
    Ok(TheoreticalBounds {
        bias_bound: scale * gamma.powi(k as i32),
        var_ratio_bound: k as f64 / horizon as f64,
        l_max: super::softplus(scale),
    })
}

/// Upper envelope `(1 + 2γ/(1 − γ)²) L_max² / (N T)` on the variance of the
/// step-level loss.
pub fn step_variance_envelope(n: usize, horizon: usize, gamma: f64, beta: f64, r_max: f64) -> f64 {
    let l_max = super::softplus(2.0 * beta * r_max / (1.0 - gamma));
    (1.0 + 2.0 * gamma / (1.0 - gamma).powi(2)) * l_max * l_max / (n * horizon) as f64
}
