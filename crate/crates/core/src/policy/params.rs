use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envsim::{EnvConfig, Step};
use crate::error::{HplError, Result};

/// Numerically stable `log softmax` of one logit row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|&x| x - lse).collect()
}

/// Logit table of a softmax policy. Serialised as `.policy.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub num_states: usize,
    pub num_actions: usize,
    pub tag: String,
    /// Row-major `[state][action]`.
    pub logits: Vec<f64>,
}

impl PolicyParams {
    /// All-zero logits: the uniform policy.
    pub fn uniform(num_states: usize, num_actions: usize, tag: &str) -> Self {
        PolicyParams {
            num_states,
            num_actions,
            tag: tag.to_string(),
            logits: vec![0.0; num_states * num_actions],
        }
    }

    pub fn for_env(config: &EnvConfig) -> Self {
        Self::uniform(config.num_states(), config.num_actions, "theta")
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_actions == 0 {
            return Err(HplError::usage("policy has no actions"));
        }
        if self.logits.len() != self.num_states * self.num_actions {
            return Err(HplError::usage(format!(
                "logit table has {} entries, expected {}×{}",
                self.logits.len(),
                self.num_states,
                self.num_actions
            )));
        }
        if let Some(i) = self.logits.iter().position(|x| !x.is_finite()) {
            return Err(HplError::usage(format!("logit {i} is not finite")));
        }
        Ok(())
    }

    /// Errors unless the table covers every observation and action of `config`.
    pub fn check_env(&self, config: &EnvConfig) -> Result<()> {
        if self.num_states != config.num_states() || self.num_actions != config.num_actions {
            return Err(HplError::usage(format!(
                "policy shape {}×{} does not match environment {}×{}",
                self.num_states,
                self.num_actions,
                config.num_states(),
                config.num_actions
            )));
        }
        Ok(())
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.num_states {
            return Err(HplError::usage(format!(
                "state {state} out of range (num_states = {})",
                self.num_states
            )));
        }
        Ok(())
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.logits[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn row_mut(&mut self, state: usize) -> &mut [f64] {
        let n = self.num_actions;
        &mut self.logits[state * n..(state + 1) * n]
    }

    pub fn log_probs(&self, state: usize) -> Result<Vec<f64>> {
        self.check_state(state)?;
        Ok(log_softmax(self.row(state)))
    }

    pub fn probs(&self, state: usize) -> Result<Vec<f64>> {
        Ok(self.log_probs(state)?.into_iter().map(f64::exp).collect())
    }

    /// `log π(action | state)`.
    pub fn action_logprob(&self, state: usize, action: usize) -> Result<f64> {
        if action >= self.num_actions {
            return Err(HplError::usage(format!(
                "action {action} out of range (num_actions = {})",
                self.num_actions
            )));
        }
        Ok(self.log_probs(state)?[action])
    }

    /// Sum of `log π(a|s)` over a non-empty segment. The segment's recorded
    /// observations are the states reached by replaying its context.
    pub fn sequence_logprob(&self, segment: &[Step]) -> Result<f64> {
        if segment.is_empty() {
            return Err(HplError::usage("sequence_logprob on an empty segment"));
        }
        segment
            .iter()
            .map(|s| self.action_logprob(s.obs, s.action))
            .sum()
    }

    /// Shannon entropy (nats) of `π(·|state)`.
    pub fn state_entropy(&self, state: usize) -> Result<f64> {
        let lp = self.log_probs(state)?;
        Ok(-lp
            .iter()
            .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { l.exp() * l })
            .sum::<f64>())
    }

    /// Deep copy tagged `"ref"`.
    pub fn freeze_reference(&self) -> PolicyParams {
        PolicyParams {
            tag: "ref".to_string(),
            ..self.clone()
        }
    }

    /// One gradient-descent step: `θ − lr · grad`.
    pub fn descend(&self, grad: &GradientAccumulator, lr: f64) -> Result<PolicyParams> {
        grad.check_shape(self)?;
        let mut next = self.clone();
        for (x, g) in next.logits.iter_mut().zip(&grad.grad) {
            *x -= lr * g;
        }
        Ok(next)
    }

    /// Precomputed `log π` and `π` for every state.
    pub fn prob_table(&self) -> ProbTable {
        let mut log_probs = Vec::with_capacity(self.logits.len());
        for s in 0..self.num_states {
            log_probs.extend(log_softmax(self.row(s)));
        }
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        ProbTable {
            num_actions: self.num_actions,
            num_states: self.num_states,
            log_probs,
            probs,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| HplError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HplError::io(path, e))?;
        let p: PolicyParams = serde_json::from_str(&text)?;
        p.validate()?;
        Ok(p)
    }
}

/// Cached per-state distributions of one parameter snapshot.
#[derive(Debug, Clone)]
pub struct ProbTable {
    num_states: usize,
    num_actions: usize,
    log_probs: Vec<f64>,
    probs: Vec<f64>,
}

impl ProbTable {
    pub fn log_prob(&self, state: usize, action: usize) -> Result<f64> {
        if state >= self.num_states || action >= self.num_actions {
            return Err(HplError::usage(format!(
                "index ({state}, {action}) out of range for {}×{} policy",
                self.num_states, self.num_actions
            )));
        }
        Ok(self.log_probs[state * self.num_actions + action])
    }

    pub fn probs(&self, state: usize) -> &[f64] {
        &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn sequence_log_prob(&self, segment: &[Step]) -> Result<f64> {
        segment.iter().map(|s| self.log_prob(s.obs, s.action)).sum()
    }
}

/// Dense `∂L/∂θ` with the same layout as [`PolicyParams::logits`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientAccumulator {
    pub num_states: usize,
    pub num_actions: usize,
    pub grad: Vec<f64>,
    pub sample_count: usize,
}

impl GradientAccumulator {
    pub fn zeros_like(params: &PolicyParams) -> Self {
        GradientAccumulator {
            num_states: params.num_states,
            num_actions: params.num_actions,
            grad: vec![0.0; params.logits.len()],
            sample_count: 0,
        }
    }

    pub fn check_shape(&self, params: &PolicyParams) -> Result<()> {
        if self.num_states != params.num_states || self.num_actions != params.num_actions {
            return Err(HplError::usage(format!(
                "gradient shape {}×{} does not match policy {}×{}",
                self.num_states, self.num_actions, params.num_states, params.num_actions
            )));
        }
        Ok(())
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.grad[state * self.num_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.grad[state * self.num_actions..(state + 1) * self.num_actions]
    }

    /// Adds `weight · ∇_θ log π(action|state)`, where the score of a softmax
    /// row is `e_action − π(·|state)`.
    pub fn add_score(&mut self, table: &ProbTable, state: usize, action: usize, weight: f64) {
        let n = self.num_actions;
        let row = &mut self.grad[state * n..(state + 1) * n];
        for (b, (g, p)) in row.iter_mut().zip(table.probs(state)).enumerate() {
            let indicator = if b == action { 1.0 } else { 0.0 };
            *g += weight * (indicator - p);
        }
    }

    pub fn add_segment_score(&mut self, table: &ProbTable, segment: &[Step], weight: f64) {
        for s in segment {
            self.add_score(table, s.obs, s.action, weight);
        }
    }

    pub fn add_scaled(&mut self, other: &GradientAccumulator, scale: f64) {
        for (g, o) in self.grad.iter_mut().zip(&other.grad) {
            *g += scale * o;
        }
        self.sample_count += other.sample_count;
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grad {
            *g *= factor;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.grad.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}
