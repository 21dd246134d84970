use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HplError, Result};

/// One sub-task: a name and the exact action sequence that completes it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskSpec {
    pub name: String,
    pub actions: Vec<usize>,
}

/// How the final outcome reward is computed from completed sub-tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeRegime {
    /// `completed / K`, like a shopping-style partial score.
    #[default]
    Graded,
    /// 1 on full completion, 0 otherwise.
    Binary,
}

/// Tie-breaking rule for argmax decisions over equal logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
    /// Uniformly among the tied actions, using the caller's RNG.
    Seeded,
}

/// Per-step rewards by transition class. Each value lies in `[0, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRewards {
    /// Correct action that does not finish the sub-task.
    pub advance: f64,
    /// Correct action that finishes the sub-task.
    pub complete: f64,
    /// Wrong action (progress reset).
    pub error: f64,
}

impl Default for StepRewards {
    fn default() -> Self {
        StepRewards {
            advance: 0.0,
            complete: 1.0,
            error: 0.0,
        }
    }
}

/// A sub-task chain environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub name: String,
    pub num_actions: usize,
    /// Maximum number of steps per episode.
    pub horizon: usize,
    pub subtasks: Vec<SubtaskSpec>,
    pub gamma: f64,
    pub r_max: f64,
    pub rewards: StepRewards,
    pub outcome: OutcomeRegime,
    pub tie_break: TieBreak,
}

impl EnvConfig {
    /// Checks every invariant and names the first one violated.
    pub fn validate(&self) -> Result<()> {
        if self.num_actions == 0 {
            return Err(HplError::config("num_actions must be at least 1"));
        }
        if self.subtasks.is_empty() {
            return Err(HplError::config("at least one sub-task is required"));
        }
        for (i, st) in self.subtasks.iter().enumerate() {
            if st.actions.is_empty() {
                return Err(HplError::config(format!(
                    "sub-task {i} ({}) has an empty action sequence",
                    st.name
                )));
            }
            if let Some(&a) = st.actions.iter().find(|&&a| a >= self.num_actions) {
                return Err(HplError::config(format!(
                    "sub-task {i} ({}) uses action {a} >= num_actions {}",
                    st.name, self.num_actions
                )));
            }
        }
        let expert_len = self.expert_len();
        if self.horizon < expert_len {
            return Err(HplError::config(format!(
                "horizon T={} is shorter than the expert length {expert_len}",
                self.horizon
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(HplError::config(format!(
                "gamma must lie in [0,1), got {}",
                self.gamma
            )));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(HplError::config(format!(
                "r_max must be positive and finite, got {}",
                self.r_max
            )));
        }
        for (label, r) in [
            ("advance", self.rewards.advance),
            ("complete", self.rewards.complete),
            ("error", self.rewards.error),
        ] {
            if !(0.0..=self.r_max).contains(&r) {
                return Err(HplError::config(format!(
                    "{label} reward {r} is outside [0, r_max={}]",
                    self.r_max
                )));
            }
        }
        Ok(())
    }

    pub fn num_subtasks(&self) -> usize {
        self.subtasks.len()
    }

    /// Sum of sub-task sequence lengths: the minimal successful episode length.
    pub fn expert_len(&self) -> usize {
        self.subtasks.iter().map(|s| s.actions.len()).sum()
    }

    /// Number of observation ids: every progress position plus the success id.
    pub fn num_states(&self) -> usize {
        self.expert_len() + 1
    }

    /// Observation id of the success state.
    pub fn success_obs(&self) -> usize {
        self.expert_len()
    }

    /// Observation id for `offset` steps into sub-task `subtask`.
    pub fn obs_of(&self, subtask: usize, offset: usize) -> usize {
        if subtask >= self.subtasks.len() {
            return self.success_obs();
        }
        let start: usize = self.subtasks[..subtask].iter().map(|s| s.actions.len()).sum();
        start + offset
    }

    /// Inverse of [`EnvConfig::obs_of`].
    pub fn locate(&self, obs: usize) -> (usize, usize) {
        let mut rest = obs;
        for (i, st) in self.subtasks.iter().enumerate() {
            if rest < st.actions.len() {
                return (i, rest);
            }
            rest -= st.actions.len();
        }
        (self.subtasks.len(), 0)
    }

    /// Expert action at observation `obs`, or `None` at the success state.
    pub fn expert_action(&self, obs: usize) -> Option<usize> {
        let (i, off) = self.locate(obs);
        self.subtasks.get(i).map(|st| st.actions[off])
    }

    pub fn outcome_reward(&self, completed: usize) -> f64 {
        let k = self.num_subtasks();
        match self.outcome {
            OutcomeRegime::Graded => completed as f64 / k as f64,
            OutcomeRegime::Binary => {
                if completed == k {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Standard desk-scale chain: 4 sub-tasks, 6 actions, horizon 24.
    pub fn desk_standard() -> Self {
        EnvConfig {
            name: "desk-chain-4".into(),
            num_actions: 6,
            horizon: 24,
            subtasks: vec![
                subtask("find", &[0, 3, 1, 4, 2]),
                subtask("take", &[2, 5, 0]),
                subtask("heat", &[4, 0, 2, 1, 3]),
                subtask("place", &[3, 1, 5, 2, 4]),
            ],
            gamma: 0.9,
            r_max: 1.0,
            rewards: StepRewards::default(),
            outcome: OutcomeRegime::Graded,
            tie_break: TieBreak::LowestIndex,
        }
    }

    /// Smallest analysis chain: two sub-tasks over two actions, four
    /// observation ids (three progress positions plus success).
    pub fn analysis_default(horizon: usize, gamma: f64) -> Self {
        EnvConfig {
            name: "analysis-chain".into(),
            num_actions: 2,
            horizon,
            subtasks: vec![subtask("first", &[0, 1]), subtask("second", &[1])],
            gamma,
            r_max: 1.0,
            rewards: StepRewards::default(),
            outcome: OutcomeRegime::Graded,
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HplError::io(path, e))?;
        text.parse()
    }

    /// Renders the flat key-value form accepted by [`EnvConfig::from_str`].
    pub fn to_flat_string(&self) -> String {
        let flat = FlatEnvConfig::from(self);
        toml::to_string(&flat).expect("flat config always serialises")
    }
}

/// Shorthand constructor for a [`SubtaskSpec`].
pub fn subtask(name: &str, actions: &[usize]) -> SubtaskSpec {
    SubtaskSpec {
        name: name.into(),
        actions: actions.to_vec(),
    }
}

/// Serde adapter storing an [`EnvConfig`] in its flat key-value layout, for
/// use as `#[serde(with = "flat_env")]` inside larger documents.
pub mod flat_env {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{EnvConfig, FlatEnvConfig};

    pub fn serialize<S: Serializer>(config: &EnvConfig, s: S) -> Result<S::Ok, S::Error> {
        FlatEnvConfig::from(config).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<EnvConfig, D::Error> {
        let flat = FlatEnvConfig::deserialize(d)?;
        EnvConfig::try_from(flat).map_err(serde::de::Error::custom)
    }
}

/// On-disk flat key-value layout. Sub-tasks are encoded in one string as
/// `name:a,b,c;name:d,e`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct FlatEnvConfig {
    pub name: String,
    pub num_actions: usize,
    pub horizon: usize,
    pub subtasks: String,
    pub gamma: f64,
    #[serde(default = "one")]
    pub r_max: f64,
    #[serde(default)]
    pub reward_advance: f64,
    #[serde(default = "one")]
    pub reward_complete: f64,
    #[serde(default)]
    pub reward_error: f64,
    #[serde(default)]
    pub outcome: OutcomeRegime,
    #[serde(default)]
    pub tie_break: TieBreak,
}

fn one() -> f64 {
    1.0
}

impl From<&EnvConfig> for FlatEnvConfig {
    fn from(c: &EnvConfig) -> Self {
        FlatEnvConfig {
            name: c.name.clone(),
            num_actions: c.num_actions,
            horizon: c.horizon,
            subtasks: encode_subtasks(&c.subtasks),
            gamma: c.gamma,
            r_max: c.r_max,
            reward_advance: c.rewards.advance,
            reward_complete: c.rewards.complete,
            reward_error: c.rewards.error,
            outcome: c.outcome,
            tie_break: c.tie_break,
        }
    }
}

impl TryFrom<FlatEnvConfig> for EnvConfig {
    type Error = HplError;

    fn try_from(f: FlatEnvConfig) -> Result<Self> {
        let config = EnvConfig {
            name: f.name,
            num_actions: f.num_actions,
            horizon: f.horizon,
            subtasks: decode_subtasks(&f.subtasks)?,
            gamma: f.gamma,
            r_max: f.r_max,
            rewards: StepRewards {
                advance: f.reward_advance,
                complete: f.reward_complete,
                error: f.reward_error,
            },
            outcome: f.outcome,
            tie_break: f.tie_break,
        };
        config.validate()?;
        Ok(config)
    }
}

fn encode_subtasks(subtasks: &[SubtaskSpec]) -> String {
    subtasks
        .iter()
        .map(|s| {
            let acts: Vec<String> = s.actions.iter().map(|a| a.to_string()).collect();
            format!("{}:{}", s.name, acts.join(","))
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn decode_subtasks(text: &str) -> Result<Vec<SubtaskSpec>> {
    text.split(';')
        .filter(|chunk| !chunk.trim().is_empty())
        .map(|chunk| {
            let (name, acts) = chunk.split_once(':').ok_or_else(|| {
                HplError::config(format!("sub-task {chunk:?} is not of the form name:a,b,c"))
            })?;
            let actions = acts
                .split(',')
                .filter(|a| !a.trim().is_empty())
                .map(|a| {
                    a.trim().parse::<usize>().map_err(|_| {
                        HplError::config(format!("sub-task {name:?}: bad action id {a:?}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SubtaskSpec {
                name: name.trim().to_string(),
                actions,
            })
        })
        .collect()
}

impl FromStr for EnvConfig {
    type Err = HplError;

    fn from_str(s: &str) -> Result<Self> {
        let flat: FlatEnvConfig = toml::from_str(s).map_err(|e| HplError::Toml(e.to_string()))?;
        flat.try_into()
    }
}

impl fmt::Display for EnvConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_flat_string())
    }
}
