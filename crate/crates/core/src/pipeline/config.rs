use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curriculum::CurriculumThresholds;
use crate::dpo::DpoConfig;
use crate::envsim::{flat_env, EnvConfig, OutcomeRegime};
use crate::error::{HplError, Result};
use crate::eval::Decode;
use crate::prefgen::{SegmenterSpec, StepPairOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub lr: f64,
    pub epochs: usize,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig { lr: 0.5, epochs: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub decode: Decode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { episodes: 1000, decode: Decode::Sample }
    }
}

/// One run: environment, every stage's hyperparameters and the root seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Number of expert demonstrations.
    pub tasks: usize,
    #[serde(with = "flat_env")]
    pub env: EnvConfig,
    pub bc: BcConfig,
    pub segmenter: SegmenterSpec,
    /// Monte-Carlo rollouts per group reward estimate.
    pub mc_samples: usize,
    /// Outcome regime used to score group rewards. Success, and therefore
    /// every other filter, is the same under both regimes.
    pub mc_regime: OutcomeRegime,
    pub step_pairs: StepPairOptions,
    pub curriculum: CurriculumThresholds,
    pub dpo: DpoConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            tasks: 32,
            env: EnvConfig::desk_standard(),
            bc: BcConfig::default(),
            segmenter: SegmenterSpec::Semantic { endpoint: None },
            mc_samples: 8,
            mc_regime: OutcomeRegime::Binary,
            step_pairs: StepPairOptions::default(),
            curriculum: CurriculumThresholds::default(),
            dpo: DpoConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.segmenter.validate()?;
        self.curriculum.validate()?;
        self.dpo.validate()?;
        for (name, n) in [
            ("tasks", self.tasks),
            ("mc_samples", self.mc_samples),
            ("eval.episodes", self.eval.episodes),
            ("step_pairs.max_retries", self.step_pairs.max_retries),
        ] {
            if n == 0 {
                return Err(HplError::config(format!("{name} must be positive")));
            }
        }
        if !(self.bc.lr > 0.0 && self.bc.lr.is_finite()) {
            return Err(HplError::config("bc.lr must be positive"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: PipelineConfig = toml::from_str(text).map_err(|e| HplError::Toml(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HplError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Environment used for Monte-Carlo group scoring.
    pub fn scoring_env(&self) -> EnvConfig {
        EnvConfig { outcome: self.mc_regime, ..self.env.clone() }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config always serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut c = PipelineConfig::default();
        c.step_pairs.mc_filter = Some(4);
        c.segmenter = SegmenterSpec::Semantic { endpoint: Some("http://localhost:1/x".into()) };
        let text = c.to_toml();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = PipelineConfig::from_toml("seed = 7\n[dpo]\nbeta = 0.5\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.dpo.beta, 0.5);
        assert_eq!(c.tasks, PipelineConfig::default().tasks);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(PipelineConfig::from_toml("sede = 1").is_err());
        assert!(PipelineConfig::from_toml("tasks = 0").is_err());
        assert!(PipelineConfig::from_toml("[dpo]\nbeta = -1.0").is_err());
    }
}
