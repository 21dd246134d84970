use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::PipelineConfig;
use super::stages;
use crate::curriculum::build_matrix;
use crate::envsim::{read_jsonl, Trajectory};
use crate::error::{HplError, Result};
use crate::eval::EvalSummary;
use crate::exec::Exec;
use crate::io::{config_hash, read_json, write_atomic, write_json, write_jsonl, Manifest};
use crate::policy::PolicyParams;
use crate::prefgen::{GroupCandidate, GroupPair, SegmenterProvider, StepPair, TrajPair};
use crate::seed::{self, stream};

/// Artifact file names inside a run directory.
pub mod files {
    pub const CONFIG: &str = "config.resolved.toml";
    pub const EXPERT: &str = "expert.jsonl";
    pub const REFERENCE: &str = "ref.policy.json";
    pub const BC_LOSSES: &str = "bc_losses.json";
    pub const TRAJ: &str = "traj_pairs.jsonl";
    pub const STEP: &str = "step_pairs.jsonl";
    pub const CANDIDATES: &str = "group_candidates.jsonl";
    pub const GROUP: &str = "group_pairs.jsonl";
    pub const CURRICULUM: &str = "curriculum.json";
    pub const TRAIN_REPORT: &str = "train_report.json";
    pub const TRAIN_CSV: &str = "train_losses.csv";
    pub const THETA: &str = "theta.policy.json";
    pub const PHASE_POLICIES: [&str; 3] = ["phase1.policy.json", "phase2.policy.json", "phase3.policy.json"];
    pub const EVAL: &str = "eval.json";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Expert,
    Bc,
    Prefs,
    Mc,
    Bucket,
    Train,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Expert, Stage::Bc, Stage::Prefs, Stage::Mc, Stage::Bucket, Stage::Train, Stage::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Expert => "expert",
            Stage::Bc => "bc",
            Stage::Prefs => "prefs",
            Stage::Mc => "mc",
            Stage::Bucket => "bucket",
            Stage::Train => "train",
            Stage::Eval => "eval",
        }
    }

    /// Upstream artifacts read by this stage.
    pub fn inputs(self) -> Vec<&'static str> {
        use files::*;
        match self {
            Stage::Expert => vec![],
            Stage::Bc => vec![EXPERT],
            Stage::Prefs => vec![EXPERT, REFERENCE],
            Stage::Mc => vec![CANDIDATES, REFERENCE],
            Stage::Bucket => vec![GROUP],
            Stage::Train => vec![EXPERT, REFERENCE, TRAJ, STEP, GROUP, CURRICULUM],
            Stage::Eval => {
                let mut v = vec![REFERENCE, THETA];
                v.extend(PHASE_POLICIES);
                v
            }
        }
    }

    pub fn outputs(self) -> Vec<&'static str> {
        use files::*;
        match self {
            Stage::Expert => vec![EXPERT],
            Stage::Bc => vec![REFERENCE, BC_LOSSES],
            Stage::Prefs => vec![TRAJ, STEP, CANDIDATES],
            Stage::Mc => vec![GROUP],
            Stage::Bucket => vec![CURRICULUM],
            Stage::Train => {
                let mut v = vec![TRAIN_REPORT, TRAIN_CSV, THETA];
                v.extend(PHASE_POLICIES);
                v
            }
            Stage::Eval => vec![EVAL],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = HplError;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| HplError::usage(format!("unknown stage {s:?}")))
    }
}

/// Evaluations written by the eval stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalBundle {
    pub reference: EvalSummary,
    /// Policy at the end of each curriculum phase.
    pub phases: Vec<EvalSummary>,
    pub final_policy: EvalSummary,
}

/// What a pipeline invocation did per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ran: Vec<Stage>,
    pub reused: Vec<Stage>,
}

/// Runs stages against a directory of artifacts.
pub struct Runner<'a> {
    pub config: &'a PipelineConfig,
    pub out: PathBuf,
    pub exec: Exec,
    /// Overrides the semantic segmenter implied by the configuration.
    pub provider: Option<&'a dyn SegmenterProvider>,
}

impl<'a> Runner<'a> {
    pub fn new(config: &'a PipelineConfig, out: impl Into<PathBuf>, exec: Exec) -> Self {
        Runner { config, out: out.into(), exec, provider: None }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn stage_config_hash(&self, stage: Stage) -> Result<String> {
        let c = self.config;
        let section = match stage {
            Stage::Expert => json!({"seed": c.seed, "tasks": c.tasks, "env": c.env}),
            Stage::Bc => json!({"env": c.env, "bc": c.bc}),
            Stage::Prefs => json!({"seed": c.seed, "segmenter": c.segmenter, "step_pairs": c.step_pairs}),
            Stage::Mc => json!({"seed": c.seed, "mc_samples": c.mc_samples, "mc_regime": c.mc_regime}),
            Stage::Bucket => json!({"curriculum": c.curriculum}),
            Stage::Train => json!({"dpo": c.dpo}),
            Stage::Eval => json!({"seed": c.seed, "eval": c.eval}),
        };
        config_hash(&section)
    }

    /// True when the stage's manifest matches the current configuration and
    /// inputs, and all its outputs are intact.
    pub fn is_complete(&self, stage: Stage) -> bool {
        let Ok(m) = Manifest::load(&self.out, stage.name()) else {
            return false;
        };
        let Ok(hash) = self.stage_config_hash(stage) else {
            return false;
        };
        let inputs_match = Manifest::hash_files(&self.out, &stage.inputs()).is_ok_and(|h| h == m.inputs);
        m.config_hash == hash && inputs_match && m.outputs_intact(&self.out)
    }

    /// Runs every stage in order, reusing complete stages when `resume` is set.
    pub fn run_all(&self, resume: bool) -> Result<RunSummary> {
        self.config.validate()?;
        write_atomic(&self.path(files::CONFIG), self.config.to_toml().as_bytes())?;
        let mut summary = RunSummary { ran: vec![], reused: vec![] };
        for stage in Stage::ALL {
            if resume && self.is_complete(stage) {
                log::info!("stage {stage}: up to date");
                summary.reused.push(stage);
                continue;
            }
            self.run_stage(stage)?;
            summary.ran.push(stage);
        }
        Ok(summary)
    }

    /// Runs one stage from the artifacts on disk and writes its manifest.
    pub fn run_stage(&self, stage: Stage) -> Result<Manifest> {
        log::info!("stage {stage}: running");
        self.run_stage_inner(stage)
            .map_err(|e| HplError::Stage { stage: stage.name().into(), source: Box::new(e) })
    }

    fn run_stage_inner(&self, stage: Stage) -> Result<Manifest> {
        std::fs::create_dir_all(&self.out).map_err(|e| HplError::io(&self.out, e))?;
        let inputs = Manifest::hash_files(&self.out, &stage.inputs())?;
        let details = match stage {
            Stage::Expert => self.do_expert()?,
            Stage::Bc => self.do_bc()?,
            Stage::Prefs => self.do_prefs()?,
            Stage::Mc => self.do_mc()?,
            Stage::Bucket => self.do_bucket()?,
            Stage::Train => self.do_train()?,
            Stage::Eval => self.do_eval()?,
        };
        let manifest = Manifest {
            stage: stage.name().into(),
            seed: self.config.seed,
            config_hash: self.stage_config_hash(stage)?,
            inputs,
            outputs: Manifest::hash_files(&self.out, &stage.outputs())?,
            details,
        };
        manifest.save(&self.out)?;
        Ok(manifest)
    }

    fn expert(&self) -> Result<Vec<Trajectory>> {
        read_jsonl(&self.path(files::EXPERT))
    }

    fn reference(&self) -> Result<PolicyParams> {
        let p = PolicyParams::load(&self.path(files::REFERENCE))?;
        p.check_env(&self.config.env)?;
        Ok(p)
    }

    fn do_expert(&self) -> Result<serde_json::Value> {
        let expert = stages::run_expert(self.config)?;
        write_jsonl(&self.path(files::EXPERT), &expert)?;
        Ok(json!({"trajectories": expert.len(), "env": self.config.env.name}))
    }

    fn do_bc(&self) -> Result<serde_json::Value> {
        let run = stages::run_bc(self.config, &self.expert()?)?;
        write_json(&self.path(files::REFERENCE), &run.params)?;
        write_json(&self.path(files::BC_LOSSES), &run.losses)?;
        Ok(json!({"epochs": self.config.bc.epochs, "final_loss": run.losses.last()}))
    }

    fn do_prefs(&self) -> Result<serde_json::Value> {
        let expert = self.expert()?;
        let reference = self.reference()?;
        let prefs = stages::run_prefs(self.config, &expert, &reference, self.provider, self.exec)?;
        write_jsonl(&self.path(files::TRAJ), &prefs.traj)?;
        write_jsonl(&self.path(files::STEP), &prefs.step.pairs)?;
        write_jsonl(&self.path(files::CANDIDATES), &prefs.candidates.candidates)?;
        let c = &prefs.candidates;
        Ok(json!({
            "strategy": c.resolved.name(),
            "params": c.resolved,
            "seeds": {
                "traj": seed::derive(self.config.seed, stream::PREFS_TRAJ),
                "step": seed::derive(self.config.seed, stream::PREFS_STEP),
                "group": seed::derive(self.config.seed, stream::PREFS_GROUP),
            },
            "counts": {
                "expert": expert.len(),
                "traj_pairs": prefs.traj.len(),
                "step_pairs": prefs.step.pairs.len(),
                "step_candidates": prefs.step.candidates,
                "step_skipped": prefs.step.skipped,
                "group_candidates": c.candidates.len(),
                "group_length_mismatch": c.length_mismatch,
            },
            "fallback_events": c.fallback_events,
        }))
    }

    fn do_mc(&self) -> Result<serde_json::Value> {
        let candidates: Vec<GroupCandidate> = read_jsonl(&self.path(files::CANDIDATES))?;
        let reference = self.reference()?;
        let set = crate::prefgen::GroupCandidateSet {
            candidates,
            resolved: self.config.segmenter.clone(),
            segmentations: vec![],
            fallback_events: vec![],
            length_mismatch: 0,
        };
        let (pairs, stats) = stages::run_mc(self.config, &set, &reference, self.exec)?;
        write_jsonl(&self.path(files::GROUP), &pairs)?;
        let prefs = Manifest::load(&self.out, Stage::Prefs.name()).ok();
        let from_prefs = |key: &str| prefs.as_ref().map(|m| m.details[key].clone()).unwrap_or_default();
        Ok(json!({
            "strategy": from_prefs("strategy"),
            "params": from_prefs("params"),
            "m": self.config.mc_samples,
            "regime": self.config.mc_regime,
            "seed": seed::derive(self.config.seed, stream::MC),
            "counts": stats,
            "fallback_events": from_prefs("fallback_events"),
        }))
    }

    fn do_bucket(&self) -> Result<serde_json::Value> {
        let pairs: Vec<GroupPair> = read_jsonl(&self.path(files::GROUP))?;
        let matrix = stages::run_bucket(self.config, &pairs)?;
        let summary = matrix.summary();
        write_json(&self.path(files::CURRICULUM), &summary)?;
        Ok(json!({"total": summary.total, "counts": summary.counts}))
    }

    fn do_train(&self) -> Result<serde_json::Value> {
        let expert = self.expert()?;
        let reference = self.reference()?;
        let traj: Vec<TrajPair> = read_jsonl(&self.path(files::TRAJ))?;
        let step: Vec<StepPair> = read_jsonl(&self.path(files::STEP))?;
        let group: Vec<GroupPair> = read_jsonl(&self.path(files::GROUP))?;
        let matrix = build_matrix(&group, &self.config.curriculum)?;
        let report = stages::run_train(self.config, &reference, &expert, &traj, &step, &matrix, self.exec)?;
        write_json(&self.path(files::TRAIN_REPORT), &report)?;
        write_atomic(&self.path(files::TRAIN_CSV), report.to_csv().as_bytes())?;
        let theta = report.final_params.as_ref().expect("training sets final parameters");
        write_json(&self.path(files::THETA), theta)?;
        for (name, params) in files::PHASE_POLICIES.iter().zip(&report.phase_params) {
            write_json(&self.path(name), params)?;
        }
        Ok(json!({
            "records": report.records.len(),
            "phases": report.phases,
            "grad_check_max_rel_error": report.grad_check.as_ref().map(|g| g.max_rel_error),
        }))
    }

    fn do_eval(&self) -> Result<serde_json::Value> {
        let load = |name: &str| -> Result<PolicyParams> {
            let p = PolicyParams::load(&self.path(name))?;
            p.check_env(&self.config.env)?;
            Ok(p)
        };
        let bundle = EvalBundle {
            reference: stages::run_eval(self.config, &load(files::REFERENCE)?, self.exec)?,
            phases: files::PHASE_POLICIES
                .iter()
                .map(|n| stages::run_eval(self.config, &load(n)?, self.exec))
                .collect::<Result<_>>()?,
            final_policy: stages::run_eval(self.config, &load(files::THETA)?, self.exec)?,
        };
        write_json(&self.path(files::EVAL), &bundle)?;
        Ok(json!({
            "episodes": self.config.eval.episodes,
            "reference_success": bundle.reference.success_rate,
            "final_success": bundle.final_policy.success_rate,
        }))
    }
}

/// Loads the evaluation bundle of a finished run directory.
pub fn load_eval(dir: &Path) -> Result<EvalBundle> {
    read_json(&dir.join(files::EVAL))
}
