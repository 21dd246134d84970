use super::config::PipelineConfig;
use crate::curriculum::{build_matrix, CurriculumMatrix};
use crate::dpo::{train_hpl, TrainData, TrainReport};
use crate::envsim::{scripted_expert, Trajectory};
use crate::error::Result;
use crate::eval::{evaluate, EvalSummary};
use crate::exec::Exec;
use crate::policy::{bc_train, BcRun, PolicyParams};
use crate::prefgen::{
    gen_step_pairs, gen_traj_pairs, sample_group_candidates, score_group_candidates,
    GroupCandidateSet, GroupPair, GroupScoreStats, SegmenterProvider, StepPairSet, TrajPair,
};
use crate::seed::{self, stream};

pub fn task_id(i: usize) -> String {
    format!("task-{i:05}")
}

/// `config.tasks` expert demonstrations with distinct task ids.
pub fn run_expert(config: &PipelineConfig) -> Result<Vec<Trajectory>> {
    (0..config.tasks).map(|i| scripted_expert(&config.env, &task_id(i))).collect()
}

/// Behavior cloning from uniform logits; the result is the frozen reference.
pub fn run_bc(config: &PipelineConfig, expert: &[Trajectory]) -> Result<BcRun> {
    let mut run = bc_train(expert, &PolicyParams::for_env(&config.env), config.bc.lr, config.bc.epochs)?;
    run.params = run.params.freeze_reference();
    Ok(run)
}

pub struct Prefs {
    pub traj: Vec<TrajPair>,
    pub step: StepPairSet,
    pub candidates: GroupCandidateSet,
}

pub fn run_prefs(
    config: &PipelineConfig,
    expert: &[Trajectory],
    reference: &PolicyParams,
    provider: Option<&dyn SegmenterProvider>,
    exec: Exec,
) -> Result<Prefs> {
    let env = &config.env;
    let root = config.seed;
    let traj = gen_traj_pairs(expert, reference, env, seed::derive(root, stream::PREFS_TRAJ), exec)?;
    let step = gen_step_pairs(
        expert,
        reference,
        env,
        seed::derive(root, stream::PREFS_STEP),
        config.step_pairs,
        exec,
    )?;
    let candidates = sample_group_candidates(
        expert,
        reference,
        &config.segmenter,
        provider,
        env,
        seed::derive(root, stream::PREFS_GROUP),
        exec,
    )?;
    Ok(Prefs { traj, step, candidates })
}

pub fn run_mc(
    config: &PipelineConfig,
    candidates: &GroupCandidateSet,
    reference: &PolicyParams,
    exec: Exec,
) -> Result<(Vec<GroupPair>, GroupScoreStats)> {
    score_group_candidates(
        &candidates.candidates,
        reference,
        &config.scoring_env(),
        config.mc_samples,
        seed::derive(config.seed, stream::MC),
        exec,
    )
}

pub fn run_bucket(config: &PipelineConfig, pairs: &[GroupPair]) -> Result<CurriculumMatrix> {
    build_matrix(pairs, &config.curriculum)
}

/// Trains from the reference policy.
pub fn run_train(
    config: &PipelineConfig,
    reference: &PolicyParams,
    expert: &[Trajectory],
    traj: &[TrajPair],
    step: &[crate::prefgen::StepPair],
    matrix: &CurriculumMatrix,
    exec: Exec,
) -> Result<TrainReport> {
    let mut init = reference.clone();
    init.tag = "theta".into();
    train_hpl(&init, reference, TrainData { expert, traj, step, matrix }, &config.dpo, exec)
}

pub fn run_eval(config: &PipelineConfig, params: &PolicyParams, exec: Exec) -> Result<EvalSummary> {
    evaluate(
        params,
        &config.env,
        config.eval.episodes,
        seed::derive(config.seed, stream::EVAL),
        config.eval.decode,
        exec,
    )
}
