use serde::{Deserialize, Serialize};

use super::mc::mc_outcome;
use super::segment::{
    calibrate_entropy_threshold, segment_fixed_k, segment_fixed_n, segment_uncertainty,
    Segmentation, SegmenterSpec,
};
use super::semantic::{segment_semantic, FallbackEvent, HttpSegmenter, OracleSegmenter, SegmenterProvider};
use super::types::{
    ActionGroup, GroupCandidate, GroupLoser, GroupOrigin, GroupPair, GroupWinner, StepPair, TrajPair,
};
use crate::envsim::{replay_prefix, reset, step, EnvConfig, Step, Trajectory};
use crate::error::Result;
use crate::exec::Exec;
use crate::policy::{sample_action, sample_rollout, PolicyParams, ProbTable};
use crate::seed;

fn unit_seed(seed: u64, task_id: &str) -> u64 {
    seed::derive(seed, task_id)
}

/// One full reference rollout per expert trajectory; kept when it ends with a
/// lower outcome than the expert.
pub fn gen_traj_pairs(
    expert: &[Trajectory],
    reference: &PolicyParams,
    config: &EnvConfig,
    seed: u64,
    exec: Exec,
) -> Result<Vec<TrajPair>> {
    reference.check_env(config)?;
    let table = reference.prob_table();
    let start = reset(config)?;
    let found = exec.try_map(expert, |_, w| -> Result<Option<TrajPair>> {
        let mut rng = seed::rng(unit_seed(seed, &w.task_id));
        let roll = sample_rollout(&table, config, &start, usize::MAX, &mut rng)?;
        let outcome = roll.outcome_reward(config);
        if outcome >= w.outcome_reward {
            return Ok(None);
        }
        Ok(Some(TrajPair {
            u: w.instruction.clone(),
            winner: w.clone(),
            loser: Trajectory {
                task_id: w.task_id.clone(),
                instruction: w.instruction.clone(),
                steps: roll.steps,
                outcome_reward: outcome,
                subtask_boundaries: None,
            },
        }))
    })?;
    let mut pairs: Vec<TrajPair> = found.into_iter().flatten().collect();
    pairs.sort_by(|a, b| a.winner.task_id.cmp(&b.winner.task_id));
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPairOptions {
    /// Draws allowed when sampling an action different from the expert's.
    pub max_retries: usize,
    /// When set, a pair is also required to have a Monte-Carlo estimate (with
    /// this many rollouts) below the expert outcome after the deviation.
    pub mc_filter: Option<usize>,
}

impl Default for StepPairOptions {
    fn default() -> Self {
        StepPairOptions { max_retries: 32, mc_filter: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepPairSet {
    pub pairs: Vec<StepPair>,
    /// Steps whose rejection budget ran out.
    pub skipped: usize,
    /// Completed deviations before outcome filtering.
    pub candidates: usize,
}

/// For every expert step, deviates with a reference action different from the
/// expert's and completes the episode with the reference policy.
pub fn gen_step_pairs(
    expert: &[Trajectory],
    reference: &PolicyParams,
    config: &EnvConfig,
    seed: u64,
    options: StepPairOptions,
    exec: Exec,
) -> Result<StepPairSet> {
    reference.check_env(config)?;
    let table = reference.prob_table();
    let per_traj = exec.try_map(expert, |_, w| step_pairs_for(w, &table, config, seed, options))?;
    let mut set = StepPairSet { pairs: Vec::new(), skipped: 0, candidates: 0 };
    for part in per_traj {
        set.pairs.extend(part.pairs);
        set.skipped += part.skipped;
        set.candidates += part.candidates;
    }
    set.pairs.sort_by(|a, b| (&a.task_id, a.t).cmp(&(&b.task_id, b.t)));
    Ok(set)
}

fn step_pairs_for(
    w: &Trajectory,
    table: &ProbTable,
    config: &EnvConfig,
    seed: u64,
    options: StepPairOptions,
) -> Result<StepPairSet> {
    let base = unit_seed(seed, &w.task_id);
    let mut out = StepPairSet { pairs: Vec::new(), skipped: 0, candidates: 0 };
    let mut state = reset(config)?;
    for (t, expert_step) in w.steps.iter().enumerate() {
        let t_seed = seed::derive_index(base, t as u64);
        let mut rng = seed::rng(t_seed);
        let probs = table.probs(state.obs);
        let alt = (0..options.max_retries)
            .map(|_| sample_action(probs, &mut rng))
            .find(|&a| a != expert_step.action);
        let next_expert = step(config, &state, expert_step.action)?.state;
        let Some(alt) = alt else {
            out.skipped += 1;
            state = next_expert;
            continue;
        };
        let first = step(config, &state, alt)?;
        let mut loser_suffix = vec![Step { obs: state.obs, action: alt, reward: first.reward }];
        let mut end = first.state;
        if !end.done {
            let roll = sample_rollout(table, config, &end, usize::MAX, &mut rng)?;
            loser_suffix.extend(roll.steps);
            end = roll.end;
        }
        out.candidates += 1;
        let mut keep = end.outcome_reward(config) < w.outcome_reward;
        if keep {
            if let Some(m) = options.mc_filter {
                let est = mc_outcome(table, config, &first.state, m, seed::derive(t_seed, "mc"))?;
                keep = est < w.outcome_reward;
            }
        }
        if keep {
            out.pairs.push(StepPair {
                task_id: w.task_id.clone(),
                t,
                prefix: w.steps[..t].to_vec(),
                winner_suffix: w.steps[t..].to_vec(),
                loser_suffix,
            });
        }
        state = next_expert;
    }
    Ok(out)
}

/// Winning groups paired with unscored same-length reference samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCandidateSet {
    pub candidates: Vec<GroupCandidate>,
    /// Strategy with any calibrated parameter filled in.
    pub resolved: SegmenterSpec,
    pub segmentations: Vec<Segmentation>,
    pub fallback_events: Vec<FallbackEvent>,
    /// Samples that ended the episode before reaching the winner's length.
    pub length_mismatch: usize,
}

/// Resolves calibrated parameters against the expert dataset.
fn resolve_spec(spec: &SegmenterSpec, expert: &[Trajectory], reference: &PolicyParams) -> Result<SegmenterSpec> {
    spec.validate()?;
    Ok(match *spec {
        SegmenterSpec::UncertaintyQuantile { quantile } => SegmenterSpec::Uncertainty {
            threshold: calibrate_entropy_threshold(expert, reference, quantile)?,
        },
        ref other => other.clone(),
    })
}

/// Segments each expert trajectory and samples, for every winning group, one
/// reference continuation of the same length from the group's context.
/// `provider` overrides the semantic segmenter implied by `spec`.
pub fn sample_group_candidates(
    expert: &[Trajectory],
    reference: &PolicyParams,
    spec: &SegmenterSpec,
    provider: Option<&dyn SegmenterProvider>,
    config: &EnvConfig,
    seed: u64,
    exec: Exec,
) -> Result<GroupCandidateSet> {
    reference.check_env(config)?;
    let resolved = resolve_spec(spec, expert, reference)?;
    let table = reference.prob_table();
    let http;
    let provider: &dyn SegmenterProvider = match (provider, &resolved) {
        (Some(p), _) => p,
        (None, SegmenterSpec::Semantic { endpoint: Some(url) }) => {
            http = HttpSegmenter::new(url.clone());
            &http
        }
        _ => &OracleSegmenter,
    };
    let endpoint = match &resolved {
        SegmenterSpec::Semantic { endpoint } => endpoint.clone(),
        _ => None,
    };

    let per_traj = exec.try_map(expert, |_, w| -> Result<_> {
        let (seg, fallback) = match resolved {
            SegmenterSpec::FixedN { n } => (segment_fixed_n(w, n)?, None),
            SegmenterSpec::FixedK { k } => (segment_fixed_k(w, k)?, None),
            SegmenterSpec::Uncertainty { threshold } => (segment_uncertainty(w, reference, threshold)?, None),
            SegmenterSpec::UncertaintyQuantile { .. } => unreachable!("resolved above"),
            SegmenterSpec::Semantic { .. } => {
                let out = segment_semantic(w, config, provider, endpoint.as_deref(), true)?;
                (out.segmentation, out.fallback)
            }
        };
        let base = unit_seed(seed, &w.task_id);
        let mut candidates = Vec::with_capacity(seg.boundaries.len());
        let mut mismatch = 0;
        for &span in &seg.boundaries {
            let [s, e] = span;
            let context = w.steps[..s].to_vec();
            let ctx_state = replay_prefix(config, &context)?;
            let len = e - s + 1;
            let mut rng = seed::rng(seed::derive_index(base, s as u64));
            let roll = sample_rollout(&table, config, &ctx_state, len, &mut rng)?;
            if roll.steps.len() != len {
                mismatch += 1;
                continue;
            }
            let winner = ActionGroup {
                source_task: w.task_id.clone(),
                span,
                context: context.clone(),
                steps: w.steps[s..=e].to_vec(),
                r_hat: None,
                origin: GroupOrigin::Expert,
            };
            let loser = ActionGroup {
                steps: roll.steps,
                origin: GroupOrigin::Sampled,
                ..winner.clone()
            };
            candidates.push(GroupCandidate { winner, loser });
        }
        Ok((seg, fallback, candidates, mismatch))
    })?;

    let mut set = GroupCandidateSet {
        candidates: Vec::new(),
        resolved,
        segmentations: Vec::new(),
        fallback_events: Vec::new(),
        length_mismatch: 0,
    };
    for (seg, fallback, candidates, mismatch) in per_traj {
        set.segmentations.push(seg);
        set.fallback_events.extend(fallback);
        set.candidates.extend(candidates);
        set.length_mismatch += mismatch;
    }
    set.candidates.sort_by(|a, b| {
        (&a.winner.source_task, a.winner.span[0]).cmp(&(&b.winner.source_task, b.winner.span[0]))
    });
    Ok(set)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupScoreStats {
    pub scored: usize,
    pub retained: usize,
    /// Pairs dropped because `ΔR <= 0`.
    pub dropped_non_positive: usize,
}

/// Scores both sides of every candidate with `m` reference rollouts and keeps
/// pairs with `ΔR > 0`. Winner and loser of a candidate share their rollout
/// streams, so identical groups always tie.
pub fn score_group_candidates(
    candidates: &[GroupCandidate],
    reference: &PolicyParams,
    config: &EnvConfig,
    m: usize,
    seed: u64,
    exec: Exec,
) -> Result<(Vec<GroupPair>, GroupScoreStats)> {
    reference.check_env(config)?;
    let table = reference.prob_table();
    let scored = exec.try_map(candidates, |_, c| -> Result<GroupPair> {
        let w = &c.winner;
        let mc_seed = seed::derive_index(unit_seed(seed, &w.source_task), w.span[0] as u64);
        let after_w = replay_prefix(config, &w.full_prefix())?;
        let after_l = replay_prefix(config, &c.loser.full_prefix())?;
        let r_w = mc_outcome(&table, config, &after_w, m, mc_seed)?;
        let r_l = mc_outcome(&table, config, &after_l, m, mc_seed)?;
        Ok(GroupPair {
            task_id: w.source_task.clone(),
            context: w.context.clone(),
            winner: GroupWinner { span: w.span, steps: w.steps.clone(), r_hat: r_w },
            loser: GroupLoser { steps: c.loser.steps.clone(), r_hat: r_l },
            delta_r: r_w - r_l,
            length: w.steps.len(),
        })
    })?;
    let mut stats = GroupScoreStats { scored: scored.len(), ..Default::default() };
    let mut pairs: Vec<GroupPair> = scored.into_iter().filter(|p| p.delta_r > 0.0).collect();
    stats.retained = pairs.len();
    stats.dropped_non_positive = stats.scored - stats.retained;
    pairs.sort_by(|a, b| (&a.task_id, a.winner.span[0]).cmp(&(&b.task_id, b.winner.span[0])));
    Ok((pairs, stats))
}

/// Candidate sampling followed by Monte-Carlo scoring.
#[allow(clippy::too_many_arguments)]
pub fn gen_group_pairs(
    expert: &[Trajectory],
    reference: &PolicyParams,
    spec: &SegmenterSpec,
    provider: Option<&dyn SegmenterProvider>,
    config: &EnvConfig,
    m: usize,
    seed: u64,
    exec: Exec,
) -> Result<(Vec<GroupPair>, GroupCandidateSet, GroupScoreStats)> {
    let set = sample_group_candidates(
        expert,
        reference,
        spec,
        provider,
        config,
        seed::derive(seed, "sample"),
        exec,
    )?;
    let (pairs, stats) =
        score_group_candidates(&set.candidates, reference, config, m, seed::derive(seed, "score"), exec)?;
    Ok((pairs, set, stats))
}
