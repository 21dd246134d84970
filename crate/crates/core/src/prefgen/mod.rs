//! Preference-pair generation at trajectory, step and action-group granularity.
//!
//! Every generator is a pure function of its inputs and a seed. Each expert
//! trajectory draws from its own stream keyed by task id (and by step index or
//! span start below that), and outputs are sorted canonically, so serial and
//! parallel runs produce identical datasets.

mod generate;
mod mc;
mod segment;
mod semantic;
mod types;

pub use generate::{
    gen_group_pairs, gen_step_pairs, gen_traj_pairs, sample_group_candidates,
    score_group_candidates, GroupCandidateSet, GroupScoreStats, StepPairOptions, StepPairSet,
};
pub use mc::{estimate_group_reward, mc_outcome};
pub use segment::{
    calibrate_entropy_threshold, segment_by_entropies, segment_fixed_k, segment_fixed_n,
    segment_uncertainty, validate_partition, Segmentation, SegmenterSpec,
};
pub use semantic::{
    parse_segmenter_response, segment_semantic, FallbackEvent, HttpSegmenter, OracleSegmenter,
    SegmenterProvider, SegmenterRequest, SemanticOutcome,
};
pub use types::{ActionGroup, GroupCandidate, GroupLoser, GroupOrigin, GroupPair, GroupWinner, StepPair, TrajPair};
