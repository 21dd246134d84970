use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::segment::{validate_partition, Segmentation, SegmenterSpec};
use crate::envsim::{EnvConfig, Span, Trajectory};
use crate::error::{HplError, Result};

/// Body of a request to an external segmenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterRequest {
    pub actions: Vec<String>,
    pub num_actions: usize,
}

impl SegmenterRequest {
    pub fn for_trajectory(traj: &Trajectory, config: &EnvConfig) -> Self {
        let actions = traj
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                format!("step {i}: action {} of {} at observation {}", s.action, config.num_actions, s.obs)
            })
            .collect();
        SegmenterRequest { actions, num_actions: traj.steps.len() }
    }
}

/// Source of semantic segment boundaries.
pub trait SegmenterProvider: Send + Sync {
    fn name(&self) -> String;

    /// Raw spans, not yet validated.
    fn propose(&self, traj: &Trajectory, config: &EnvConfig) -> Result<Vec<Span>>;
}

/// Returns the ground-truth sub-task boundaries recorded on the trajectory.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleSegmenter;

impl SegmenterProvider for OracleSegmenter {
    fn name(&self) -> String {
        "oracle".to_string()
    }

    fn propose(&self, traj: &Trajectory, _config: &EnvConfig) -> Result<Vec<Span>> {
        traj.subtask_boundaries.clone().ok_or_else(|| {
            HplError::usage(format!("trajectory {} carries no sub-task boundaries", traj.task_id))
        })
    }
}

/// Posts the action list to an HTTP endpoint and parses the reply body.
#[derive(Debug, Clone)]
pub struct HttpSegmenter {
    pub endpoint: String,
    pub timeout: Duration,
}

impl HttpSegmenter {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpSegmenter { endpoint: endpoint.into(), timeout: Duration::from_secs(30) }
    }
}

impl SegmenterProvider for HttpSegmenter {
    fn name(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn propose(&self, traj: &Trajectory, config: &EnvConfig) -> Result<Vec<Span>> {
        let body = serde_json::to_string(&SegmenterRequest::for_trajectory(traj, config))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let raw = agent
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .send(body.as_str())
            .and_then(|resp| resp.into_body().read_to_string())
            .map_err(|e| HplError::Transport(format!("{}: {e}", self.endpoint)))?;
        parse_segmenter_response(&raw, traj.steps.len())
    }
}

/// Parses a raw reply of the form `[[start,end], ...]` and checks that the
/// spans partition `0..len`. Anything other than the bare array is rejected.
pub fn parse_segmenter_response(raw: &str, len: usize) -> Result<Vec<Span>> {
    let fail = |reason: String| HplError::Validation { reason, raw: raw.to_string() };
    let value: serde_json::Value =
        serde_json::from_str(raw).map_err(|e| fail(format!("not valid JSON: {e}")))?;
    let groups = value
        .as_array()
        .ok_or_else(|| fail("top level is not a JSON array".into()))?;
    if groups.is_empty() {
        return Err(fail("no groups returned".into()));
    }
    let mut spans = Vec::with_capacity(groups.len());
    for (i, g) in groups.iter().enumerate() {
        let pair = g
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| fail(format!("group {i} is not a [start, end] pair")))?;
        let mut ends = [0usize; 2];
        for (slot, v) in ends.iter_mut().zip(pair) {
            let n = v
                .as_u64()
                .ok_or_else(|| fail(format!("group {i} holds a non-integer or negative index")))?;
            *slot = usize::try_from(n).map_err(|_| fail(format!("group {i} index too large")))?;
        }
        spans.push(ends);
    }
    match validate_partition(&spans, len) {
        Ok(()) => Ok(spans),
        Err(HplError::Validation { reason, .. }) => Err(fail(reason)),
        Err(e) => Err(e),
    }
}

/// A provider failure that was replaced by the oracle segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackEvent {
    pub task_id: String,
    pub provider: String,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticOutcome {
    pub segmentation: Segmentation,
    pub fallback: Option<FallbackEvent>,
}

/// Segments with `provider`. With `fallback` set, a validation or transport
/// failure is replaced by the oracle boundaries and reported.
pub fn segment_semantic(
    traj: &Trajectory,
    config: &EnvConfig,
    provider: &dyn SegmenterProvider,
    endpoint: Option<&str>,
    fallback: bool,
) -> Result<SemanticOutcome> {
    let params = SegmenterSpec::Semantic { endpoint: endpoint.map(str::to_string) };
    let checked = provider.propose(traj, config).and_then(|spans| {
        validate_partition(&spans, traj.steps.len())?;
        Ok(spans)
    });
    match checked {
        Ok(boundaries) => Ok(SemanticOutcome {
            segmentation: Segmentation { params, boundaries },
            fallback: None,
        }),
        Err(err @ (HplError::Validation { .. } | HplError::Transport(_))) if fallback => {
            let boundaries = OracleSegmenter.propose(traj, config)?;
            validate_partition(&boundaries, traj.steps.len())?;
            log::warn!("segmenter {} failed on {}: {err}; using oracle", provider.name(), traj.task_id);
            let raw = match &err {
                HplError::Validation { raw, .. } => Some(raw.clone()),
                _ => None,
            };
            Ok(SemanticOutcome {
                segmentation: Segmentation { params, boundaries },
                fallback: Some(FallbackEvent {
                    task_id: traj.task_id.clone(),
                    provider: provider.name(),
                    reason: err.to_string(),
                    raw,
                }),
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::Step;

    fn traj(len: usize, bounds: Option<Vec<Span>>) -> Trajectory {
        Trajectory {
            task_id: "t0".into(),
            instruction: "x".into(),
            steps: (0..len).map(|i| Step { obs: i, action: 0, reward: 0.0 }).collect(),
            outcome_reward: 1.0,
            subtask_boundaries: bounds,
        }
    }

    struct Canned(&'static str);

    impl SegmenterProvider for Canned {
        fn name(&self) -> String {
            "canned".into()
        }
        fn propose(&self, traj: &Trajectory, _: &EnvConfig) -> Result<Vec<Span>> {
            parse_segmenter_response(self.0, traj.steps.len())
        }
    }

    #[test]
    fn accepts_documented_examples() {
        assert_eq!(
            parse_segmenter_response("[[0, 1], [2, 3], [4, 4]]", 5).unwrap(),
            vec![[0, 1], [2, 3], [4, 4]]
        );
        assert_eq!(parse_segmenter_response("[[0,0],[1,2],[3,4]]", 5).unwrap().len(), 3);
    }

    #[test]
    fn rejects_rule_violations() {
        let cases = [
            ("[[0,1],[3,4]]", "index 2 uncovered"),
            ("[[0,2],[2,4]]", "assigned twice"),
            ("[[0,1],[2,3]]", "index 4 uncovered"),
            ("[[0,1],[2,5]]", "out of range"),
            ("[[1,4]]", "index 0 uncovered"),
            ("[]", "no groups"),
            ("[[0,1,2],[3,4]]", "pair"),
            ("[[0,1.5],[2,4]]", "non-integer"),
            ("[[0,-1]]", "non-integer or negative"),
            ("{\"groups\": [[0,4]]}", "not a JSON array"),
            ("```json\n[[0,4]]\n```", "not valid JSON"),
            ("Here you go: [[0,4]]", "not valid JSON"),
            ("[[0,4]] done", "not valid JSON"),
        ];
        for (raw, needle) in cases {
            match parse_segmenter_response(raw, 5) {
                Err(HplError::Validation { reason, raw: r }) => {
                    assert!(reason.contains(needle), "{raw}: {reason}");
                    assert_eq!(r, raw);
                }
                other => panic!("{raw} was not rejected: {other:?}"),
            }
        }
    }

    #[test]
    fn oracle_passes_boundaries_through() {
        let cfg = EnvConfig::desk_standard();
        let t = traj(7, Some(vec![[0, 1], [2, 4], [5, 6]]));
        let out = segment_semantic(&t, &cfg, &OracleSegmenter, None, false).unwrap();
        assert_eq!(out.segmentation.boundaries, vec![[0, 1], [2, 4], [5, 6]]);
        assert!(out.fallback.is_none());
    }

    #[test]
    fn invalid_reply_falls_back_to_oracle() {
        let cfg = EnvConfig::desk_standard();
        let t = traj(5, Some(vec![[0, 2], [3, 4]]));
        let out = segment_semantic(&t, &cfg, &Canned("[[0,1],[3,4]]"), Some("x"), true).unwrap();
        assert_eq!(out.segmentation.boundaries, vec![[0, 2], [3, 4]]);
        let ev = out.fallback.unwrap();
        assert!(ev.reason.contains("index 2 uncovered"));
        assert_eq!(ev.raw.as_deref(), Some("[[0,1],[3,4]]"));
        assert!(segment_semantic(&t, &cfg, &Canned("[[0,1],[3,4]]"), None, false).is_err());
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let cfg = EnvConfig::desk_standard();
        let t = traj(3, Some(vec![[0, 2]]));
        let mut p = HttpSegmenter::new("http://127.0.0.1:9/segment");
        p.timeout = Duration::from_secs(2);
        assert!(matches!(p.propose(&t, &cfg), Err(HplError::Transport(_))));
        let out = segment_semantic(&t, &cfg, &p, Some(&p.endpoint), true).unwrap();
        assert!(out.fallback.is_some());
    }
}
