use serde::{Deserialize, Serialize};

use crate::envsim::{Span, Trajectory};
use crate::error::{HplError, Result};
use crate::policy::PolicyParams;

/// A segmentation strategy together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SegmenterSpec {
    FixedN { n: usize },
    FixedK { k: usize },
    /// Entropy threshold given directly.
    Uncertainty { threshold: f64 },
    /// Entropy threshold calibrated as a quantile of the expert state entropies.
    UncertaintyQuantile { quantile: f64 },
    /// External annotator at `endpoint`, or the ground-truth oracle when unset.
    Semantic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        endpoint: Option<String>,
    },
}

impl Default for SegmenterSpec {
    fn default() -> Self {
        SegmenterSpec::Uncertainty { threshold: 0.0 }
    }
}

impl SegmenterSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SegmenterSpec::FixedN { .. } => "fixed_n",
            SegmenterSpec::FixedK { .. } => "fixed_k",
            SegmenterSpec::Uncertainty { .. } | SegmenterSpec::UncertaintyQuantile { .. } => {
                "uncertainty"
            }
            SegmenterSpec::Semantic { .. } => "semantic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SegmenterSpec::FixedN { n: 0 } => Err(HplError::usage("fixed_n requires n >= 1")),
            SegmenterSpec::FixedK { k: 0 } => Err(HplError::usage("fixed_k requires k >= 1")),
            SegmenterSpec::Uncertainty { threshold } if !threshold.is_finite() => {
                Err(HplError::usage("uncertainty threshold must be finite"))
            }
            SegmenterSpec::UncertaintyQuantile { quantile }
                if !(quantile > 0.0 && quantile < 1.0) =>
            {
                Err(HplError::usage(format!(
                    "entropy quantile must lie in (0, 1), got {quantile}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Boundaries produced by one strategy on one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub params: SegmenterSpec,
    pub boundaries: Vec<Span>,
}

impl Segmentation {
    pub fn strategy(&self) -> &'static str {
        self.params.name()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.boundaries.iter().map(|s| s[1] - s[0] + 1).collect()
    }
}

/// Checks that `spans` are contiguous, disjoint and cover `0..len` exactly.
pub fn validate_partition(spans: &[Span], len: usize) -> Result<()> {
    let fail = |reason: String| Err(HplError::Validation { reason, raw: format!("{spans:?}") });
    if len == 0 {
        return if spans.is_empty() { Ok(()) } else { fail("spans given for an empty trajectory".into()) };
    }
    let mut next = 0usize;
    for s in spans {
        if s[0] > s[1] {
            return fail(format!("span [{}, {}] has start after end", s[0], s[1]));
        }
        if s[1] >= len {
            return fail(format!("index {} out of range for length {len}", s[1]));
        }
        if s[0] > next {
            return fail(format!("index {next} uncovered"));
        }
        if s[0] < next {
            return fail(format!("index {} assigned twice", s[0]));
        }
        next = s[1] + 1;
    }
    if next != len {
        return fail(format!("index {next} uncovered"));
    }
    Ok(())
}

fn spans_from_sizes(sizes: impl IntoIterator<Item = usize>) -> Vec<Span> {
    let mut start = 0;
    sizes
        .into_iter()
        .map(|n| {
            let span = [start, start + n - 1];
            start += n;
            span
        })
        .collect()
}

fn non_empty(traj: &Trajectory) -> Result<usize> {
    match traj.steps.len() {
        0 => Err(HplError::usage(format!("trajectory {} has no steps", traj.task_id))),
        n => Ok(n),
    }
}

/// `n` near-equal spans; the first `len % n` spans carry the extra step.
pub fn segment_fixed_n(traj: &Trajectory, n: usize) -> Result<Segmentation> {
    let len = non_empty(traj)?;
    if n == 0 || n > len {
        return Err(HplError::usage(format!(
            "fixed_n needs 1 <= n <= {len}, got n = {n}"
        )));
    }
    let (base, rem) = (len / n, len % n);
    let boundaries = spans_from_sizes((0..n).map(|i| base + usize::from(i < rem)));
    Ok(Segmentation { params: SegmenterSpec::FixedN { n }, boundaries })
}

/// Spans of `k` steps with a shorter final remainder.
pub fn segment_fixed_k(traj: &Trajectory, k: usize) -> Result<Segmentation> {
    let len = non_empty(traj)?;
    if k == 0 {
        return Err(HplError::usage("fixed_k requires k >= 1"));
    }
    let boundaries = spans_from_sizes((0..len).step_by(k).map(|s| k.min(len - s)));
    Ok(Segmentation { params: SegmenterSpec::FixedK { k }, boundaries })
}

/// Opens a new span before every step `t >= 1` whose entropy strictly exceeds
/// `threshold`.
pub fn segment_by_entropies(entropies: &[f64], threshold: f64) -> Vec<Span> {
    if entropies.is_empty() {
        return Vec::new();
    }
    let mut spans = Vec::new();
    let mut start = 0;
    for (t, &h) in entropies.iter().enumerate().skip(1) {
        if h > threshold {
            spans.push([start, t - 1]);
            start = t;
        }
    }
    spans.push([start, entropies.len() - 1]);
    spans
}

fn step_entropies(traj: &Trajectory, reference: &PolicyParams) -> Result<Vec<f64>> {
    traj.steps.iter().map(|s| reference.state_entropy(s.obs)).collect()
}

pub fn segment_uncertainty(
    traj: &Trajectory,
    reference: &PolicyParams,
    threshold: f64,
) -> Result<Segmentation> {
    non_empty(traj)?;
    if !threshold.is_finite() {
        return Err(HplError::usage("uncertainty threshold must be finite"));
    }
    let entropies = step_entropies(traj, reference)?;
    Ok(Segmentation {
        params: SegmenterSpec::Uncertainty { threshold },
        boundaries: segment_by_entropies(&entropies, threshold),
    })
}

/// Nearest-rank `q` quantile of the reference entropy over every visited state.
pub fn calibrate_entropy_threshold(
    dataset: &[Trajectory],
    reference: &PolicyParams,
    q: f64,
) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(HplError::usage(format!("quantile must lie in (0, 1), got {q}")));
    }
    let mut pool = Vec::new();
    for traj in dataset {
        pool.extend(step_entropies(traj, reference)?);
    }
    if pool.is_empty() {
        return Err(HplError::usage("no visited states to calibrate the entropy threshold"));
    }
    pool.sort_by(f64::total_cmp);
    let n = pool.len();
    let rank = ((q * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(pool[rank - 1])
}
