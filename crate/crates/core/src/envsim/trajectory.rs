use std::io::BufRead;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HplError, Result};

/// Inclusive `[start, end]` step-index span.
pub type Span = [usize; 2];

/// One transition as recorded in a trajectory: the observation the action was
/// taken in, the action, and the reward it produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub obs: usize,
    pub action: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub instruction: String,
    pub steps: Vec<Step>,
    pub outcome_reward: f64,
    /// Ground-truth sub-task spans; only the scripted expert fills these.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask_boundaries: Option<Vec<Span>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    crate::io::write_jsonl(path, records)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| HplError::io(path, e))?;
    let mut records = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| HplError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
