use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{files, EvalBundle};
use crate::curriculum::MatrixSummary;
use crate::error::{HplError, Result};
use crate::io::read_json;

/// Artifacts of one finished run that reports draw on.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub label: String,
    pub eval: EvalBundle,
    pub curriculum: MatrixSummary,
}

impl RunArtifacts {
    /// Loads a run directory, naming every missing artifact in the error.
    pub fn load(label: &str, dir: &Path) -> Result<Self> {
        let needed = [files::EVAL, files::CURRICULUM, files::TRAIN_REPORT];
        let missing: Vec<PathBuf> = needed.iter().map(|n| dir.join(n)).filter(|p| !p.exists()).collect();
        if !missing.is_empty() {
            let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
            return Err(HplError::usage(format!("missing artifacts: {}", list.join(", "))));
        }
        Ok(RunArtifacts {
            label: label.to_string(),
            eval: read_json(&dir.join(files::EVAL))?,
            curriculum: read_json(&dir.join(files::CURRICULUM))?,
        })
    }
}

/// CSV tables derived from finished runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// `run,phase,success_rate,mean_outcome`; one row per phase per run.
    pub phases: String,
    /// `run,length_level,difficulty_level,count`.
    pub buckets: String,
    /// `metric,<arm>...`; present when arms were given.
    pub ablation: Option<String>,
}

/// Builds the phase-progression table and bucket census over `runs`, and the
/// side-by-side comparison over `arms`.
pub fn build_report(runs: &[RunArtifacts], arms: &[RunArtifacts]) -> Result<Report> {
    if runs.is_empty() && arms.is_empty() {
        return Err(HplError::usage("report needs at least one run"));
    }
    let mut phases = String::from("run,phase,success_rate,mean_outcome\n");
    let mut buckets = String::from("run,length_level,difficulty_level,count\n");
    for run in runs.iter().chain(arms) {
        for (i, e) in run.eval.phases.iter().enumerate() {
            let _ = writeln!(phases, "{},{},{},{}", run.label, i + 1, e.success_rate, e.mean_outcome);
        }
        for (l, row) in run.curriculum.counts.iter().enumerate() {
            for (d, count) in row.iter().enumerate() {
                let _ = writeln!(buckets, "{},{},{},{count}", run.label, l + 1, d + 1);
            }
        }
    }
    let ablation = (!arms.is_empty()).then(|| {
        let mut out = String::from("metric");
        for arm in arms {
            let _ = write!(out, ",{}", arm.label);
        }
        out.push('\n');
        type Metric = fn(&EvalBundle) -> f64;
        let metrics: [(&str, Metric); 3] = [
            ("success_rate", |e| e.final_policy.success_rate),
            ("mean_outcome", |e| e.final_policy.mean_outcome),
            ("reference_success_rate", |e| e.reference.success_rate),
        ];
        for (name, f) in metrics {
            out.push_str(name);
            for arm in arms {
                let _ = write!(out, ",{}", f(&arm.eval));
            }
            out.push('\n');
        }
        out
    });
    Ok(Report { phases, buckets, ablation })
}
