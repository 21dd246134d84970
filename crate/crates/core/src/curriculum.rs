//! Difficulty-aware curriculum over group pairs.
//!
//! Pairs are binned on two axes, group length `L` and reward gap `ΔR`, into a
//! 3×3 grid. Training phases unlock buckets from short-and-easy outwards.

use serde::{Deserialize, Serialize};

use crate::error::{HplError, Result};
use crate::prefgen::GroupPair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumThresholds {
    /// Ascending `(l0, l1, l2)`.
    pub length_edges: [usize; 3],
    /// Descending `(d0, d1, d2)`; `d0` is the largest admissible gap.
    pub difficulty_edges: [f64; 3],
}

impl Default for CurriculumThresholds {
    fn default() -> Self {
        CurriculumThresholds { length_edges: [0, 3, 6], difficulty_edges: [1.0, 0.7, 0.4] }
    }
}

impl CurriculumThresholds {
    pub fn validate(&self) -> Result<()> {
        let [l0, l1, l2] = self.length_edges;
        let [d0, d1, d2] = self.difficulty_edges;
        if !(l0 < l1 && l1 < l2) {
            return Err(HplError::config(format!(
                "length edges must be strictly ascending, got {:?}",
                self.length_edges
            )));
        }
        if !(d0 > d1 && d1 > d2 && d2 >= 0.0) {
            return Err(HplError::config(format!(
                "difficulty edges must be strictly descending and non-negative, got {:?}",
                self.difficulty_edges
            )));
        }
        Ok(())
    }

    /// Length level in `1..=3`; lengths at or below `l0` are rejected.
    pub fn length_level(&self, length: usize) -> Result<usize> {
        let [l0, l1, l2] = self.length_edges;
        match length {
            n if n <= l0 => Err(HplError::usage(format!(
                "group length {n} is not above the lowest edge {l0}"
            ))),
            n if n <= l1 => Ok(1),
            n if n <= l2 => Ok(2),
            _ => Ok(3),
        }
    }

    /// Difficulty level in `1..=3`; `1` is the easiest (largest gap).
    pub fn difficulty_level(&self, delta_r: f64) -> Result<usize> {
        let [d0, d1, d2] = self.difficulty_edges;
        if delta_r.is_nan() || delta_r <= 0.0 {
            return Err(HplError::usage(format!("reward gap {delta_r} is not positive")));
        }
        if delta_r > d0 {
            return Err(HplError::usage(format!("reward gap {delta_r} exceeds the cap {d0}")));
        }
        Ok(if delta_r >= d1 {
            1
        } else if delta_r >= d2 {
            2
        } else {
            3
        })
    }
}

/// Bucket coordinates `(L, D)`, each in `1..=3`.
pub type Cell = (usize, usize);

pub fn assign_bucket(pair: &GroupPair, thresholds: &CurriculumThresholds) -> Result<Cell> {
    Ok((thresholds.length_level(pair.length)?, thresholds.difficulty_level(pair.delta_r)?))
}

/// Buckets active in phase `s`.
pub fn phase_cells(s: usize) -> Result<Vec<Cell>> {
    match s {
        1 => Ok(vec![(1, 1)]),
        2 => Ok(vec![(1, 1), (1, 2), (2, 1)]),
        3 => Ok((1..=3).flat_map(|l| (1..=3).map(move |d| (l, d))).collect()),
        _ => Err(HplError::usage(format!("phase must be 1, 2 or 3, got {s}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumMatrix {
    /// `buckets[L-1][D-1]`, each in input order.
    pub buckets: [[Vec<GroupPair>; 3]; 3],
    pub thresholds: CurriculumThresholds,
}

impl CurriculumMatrix {
    pub fn bucket(&self, (l, d): Cell) -> &[GroupPair] {
        &self.buckets[l - 1][d - 1]
    }

    pub fn counts(&self) -> [[usize; 3]; 3] {
        let mut c = [[0; 3]; 3];
        for (l, row) in self.buckets.iter().enumerate() {
            for (d, b) in row.iter().enumerate() {
                c[l][d] = b.len();
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.counts().iter().flatten().sum()
    }

    pub fn summary(&self) -> MatrixSummary {
        MatrixSummary {
            thresholds: self.thresholds,
            counts: self.counts(),
            total: self.total(),
            phases: (1..=3)
                .map(|s| {
                    let cells = phase_cells(s).expect("valid phase");
                    let size = cells.iter().map(|&c| self.bucket(c).len()).sum();
                    PhaseSummary { phase: s, cells, size }
                })
                .collect(),
        }
    }
}

pub fn build_matrix(pairs: &[GroupPair], thresholds: &CurriculumThresholds) -> Result<CurriculumMatrix> {
    thresholds.validate()?;
    let mut buckets: [[Vec<GroupPair>; 3]; 3] = Default::default();
    for p in pairs {
        let (l, d) = assign_bucket(p, thresholds)?;
        buckets[l - 1][d - 1].push(p.clone());
    }
    Ok(CurriculumMatrix { buckets, thresholds: *thresholds })
}

/// Concatenation of the buckets active in phase `s`, in [`phase_cells`] order.
pub fn phase_dataset(matrix: &CurriculumMatrix, s: usize) -> Result<Vec<GroupPair>> {
    let cells = phase_cells(s)?;
    let data: Vec<GroupPair> = cells.iter().flat_map(|&c| matrix.bucket(c).iter().cloned()).collect();
    if data.is_empty() {
        log::warn!("curriculum phase {s} has no active pairs");
    }
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: usize,
    pub cells: Vec<Cell>,
    pub size: usize,
}

/// JSON view of a matrix: thresholds, per-cell counts and the phase plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub thresholds: CurriculumThresholds,
    /// `counts[L-1][D-1]`.
    pub counts: [[usize; 3]; 3],
    pub total: usize,
    pub phases: Vec<PhaseSummary>,
}
