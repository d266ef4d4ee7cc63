//! Greedy teaching: residual scoring, top-m selection, the batch-level (B)
//! and within-batch (S) selection rules, and the widening curriculum
//! schedule that drives when selection fires and how much data it keeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Level;
use ndarray::Array2;

/// Which selection rule a training run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// No selection: plain training on the full data.
    None,
    /// Keep whole batches with the largest mean residual.
    B,
    /// Keep the highest-residual graphs within each batch, then re-batch.
    S,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::None => write!(f, "none"),
            Variant::B => write!(f, "B"),
            Variant::S => write!(f, "S"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Variant::None),
            "B" | "b" => Ok(Variant::B),
            "S" | "s" => Ok(Variant::S),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionPolicy {
    pub variant: Variant,
    pub start_ratio: f64,
    pub level: Level,
}

impl SelectionPolicy {
    pub fn none(level: Level) -> SelectionPolicy {
        SelectionPolicy {
            variant: Variant::None,
            start_ratio: 1.0,
            level,
        }
    }

    pub fn new(variant: Variant, start_ratio: f64, level: Level) -> Result<SelectionPolicy> {
        if !(start_ratio > 0.0 && start_ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "start_ratio must lie in (0, 1], got {start_ratio}"
            )));
        }
        Ok(SelectionPolicy {
            variant,
            start_ratio,
            level,
        })
    }
}

/// One curriculum stage: from `epoch_start` (1-based, inclusive) selection
/// fires every `interval` epochs at `ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub epoch_start: usize,
    pub interval: usize,
    pub ratio: f64,
}

/// Selection-ratio/interval trajectory over a training run. Stages widen the
/// interval from 1 to the maximum and grow the ratio from the start ratio
/// to 1; there are 50 stages (or one per epoch for shorter runs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    stages: Vec<Stage>,
    total_epochs: usize,
}

pub const SCHEDULE_STAGES: usize = 50;

/// Builds the widening schedule. Interval grows linearly (rounded) from 1 to
/// `max_interval`, ratio linearly from `start_ratio` to 1, across
/// `min(50, total_epochs)` stages spanning the run.
pub fn build_schedule(
    start_ratio: f64,
    total_epochs: usize,
    max_interval: usize,
) -> Result<CurriculumSchedule> {
    if !(start_ratio > 0.0 && start_ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "start_ratio must lie in (0, 1], got {start_ratio}"
        )));
    }
    if total_epochs == 0 {
        return Ok(CurriculumSchedule {
            stages: Vec::new(),
            total_epochs: 0,
        });
    }
    let max_interval = max_interval.max(1);
    let count = SCHEDULE_STAGES.min(total_epochs);
    let mut stages = Vec::with_capacity(count);
    for s in 0..count {
        let frac = if count > 1 {
            s as f64 / (count - 1) as f64
        } else {
            0.0
        };
        let interval = (1.0 + (max_interval as f64 - 1.0) * frac).round() as usize;
        let ratio = start_ratio + (1.0 - start_ratio) * frac;
        let epoch_start = s * total_epochs / count + 1;
        stages.push(Stage {
            epoch_start,
            interval: interval.max(1),
            ratio: ratio.min(1.0),
        });
    }
    Ok(CurriculumSchedule {
        stages,
        total_epochs,
    })
}

impl CurriculumSchedule {
    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    /// Ratio to apply if a selection event fires at `epoch` (1-based).
    /// Events fire at each stage boundary and every `interval` epochs within
    /// the stage.
    pub fn event_at(&self, epoch: usize) -> Option<f64> {
        if epoch == 0 || epoch > self.total_epochs {
            return None;
        }
        let stage = self
            .stages
            .iter()
            .rev()
            .find(|st| st.epoch_start <= epoch)?;
        ((epoch - stage.epoch_start) % stage.interval == 0).then_some(stage.ratio)
    }
}

/// Per-graph residual scores.
///
/// Graph level: the Euclidean norm of the output residual (the absolute
/// difference in the scalar case). Node level: the Frobenius norm of the
/// residual matrix divided by the node count. Masked entries contribute
/// nothing. `outputs[i]` and `targets[i]` must have matching shapes; graph-
/// level values are single-row matrices.
pub fn residual_scores(
    outputs: &[Array2<f64>],
    targets: &[Array2<f64>],
    masks: Option<&[Option<Array2<bool>>]>,
    level: Level,
) -> Result<Vec<f64>> {
    if outputs.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} outputs vs {} targets",
            outputs.len(),
            targets.len()
        )));
    }
    if let Some(m) = masks {
        if m.len() != outputs.len() {
            return Err(Error::InvalidArgument("mask list length mismatch".into()));
        }
    }
    outputs
        .iter()
        .zip(targets.iter())
        .enumerate()
        .map(|(i, (o, t))| {
            if o.dim() != t.dim() {
                return Err(Error::Shape(format!(
                    "graph {i}: output {:?} vs target {:?}",
                    o.dim(),
                    t.dim()
                )));
            }
            let mask = masks.and_then(|m| m[i].as_ref());
            let mut sq = 0.0;
            for ((r, c), &ov) in o.indexed_iter() {
                if mask.map(|m| !m[(r, c)]).unwrap_or(false) {
                    continue;
                }
                let d = ov - t[(r, c)];
                sq += d * d;
            }
            let norm = sq.sqrt();
            Ok(match level {
                Level::Graph => norm,
                Level::Node => norm / o.nrows() as f64,
            })
        })
        .collect()
}

/// Indices of the `m` largest scores, in descending score order with ties
/// broken toward the lower index (the first `m` entries of a stable
/// descending sort).
pub fn select_top_m(scores: &[f64], m: usize) -> Result<Vec<usize>> {
    if m > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot select {m} of {} scores",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(m);
    Ok(order)
}

/// Batch-level selection: keep the `m_batches` batches with the largest mean
/// residual, returned in original batch order.
pub fn select_batches_b(batch_scores: &[f64], m_batches: usize) -> Result<Vec<usize>> {
    let mut selected = select_top_m(batch_scores, m_batches)?;
    selected.sort_unstable();
    Ok(selected)
}

/// Within-batch selection: keep the top `ceil(ratio * |batch|)` graphs of
/// each batch by score, concatenate (original batch order, then score order
/// within a batch), and repack into batches of `batch_size`.
///
/// `batches` holds graph indices; `scores` is indexed by graph index.
pub fn select_graphs_s(
    batches: &[Vec<usize>],
    scores: &[f64],
    ratio: f64,
    batch_size: usize,
) -> Result<Vec<Vec<usize>>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ratio must lie in (0, 1], got {ratio}"
        )));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let mut kept = Vec::new();
    for (bi, batch) in batches.iter().enumerate() {
        if batch.is_empty() {
            return Err(Error::InvalidArgument(format!("batch {bi} is empty")));
        }
        let keep = ((ratio * batch.len() as f64).ceil() as usize).clamp(1, batch.len());
        let local_scores: Vec<f64> = batch
            .iter()
            .map(|&gi| {
                scores.get(gi).copied().ok_or_else(|| {
                    Error::InvalidArgument(format!("graph index {gi} has no score"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for pos in select_top_m(&local_scores, keep)? {
            kept.push(batch[pos]);
        }
    }
    Ok(kept.chunks(batch_size).map(|c| c.to_vec()).collect())
}
