//! When and how each commit's observed label becomes available.
//!
//! Three regimes are simulated:
//!
//! * `ideal`: the true label is known at commit time.
//! * `non_hitl`: a commit is labeled defect when its bug-fixing commit
//!   arrives within `w_bfc`, otherwise clean once the window closes.
//! * `hitl`: commits predicted defect go to inspection and are labeled at
//!   `commit_time + w_qa`; all other commits follow the `non_hitl` path.
//!
//! Routing is exclusive: an inspected commit never takes the fix path, even
//! if its fix would arrive first.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{seed, CommitInstance, CommitStream, Label, DAY};

/// Window length meaning "never times out".
pub const UNBOUNDED: i64 = i64::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum LabelingError {
    #[error("commit {0} already has a pending label")]
    DuplicateCommit(u64),
    #[error("clock moved backwards from {previous} to {now}")]
    ClockRegression { previous: i64, now: i64 },
    #[error("label references unknown commit {0}")]
    UnknownCommit(u64),
    #[error("invalid labeling configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelingMode {
    Ideal,
    NonHitl,
    Hitl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelSource {
    Sqa,
    BfcFix,
    BfcTimeout,
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Queue {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelingConfig {
    pub mode: LabelingMode,
    /// Inspection delay in seconds.
    pub w_qa: i64,
    /// Fix waiting window in seconds; [`UNBOUNDED`] disables the timeout.
    pub w_bfc: i64,
    /// Probability that inspection reports the wrong label.
    pub sqa_error_rate: f64,
    pub sqa_seed: u64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            mode: LabelingMode::Hitl,
            w_qa: 7 * DAY,
            w_bfc: 15 * DAY,
            sqa_error_rate: 0.0,
            sqa_seed: 0,
        }
    }
}

impl LabelingConfig {
    pub fn with_mode(mode: LabelingMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LabelingError> {
        if self.w_qa < 0 || self.w_bfc < 0 {
            return Err(LabelingError::InvalidConfig(
                "waiting windows must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.sqa_error_rate) {
            return Err(LabelingError::InvalidConfig(format!(
                "sqa_error_rate {} outside [0, 1]",
                self.sqa_error_rate
            )));
        }
        Ok(())
    }

    fn queue_for(&self, routing: Label) -> Queue {
        if self.mode == LabelingMode::Hitl && routing == Label::Defect {
            Queue::Positive
        } else {
            Queue::Negative
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedLabel {
    pub commit_id: u64,
    pub label: Label,
    pub available_time: i64,
    pub source: LabelSource,
}

pub fn schedule_label(commit: &CommitInstance, routing: Label, cfg: &LabelingConfig) -> ObservedLabel {
    let t = commit.commit_time;
    let (label, available_time, source) = match (cfg.mode, cfg.queue_for(routing)) {
        (LabelingMode::Ideal, _) => (commit.label, t, LabelSource::Ideal),
        (_, Queue::Positive) => {
            let wrong = cfg.sqa_error_rate > 0.0
                && seed::uniform(cfg.sqa_seed, &[commit.id]) < cfg.sqa_error_rate;
            let label = if wrong { commit.label.flip() } else { commit.label };
            (label, t.saturating_add(cfg.w_qa), LabelSource::Sqa)
        }
        (_, Queue::Negative) => {
            let deadline = t.saturating_add(cfg.w_bfc);
            match commit.fix_time {
                Some(fix) if commit.label.is_defect() && fix <= deadline => {
                    (Label::Defect, fix, LabelSource::BfcFix)
                }
                _ => (Label::Clean, deadline, LabelSource::BfcTimeout),
            }
        }
    };
    ObservedLabel {
        commit_id: commit.id,
        label,
        available_time,
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingEntry {
    pub commit_id: u64,
    pub routing_prediction: Label,
    pub due_time: i64,
    pub queue: Queue,
    pub label: ObservedLabel,
}

impl PendingEntry {
    pub fn new(commit: &CommitInstance, routing: Label, cfg: &LabelingConfig) -> Self {
        let label = schedule_label(commit, routing, cfg);
        Self {
            commit_id: commit.id,
            routing_prediction: routing,
            due_time: label.available_time,
            queue: cfg.queue_for(routing),
            label,
        }
    }
}

/// Pending labels ordered by `(due_time, commit_id)`, each carrying a
/// caller payload that is handed back when the label fires.
#[derive(Debug, Clone)]
pub struct LabelEngine<P = ()> {
    pending: BTreeMap<(i64, u64), (ObservedLabel, P)>,
    seen: HashSet<u64>,
    clock: Option<i64>,
}

impl<P> Default for LabelEngine<P> {
    fn default() -> Self {
        Self {
            pending: BTreeMap::new(),
            seen: HashSet::new(),
            clock: None,
        }
    }
}

impl<P> LabelEngine<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_pending(&mut self, entry: PendingEntry, payload: P) -> Result<(), LabelingError> {
        if !self.seen.insert(entry.commit_id) {
            return Err(LabelingError::DuplicateCommit(entry.commit_id));
        }
        self.pending
            .insert((entry.due_time, entry.commit_id), (entry.label, payload));
        Ok(())
    }

    /// Remove and return every label available at or before `now`.
    pub fn due(&mut self, now: i64) -> Result<Vec<(ObservedLabel, P)>, LabelingError> {
        if let Some(previous) = self.clock {
            if now < previous {
                return Err(LabelingError::ClockRegression { previous, now });
            }
        }
        self.clock = Some(now);
        let later = match now.checked_add(1) {
            Some(bound) => self.pending.split_off(&(bound, 0)),
            None => BTreeMap::new(),
        };
        let ready = std::mem::replace(&mut self.pending, later);
        Ok(ready.into_values().collect())
    }

    pub fn due_labels(&mut self, now: i64) -> Result<Vec<ObservedLabel>, LabelingError> {
        Ok(self.due(now)?.into_iter().map(|(l, _)| l).collect())
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRates {
    pub overall: f64,
    pub on_defects: f64,
    pub n_labels: usize,
    pub n_defect_labels: usize,
}

/// Share of observed labels that differ from the truth, overall and among
/// truly defective commits. Empty groups report 0.
pub fn label_noise_rate(
    labels: &[ObservedLabel],
    truth: &CommitStream,
) -> Result<NoiseRates, LabelingError> {
    let by_id: HashMap<u64, Label> = truth.instances().iter().map(|c| (c.id, c.label)).collect();
    let (mut wrong, mut defects, mut wrong_defects) = (0usize, 0usize, 0usize);
    for l in labels {
        let t = *by_id
            .get(&l.commit_id)
            .ok_or(LabelingError::UnknownCommit(l.commit_id))?;
        let miss = l.label != t;
        wrong += miss as usize;
        if t.is_defect() {
            defects += 1;
            wrong_defects += miss as usize;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(NoiseRates {
        overall: ratio(wrong, labels.len()),
        on_defects: ratio(wrong_defects, defects),
        n_labels: labels.len(),
        n_defect_labels: defects,
    })
}
