//! k-fold distributed validation and the delayed-label prequential loop.
//!
//! Every fold is an independent deployment: it owns a learner, a label
//! engine and a fading confusion matrix. For each arriving commit every fold
//! predicts; the fold's own prediction routes the commit's label, and the
//! fold's role for that commit decides whether the label is used to
//! evaluate the stored prediction, to train, or both.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::labeling::{LabelEngine, LabelingConfig, LabelingError, ObservedLabel, PendingEntry};
use crate::learners::{Learner, LearnerConfig, LearnerError};
use crate::prequential::{FadingConfusion, MetricSnapshot};
use crate::{seed, CommitStream, Label};

const ROLE_KEY: u64 = 0xB007;
const LEARNER_KEY: u64 = 0x1EA2;
pub const DEFAULT_CHECKPOINTS: usize = 10;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("invalid validation configuration: {0}")]
    InvalidConfig(String),
    #[error("stream is empty")]
    EmptyStream,
    #[error(transparent)]
    Labeling(#[from] LabelingError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Cross,
    Split,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub strategy: Strategy,
    pub k: usize,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Bootstrap,
            k: 10,
            seed: 0,
        }
    }
}

impl ValidationConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.k < 2 {
            return Err(ValidationError::InvalidConfig(format!("k = {} < 2", self.k)));
        }
        Ok(())
    }

    /// Hash identifying the role assignment; equal hashes mean paired folds.
    pub fn roles_hash(&self) -> String {
        short_hash(&serde_json::to_vec(self).expect("serializable"))
    }
}

fn short_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Inverse-CDF Poisson(1) draw from a uniform.
fn poisson1(u: f64) -> u32 {
    let mut k = 0;
    let mut p = (-1.0f64).exp();
    let mut cdf = p;
    while u >= cdf && k < 64 {
        k += 1;
        p /= k as f64;
        cdf += p;
    }
    k
}

/// Role of one fold for one instance: `(train_weight, is_test)`.
pub fn fold_role(cfg: &ValidationConfig, fold: usize, index: u64) -> (u32, bool) {
    let k = cfg.k as u64;
    let f = fold as u64;
    match cfg.strategy {
        Strategy::Cross => {
            let test = index % k == f;
            (u32::from(!test), test)
        }
        Strategy::Split => {
            let train = index % k == f;
            (u32::from(train), !train)
        }
        Strategy::Bootstrap => {
            let w = poisson1(seed::uniform(cfg.seed, &[ROLE_KEY, f, index]));
            (w, w == 0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldRoles {
    pub train_weight: Vec<u32>,
    pub is_test: Vec<bool>,
}

pub fn assign_roles(cfg: &ValidationConfig, index: u64) -> FoldRoles {
    let (train_weight, is_test) = (0..cfg.k).map(|f| fold_role(cfg, f, index)).unzip();
    FoldRoles {
        train_weight,
        is_test,
    }
}

/// Empirical role fractions over a log of assignments.
///
/// Two pairwise overlap measures are reported, averaged over ordered fold
/// pairs: `joint_overlap` is `|train_i ∩ train_j| / N` and
/// `conditional_overlap` is `|train_i ∩ train_j| / |train_i|`.
/// `pairwise_overlap` follows the customary convention per strategy: the
/// conditional share for cross-validation and the joint share otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub instances: usize,
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub joint_overlap: f64,
    pub conditional_overlap: f64,
    pub pairwise_overlap: f64,
}

pub fn fold_overlap_stats(strategy: Strategy, roles_log: &[FoldRoles]) -> OverlapStats {
    let n = roles_log.len();
    let k = roles_log.first().map_or(0, |r| r.train_weight.len());
    let mut train = vec![0usize; k];
    let mut test = vec![0usize; k];
    let mut both = vec![vec![0usize; k]; k];
    for r in roles_log {
        for i in 0..k {
            let ti = r.train_weight[i] > 0;
            train[i] += ti as usize;
            test[i] += r.is_test[i] as usize;
            if ti {
                for j in (i + 1)..k {
                    both[i][j] += (r.train_weight[j] > 0) as usize;
                }
            }
        }
    }
    let nf = n.max(1) as f64;
    let kf = k.max(1) as f64;
    let (mut joint, mut cond, mut pairs) = (0.0, 0.0, 0.0);
    for i in 0..k {
        for j in (i + 1)..k {
            let b = both[i][j] as f64;
            joint += 2.0 * b / nf;
            for t in [train[i], train[j]] {
                if t > 0 {
                    cond += b / t as f64;
                }
            }
            pairs += 2.0;
        }
    }
    let joint_overlap = if pairs > 0.0 { joint / pairs } else { 0.0 };
    let conditional_overlap = if pairs > 0.0 { cond / pairs } else { 0.0 };
    OverlapStats {
        instances: n,
        train_fraction: train.iter().sum::<usize>() as f64 / (nf * kf),
        test_fraction: test.iter().sum::<usize>() as f64 / (nf * kf),
        joint_overlap,
        conditional_overlap,
        pairwise_overlap: match strategy {
            Strategy::Cross => conditional_overlap,
            Strategy::Split | Strategy::Bootstrap => joint_overlap,
        },
    }
}

/// Evaluation positions as counts of processed commits: `⌊jN/m⌋` for
/// `j = 1..=m`, without zeros or duplicates.
pub fn default_checkpoints(n: usize, m: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (1..=m).map(|j| j * n / m).filter(|&c| c > 0).collect();
    v.dedup();
    v
}

/// One confusion update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEvent {
    /// Arrival index of the commit being processed when the label fired.
    pub at_index: usize,
    pub sim_time: i64,
    pub fold: usize,
    /// Index of the evaluated commit.
    pub commit_index: usize,
    pub predicted: Label,
    pub observed: Label,
    pub snapshot: MetricSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub k: usize,
    pub n_instances: usize,
    pub stream_fingerprint: String,
    pub roles_hash: String,
    pub config_hash: String,
    /// Merged by `(at_index, fold)`, preserving per-fold order.
    pub events: Vec<EvalEvent>,
    pub checkpoints: Vec<usize>,
    /// `[checkpoint][fold]` fading G-mean.
    pub checkpoint_gmeans: Vec<Vec<f64>>,
    /// `[fold][commit]` fading G-mean after the commit was processed.
    pub fold_gmeans: Vec<Vec<f64>>,
    pub final_snapshots: Vec<MetricSnapshot>,
    /// `[fold]` observed labels in emission order.
    pub label_log: Vec<Vec<ObservedLabel>>,
    /// `[fold]` `(commit_index, prediction matched observed label)` per
    /// evaluation, in evaluation order.
    pub outcomes: Vec<Vec<(usize, bool)>>,
    /// `[fold]` labels still pending at stream end.
    pub unresolved: Vec<usize>,
}

impl RunTrace {
    /// Cross-fold mean G-mean after commit `index`.
    pub fn mean_gmean_at(&self, index: usize) -> f64 {
        self.fold_gmeans.iter().map(|g| g[index]).sum::<f64>() / self.k as f64
    }

    pub fn final_mean_gmean(&self) -> f64 {
        self.mean_gmean_at(self.n_instances - 1)
    }

    /// Cross-fold mean of each indicator at stream end.
    pub fn final_mean_snapshot(&self) -> MetricSnapshot {
        let k = self.k as f64;
        let s = &self.final_snapshots;
        MetricSnapshot {
            r0: s.iter().map(|m| m.r0).sum::<f64>() / k,
            r1: s.iter().map(|m| m.r1).sum::<f64>() / k,
            fpr: s.iter().map(|m| m.fpr).sum::<f64>() / k,
            gmean: s.iter().map(|m| m.gmean).sum::<f64>() / k,
            r0_defined: s.iter().all(|m| m.r0_defined),
            r1_defined: s.iter().all(|m| m.r1_defined),
        }
    }
}

struct Pending {
    index: usize,
    predicted: Label,
    train_weight: u32,
    is_test: bool,
}

struct FoldRun {
    events: Vec<EvalEvent>,
    checkpoint_gmeans: Vec<f64>,
    gmeans: Vec<f64>,
    final_snapshot: MetricSnapshot,
    labels: Vec<ObservedLabel>,
    outcomes: Vec<(usize, bool)>,
    unresolved: usize,
}

struct FoldSetup<'a> {
    stream: &'a CommitStream,
    validation: &'a ValidationConfig,
    labeling: &'a LabelingConfig,
    alpha: f64,
    checkpoints: &'a [usize],
}

fn run_fold(
    s: &FoldSetup<'_>,
    fold: usize,
    mut learner: Box<dyn Learner>,
) -> Result<FoldRun, ValidationError> {
    let insts = s.stream.instances();
    let mut engine: LabelEngine<Pending> = LabelEngine::new();
    let mut confusion = FadingConfusion::new(s.alpha);
    let mut out = FoldRun {
        events: Vec::new(),
        checkpoint_gmeans: Vec::with_capacity(s.checkpoints.len()),
        gmeans: Vec::with_capacity(insts.len()),
        final_snapshot: MetricSnapshot::UNDEFINED,
        labels: Vec::with_capacity(insts.len()),
        outcomes: Vec::new(),
        unresolved: 0,
    };
    let mut next_cp = 0;

    let drain = |engine: &mut LabelEngine<Pending>,
                     learner: &mut Box<dyn Learner>,
                     confusion: &mut FadingConfusion,
                     out: &mut FoldRun,
                     at: usize,
                     now: i64|
     -> Result<(), ValidationError> {
        for (obs, p) in engine.due(now)? {
            out.labels.push(obs);
            if p.is_test {
                confusion.update(p.predicted, obs.label);
                out.outcomes.push((p.index, p.predicted == obs.label));
                out.events.push(EvalEvent {
                    at_index: at,
                    sim_time: obs.available_time,
                    fold,
                    commit_index: p.index,
                    predicted: p.predicted,
                    observed: obs.label,
                    snapshot: confusion.metrics(),
                });
            }
            if p.train_weight > 0 {
                learner.train(&insts[p.index].features, obs.label, p.train_weight);
            }
        }
        Ok(())
    };

    for (i, c) in insts.iter().enumerate() {
        let now = c.commit_time;
        drain(&mut engine, &mut learner, &mut confusion, &mut out, i, now)?;
        let predicted = learner.predict(&c.features).label;
        let (train_weight, is_test) = fold_role(s.validation, fold, i as u64);
        engine.push_pending(
            PendingEntry::new(c, predicted, s.labeling),
            Pending {
                index: i,
                predicted,
                train_weight,
                is_test,
            },
        )?;
        // labels available at arrival time are handled before the next commit
        drain(&mut engine, &mut learner, &mut confusion, &mut out, i, now)?;
        let gmean = confusion.metrics().gmean;
        out.gmeans.push(gmean);
        while next_cp < s.checkpoints.len() && s.checkpoints[next_cp] == i + 1 {
            out.checkpoint_gmeans.push(gmean);
            next_cp += 1;
        }
    }
    out.final_snapshot = confusion.metrics();
    out.unresolved = engine.pending_len();
    Ok(out)
}

/// Run the prequential loop with a caller-supplied learner per fold.
pub fn run_prequential_with(
    stream: &CommitStream,
    make_learner: &(dyn Fn(usize) -> Result<Box<dyn Learner>, LearnerError> + Sync),
    validation: &ValidationConfig,
    labeling: &LabelingConfig,
    alpha: f64,
    checkpoints: &[usize],
    config_hash: String,
) -> Result<RunTrace, ValidationError> {
    validation.validate()?;
    labeling.validate()?;
    if stream.is_empty() {
        return Err(ValidationError::EmptyStream);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ValidationError::InvalidConfig(format!("alpha {alpha} outside (0, 1]")));
    }
    let n = stream.len();
    let mut cps: Vec<usize> = checkpoints.iter().copied().filter(|&c| c >= 1 && c <= n).collect();
    cps.sort_unstable();
    cps.dedup();
    let setup = FoldSetup {
        stream,
        validation,
        labeling,
        alpha,
        checkpoints: &cps,
    };
    let folds: Vec<FoldRun> = (0..validation.k)
        .into_par_iter()
        .map(|f| run_fold(&setup, f, make_learner(f)?))
        .collect::<Result<_, _>>()?;

    let mut events: Vec<EvalEvent> = Vec::with_capacity(folds.iter().map(|f| f.events.len()).sum());
    let mut checkpoint_gmeans = vec![Vec::with_capacity(validation.k); cps.len()];
    let mut fold_gmeans = Vec::with_capacity(validation.k);
    let mut final_snapshots = Vec::with_capacity(validation.k);
    let mut label_log = Vec::with_capacity(validation.k);
    let mut outcomes = Vec::with_capacity(validation.k);
    let mut unresolved = Vec::with_capacity(validation.k);
    for f in folds {
        events.extend(f.events);
        for (c, g) in f.checkpoint_gmeans.into_iter().enumerate() {
            checkpoint_gmeans[c].push(g);
        }
        fold_gmeans.push(f.gmeans);
        final_snapshots.push(f.final_snapshot);
        label_log.push(f.labels);
        outcomes.push(f.outcomes);
        unresolved.push(f.unresolved);
    }
    events.sort_by_key(|e| (e.at_index, e.fold));

    Ok(RunTrace {
        k: validation.k,
        n_instances: n,
        stream_fingerprint: stream.fingerprint(),
        roles_hash: validation.roles_hash(),
        config_hash,
        events,
        checkpoints: cps,
        checkpoint_gmeans,
        fold_gmeans,
        final_snapshots,
        label_log,
        outcomes,
        unresolved,
    })
}

/// Run the prequential loop, building fold `f`'s learner with seed
/// `derive(learner.seed, f)`.
pub fn run_prequential(
    stream: &CommitStream,
    learner: &LearnerConfig,
    validation: &ValidationConfig,
    labeling: &LabelingConfig,
    alpha: f64,
    checkpoints: &[usize],
) -> Result<RunTrace, ValidationError> {
    learner.validate()?;
    let config_hash = short_hash(
        &serde_json::to_vec(&(learner, validation, labeling, alpha, checkpoints))
            .expect("serializable"),
    );
    let make = |f: usize| learner.build(seed::derive(learner.seed, &[LEARNER_KEY, f as u64]));
    run_prequential_with(stream, &make, validation, labeling, alpha, checkpoints, config_hash)
}
