//! Experiments composed from the prequential loop: evaluation validity,
//! waiting-time sweeps, Type I/II error rates of the paired tests, paired
//! real-time comparisons and the resampling study.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{LabelingConfig, LabelingMode};
use crate::learners::{BaseKind, LearnerConfig, LearnerKind};
use crate::prequential::DEFAULT_ALPHA;
use crate::stats::{
    sign_test, wilcoxon_signed_rank, McNemarState, PairedObservations, TestKind,
    TestResult, DEFAULT_SIGNIFICANCE,
};
use crate::validation::{
    default_checkpoints, run_prequential, RunTrace, ValidationConfig, ValidationError,
    DEFAULT_CHECKPOINTS,
};
use crate::{seed, CommitStream};

pub const THREADS_ENV: &str = "DRIFTGATE_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("traces are not paired: {0}")]
    TraceMismatch(String),
    #[error("the Type I probe needs a randomized learner")]
    NonRandomizedLearner,
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

type Result<T> = std::result::Result<T, HarnessError>;

/// Everything a single prequential run needs besides the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub learner: LearnerConfig,
    pub validation: ValidationConfig,
    pub labeling: LabelingConfig,
    pub alpha: f64,
    /// Explicit checkpoints as counts of processed commits; tenths of the
    /// stream when absent.
    pub checkpoints: Option<Vec<usize>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            learner: LearnerConfig::default(),
            validation: ValidationConfig::default(),
            labeling: LabelingConfig::default(),
            alpha: DEFAULT_ALPHA,
            checkpoints: None,
        }
    }
}

impl ExperimentConfig {
    pub fn checkpoints_for(&self, n: usize) -> Vec<usize> {
        self.checkpoints
            .clone()
            .unwrap_or_else(|| default_checkpoints(n, DEFAULT_CHECKPOINTS))
    }

    pub fn run(&self, stream: &CommitStream) -> Result<RunTrace> {
        Ok(run_prequential(
            stream,
            &self.learner,
            &self.validation,
            &self.labeling,
            self.alpha,
            &self.checkpoints_for(stream.len()),
        )?)
    }

    fn with_labeling(&self, labeling: LabelingConfig) -> Self {
        Self {
            labeling,
            ..self.clone()
        }
    }
}

/// Thread cap from `DRIFTGATE_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

/// Run `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

fn check_paired(a: &RunTrace, b: &RunTrace) -> Result<()> {
    let mismatch = |what: &str| Err(HarnessError::TraceMismatch(what.to_string()));
    if a.stream_fingerprint != b.stream_fingerprint || a.n_instances != b.n_instances {
        return mismatch("different streams");
    }
    if a.k != b.k {
        return mismatch("different fold counts");
    }
    if a.roles_hash != b.roles_hash {
        return mismatch("different fold-role assignments");
    }
    if a.checkpoints != b.checkpoints {
        return mismatch("different checkpoints");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityPoint {
    pub commit_index: usize,
    pub e_ideal: f64,
    pub e_nonideal: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityTrace {
    /// One point per commit, aligned by arrival index.
    pub points: Vec<ValidityPoint>,
    /// `(checkpoint, V)` at each monitoring checkpoint.
    pub checkpoint_v: Vec<(usize, f64)>,
    pub final_v: f64,
}

impl ValidityTrace {
    pub fn mean_checkpoint_v(&self) -> f64 {
        let n = self.checkpoint_v.len().max(1) as f64;
        self.checkpoint_v.iter().map(|(_, v)| v).sum::<f64>() / n
    }
}

/// `V = 1 − |E_ideal − E_nonideal|` where `E` is the cross-fold mean fading
/// G-mean after each commit.
pub fn evaluation_validity(ideal: &RunTrace, nonideal: &RunTrace) -> Result<ValidityTrace> {
    check_paired(ideal, nonideal)?;
    let points: Vec<ValidityPoint> = (0..ideal.n_instances)
        .map(|i| {
            let e_ideal = ideal.mean_gmean_at(i);
            let e_nonideal = nonideal.mean_gmean_at(i);
            ValidityPoint {
                commit_index: i,
                e_ideal,
                e_nonideal,
                v: (1.0 - (e_ideal - e_nonideal).abs()).clamp(0.0, 1.0),
            }
        })
        .collect();
    let checkpoint_v = ideal
        .checkpoints
        .iter()
        .map(|&c| (c, points[c - 1].v))
        .collect();
    let final_v = points.last().map_or(1.0, |p| p.v);
    Ok(ValidityTrace {
        points,
        checkpoint_v,
        final_v,
    })
}

/// Runs `cfg` next to its ideal-labeling counterpart and returns
/// `(ideal, nonideal, validity)`.
pub fn validity_experiment(
    stream: &CommitStream,
    cfg: &ExperimentConfig,
) -> Result<(RunTrace, RunTrace, ValidityTrace)> {
    let ideal_cfg = cfg.with_labeling(LabelingConfig {
        mode: LabelingMode::Ideal,
        ..cfg.labeling.clone()
    });
    let (ideal, nonideal) = rayon::join(|| ideal_cfg.run(stream), || cfg.run(stream));
    let (ideal, nonideal) = (ideal?, nonideal?);
    let v = evaluation_validity(&ideal, &nonideal)?;
    Ok((ideal, nonideal, v))
}

/// The waiting window that stays fixed in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// `w_bfc` fixed at `grid_bfc[0]`; `w_qa` runs over `grid_qa`.
    Bfc,
    /// `w_qa` fixed at `grid_qa[0]`; `w_bfc` runs over `grid_bfc`.
    Qa,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w_qa: i64,
    pub w_bfc: i64,
    pub final_v: f64,
    pub mean_v: f64,
}

/// One validity run per grid point, all sharing `cfg`'s seeds and one
/// ideal reference run.
pub fn waiting_time_sweep(
    stream: &CommitStream,
    cfg: &ExperimentConfig,
    grid_qa: &[i64],
    grid_bfc: &[i64],
    fixed: SweepAxis,
) -> Result<Vec<SweepRow>> {
    if grid_qa.is_empty() || grid_bfc.is_empty() {
        return Err(HarnessError::InvalidConfig("empty waiting-time grid".into()));
    }
    let points: Vec<(i64, i64)> = match fixed {
        SweepAxis::Bfc => grid_qa.iter().map(|&q| (q, grid_bfc[0])).collect(),
        SweepAxis::Qa => grid_bfc.iter().map(|&b| (grid_qa[0], b)).collect(),
    };
    let ideal = cfg
        .with_labeling(LabelingConfig {
            mode: LabelingMode::Ideal,
            ..cfg.labeling.clone()
        })
        .run(stream)?;
    points
        .par_iter()
        .map(|&(w_qa, w_bfc)| {
            let run = cfg
                .with_labeling(LabelingConfig {
                    w_qa,
                    w_bfc,
                    ..cfg.labeling.clone()
                })
                .run(stream)?;
            let v = evaluation_validity(&ideal, &run)?;
            Ok(SweepRow {
                w_qa,
                w_bfc,
                final_v: v.final_v,
                mean_v: v.mean_checkpoint_v(),
            })
        })
        .collect()
}

/// How McNemar disagreement counts accumulate over a fold's evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarCounts {
    /// Decayed with the run's fading factor.
    Fading,
    /// Plain counts over the whole stream.
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorExperimentConfig {
    pub reps: usize,
    /// Prediction-flip probabilities of the two Type II probes.
    pub noise_levels: [f64; 2],
    pub significance: f64,
    pub mcnemar_counts: McNemarCounts,
}

impl Default for ErrorExperimentConfig {
    fn default() -> Self {
        Self {
            reps: 50,
            noise_levels: [0.05, 0.1],
            significance: DEFAULT_SIGNIFICANCE,
            mcnemar_counts: McNemarCounts::Fading,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestErrorRates {
    pub test: TestKind,
    /// Rejection rate when both sides run the same algorithm.
    pub type_i: f64,
    /// Non-rejection rates against each noise level.
    pub type_ii: [f64; 2],
    pub reps: usize,
    /// Bernoulli trials behind each rate.
    pub trials: usize,
    pub stderr_i: f64,
    pub stderr_ii: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateReport {
    /// McNemar (with the configured counts), Wilcoxon and sign, in order.
    pub rows: Vec<TestErrorRates>,
    /// McNemar on the same runs with the other way of counting.
    pub alternate_mcnemar: TestErrorRates,
    pub reps: usize,
    pub noise_levels: [f64; 2],
    pub significance: f64,
    pub mcnemar_counts: McNemarCounts,
}

impl ErrorRateReport {
    pub fn row(&self, test: TestKind) -> &TestErrorRates {
        self.rows.iter().find(|r| r.test == test).expect("all tests reported")
    }
}

impl McNemarCounts {
    fn alpha(self, fading: f64) -> f64 {
        match self {
            McNemarCounts::Fading => fading,
            McNemarCounts::Cumulative => 1.0,
        }
    }

    fn other(self) -> Self {
        match self {
            McNemarCounts::Fading => McNemarCounts::Cumulative,
            McNemarCounts::Cumulative => McNemarCounts::Fading,
        }
    }
}

/// Paired G-means pooled over every checkpoint and fold.
fn pooled_pairs(a: &RunTrace, b: &RunTrace) -> PairedObservations {
    let x: Vec<f64> = a.checkpoint_gmeans.iter().flatten().copied().collect();
    let y: Vec<f64> = b.checkpoint_gmeans.iter().flatten().copied().collect();
    PairedObservations::from_slices(&x, &y).expect("fading G-means are finite")
}

/// One McNemar test per fold over commits evaluated by both runs, in the
/// first run's evaluation order.
fn mcnemar_per_fold(a: &RunTrace, b: &RunTrace, alpha: f64) -> Vec<TestResult> {
    a.outcomes
        .iter()
        .zip(&b.outcomes)
        .map(|(oa, ob)| {
            let other: HashMap<usize, bool> = ob.iter().copied().collect();
            let mut st = McNemarState::new(alpha);
            for (idx, ca) in oa {
                if let Some(&cb) = other.get(idx) {
                    st.update(*ca, cb);
                }
            }
            st.test()
        })
        .collect()
}

/// Columns: configured McNemar, Wilcoxon, sign, alternate McNemar.
const COLUMNS: usize = 4;

#[derive(Default)]
struct RepOutcome {
    /// `[probe][column]` rejections; probe 0 is the Type I pair.
    rejections: [[usize; COLUMNS]; 3],
    trials: [usize; COLUMNS],
}

fn probe(a: &RunTrace, b: &RunTrace, mc_alpha: [f64; 2], level: f64) -> RepOutcome {
    let pairs = pooled_pairs(a, b);
    let rejected = |rs: &[TestResult]| rs.iter().filter(|r| r.at_level(level).reject).count();
    let m = mcnemar_per_fold(a, b, mc_alpha[0]);
    let alt = mcnemar_per_fold(a, b, mc_alpha[1]);
    let mut out = RepOutcome::default();
    out.rejections[0] = [
        rejected(&m),
        rejected(&[wilcoxon_signed_rank(&pairs)]),
        rejected(&[sign_test(&pairs)]),
        rejected(&alt),
    ];
    out.trials = [m.len(), 1, 1, alt.len()];
    out
}

fn rates(test: TestKind, column: usize, outcomes: &[RepOutcome], reps: usize) -> TestErrorRates {
    let trials: usize = outcomes.iter().map(|o| o.trials[column]).sum();
    let rate = |p: usize| {
        outcomes.iter().map(|o| o.rejections[p][column]).sum::<usize>() as f64 / trials as f64
    };
    let se = |r: f64| (r * (1.0 - r) / trials as f64).sqrt();
    let type_i = rate(0);
    let type_ii = [1.0 - rate(1), 1.0 - rate(2)];
    TestErrorRates {
        test,
        type_i,
        type_ii,
        reps,
        trials,
        stderr_i: se(type_i),
        stderr_ii: [se(type_ii[0]), se(type_ii[1])],
    }
}

/// Type I and Type II error rates of the three paired tests.
///
/// Each repetition runs the learner with two seeds (Type I probe) and the
/// first seed again behind each noise filter (Type II probes), all on the
/// same fold roles. Wilcoxon and sign tests use the checkpoint × fold
/// G-means pooled into one sample per repetition; McNemar runs once per
/// fold, each counted as its own trial.
pub fn type_error_experiment(
    stream: &CommitStream,
    cfg: &ExperimentConfig,
    exp: &ErrorExperimentConfig,
) -> Result<ErrorRateReport> {
    if !cfg.learner.is_randomized() {
        return Err(HarnessError::NonRandomizedLearner);
    }
    if exp.reps == 0 {
        return Err(HarnessError::InvalidConfig("reps must be >= 1".into()));
    }
    let mc_alpha = [
        exp.mcnemar_counts.alpha(cfg.alpha),
        exp.mcnemar_counts.other().alpha(cfg.alpha),
    ];
    let master = cfg.learner.seed;
    let outcomes: Vec<RepOutcome> = (0..exp.reps)
        .into_par_iter()
        .map(|rep| -> Result<RepOutcome> {
            let r = rep as u64;
            let validation = ValidationConfig {
                seed: seed::derive(cfg.validation.seed, &[r]),
                ..cfg.validation.clone()
            };
            let variant = |seed_key: u64, noise_p: f64| ExperimentConfig {
                learner: LearnerConfig {
                    seed: seed::derive(master, &[r, seed_key]),
                    noise_p,
                    ..cfg.learner.clone()
                },
                validation: validation.clone(),
                ..cfg.clone()
            };
            let configs = [
                variant(1, cfg.learner.noise_p),
                variant(2, cfg.learner.noise_p),
                variant(1, exp.noise_levels[0]),
                variant(1, exp.noise_levels[1]),
            ];
            let runs: Vec<RunTrace> = configs
                .par_iter()
                .map(|c| c.run(stream))
                .collect::<Result<_>>()?;
            let mut out = RepOutcome::default();
            for (p, other) in runs[1..].iter().enumerate() {
                let o = probe(&runs[0], other, mc_alpha, exp.significance);
                out.rejections[p] = o.rejections[0];
                out.trials = o.trials;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let kinds = [TestKind::Mcnemar, TestKind::Wilcoxon, TestKind::Sign];
    Ok(ErrorRateReport {
        rows: (0..3).map(|c| rates(kinds[c], c, &outcomes, exp.reps)).collect(),
        alternate_mcnemar: rates(TestKind::Mcnemar, 3, &outcomes, exp.reps),
        reps: exp.reps,
        noise_levels: exp.noise_levels,
        significance: exp.significance,
        mcnemar_counts: exp.mcnemar_counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePoint {
    pub commit_index: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Wilcoxon on `(a, b)` fold pairs; direction +1 means `b` is higher.
    pub test: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTrace {
    pub points: Vec<ComparePoint>,
}

pub fn compare_traces(a: &RunTrace, b: &RunTrace, level: f64) -> Result<CompareTrace> {
    check_paired(a, b)?;
    let k = a.k as f64;
    let points = a
        .checkpoints
        .iter()
        .enumerate()
        .map(|(c, &cp)| {
            let ga = &a.checkpoint_gmeans[c];
            let gb = &b.checkpoint_gmeans[c];
            let pairs = PairedObservations::from_slices(ga, gb).expect("finite G-means");
            ComparePoint {
                commit_index: cp,
                mean_a: ga.iter().sum::<f64>() / k,
                mean_b: gb.iter().sum::<f64>() / k,
                test: wilcoxon_signed_rank(&pairs).at_level(level),
            }
        })
        .collect();
    Ok(CompareTrace { points })
}

/// Run two configurations on the same stream and fold roles and test their
/// fold G-means at each checkpoint.
pub fn compare_runs(
    stream: &CommitStream,
    cfg_a: &ExperimentConfig,
    cfg_b: &ExperimentConfig,
    level: f64,
) -> Result<(RunTrace, RunTrace, CompareTrace)> {
    if cfg_a.validation != cfg_b.validation {
        return Err(HarnessError::TraceMismatch("different validation configs".into()));
    }
    let (a, b) = rayon::join(|| cfg_a.run(stream), || cfg_b.run(stream));
    let (a, b) = (a?, b?);
    let trace = compare_traces(&a, &b, level)?;
    Ok((a, b, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplingRow {
    pub name: String,
    pub kind: LearnerKind,
    pub rate: Option<u32>,
    pub r1: f64,
    pub fpr: f64,
    pub gmean: f64,
}

/// The bare Hoeffding tree against both resampling ensembles at each rate,
/// all with Hoeffding-tree members. Labels follow `cfg.labeling`.
pub fn resampling_study(
    stream: &CommitStream,
    cfg: &ExperimentConfig,
    rates: &[u32],
) -> Result<Vec<ResamplingRow>> {
    let mut variants = vec![("hoeffding_tree".to_string(), LearnerKind::HoeffdingTree, None)];
    for (kind, name) in [
        (LearnerKind::UnderOverBagging, "under_over_bagging"),
        (LearnerKind::RusBoost, "rus_boost"),
    ] {
        for &r in rates {
            variants.push((format!("{name}({r})"), kind, Some(r)));
        }
    }
    variants
        .par_iter()
        .map(|(name, kind, rate)| {
            let mut learner = LearnerConfig {
                kind: *kind,
                base: BaseKind::HoeffdingTree,
                ..cfg.learner.clone()
            };
            if let Some(r) = rate {
                learner.ensemble.resample_rate = *r;
            }
            let m = ExperimentConfig {
                learner,
                ..cfg.clone()
            }
            .run(stream)?
            .final_mean_snapshot();
            Ok(ResamplingRow {
                name: name.clone(),
                kind: *kind,
                rate: *rate,
                r1: m.r1,
                fpr: m.fpr,
                gmean: m.gmean,
            })
        })
        .collect()
}
