//! Commit streams: CSV ingestion, tail truncation, synthesis and summary
//! statistics.
//!
//! A stream is a chronologically ordered sequence of commits, each carrying
//! the fourteen change metrics (diffusion, size, purpose, history and
//! experience), its ground-truth label and, for defect-inducing commits, the
//! arrival time of the linked bug-fixing commit.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::{seed, DAY};

/// Number of change metrics per commit.
pub const N_FEATURES: usize = 14;

/// Feature names in column order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "ns", "nd", "nf", "entropy", "la", "ld", "lt", "fix_flag", "ndev", "age", "nuc", "exp", "rexp",
    "sexp",
];

/// Exact CSV header for commit streams.
pub const CSV_HEADER: &str =
    "id,commit_time,ns,nd,nf,entropy,la,ld,lt,fix_flag,ndev,age,nuc,exp,rexp,sexp,label,fix_time";

/// Binary commit class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Clean,
    Defect,
}

impl Label {
    pub fn is_defect(self) -> bool {
        self == Label::Defect
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Clean => Label::Defect,
            Label::Defect => Label::Clean,
        }
    }

    /// 0 for clean, 1 for defect.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Clean => "clean",
            Label::Defect => "defect",
        })
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{column}`: {value:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: non-finite value in `{column}`")]
    NonFinite { row: usize, column: String },
    #[error("row {row}: timestamps not in ascending (commit_time, id) order")]
    UnsortedTimestamps { row: usize },
    #[error("row {row}: fix_time precedes commit_time")]
    FixBeforeCommit { row: usize },
    #[error("row {row}: duplicate id")]
    DuplicateId { row: usize },
    #[error("row {row}: fix_time must be present exactly when label is 1")]
    LabelFixMismatch { row: usize },
    #[error("truncation leaves no instances")]
    EmptyResult,
    #[error("stream is empty")]
    EmptyStream,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// One software change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitInstance {
    pub id: u64,
    /// Unix seconds.
    pub commit_time: i64,
    pub features: [f64; N_FEATURES],
    pub label: Label,
    /// Arrival time of the linked bug-fixing commit; present iff defect.
    pub fix_time: Option<i64>,
}

impl CommitInstance {
    /// Check the per-instance invariants. `row` is used for error reporting.
    fn check(&self, row: usize) -> Result<(), DatasetError> {
        if let Some(j) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite {
                row,
                column: FEATURE_NAMES[j].to_string(),
            });
        }
        match (self.label, self.fix_time) {
            (Label::Defect, Some(fix)) if fix < self.commit_time => {
                Err(DatasetError::FixBeforeCommit { row })
            }
            (Label::Defect, Some(_)) | (Label::Clean, None) => Ok(()),
            _ => Err(DatasetError::LabelFixMismatch { row }),
        }
    }

    /// Delay until the bug-fixing commit, in seconds.
    pub fn fix_delay(&self) -> Option<i64> {
        self.fix_time.map(|f| f - self.commit_time)
    }
}

/// A validated, chronologically ordered commit stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitStream {
    instances: Vec<CommitInstance>,
    pub source_name: String,
}

impl CommitStream {
    /// Validate and wrap a sequence of instances. Row numbers in errors are
    /// 1-based positions in `instances`.
    pub fn new(
        instances: Vec<CommitInstance>,
        source_name: impl Into<String>,
    ) -> Result<Self, DatasetError> {
        let mut ids = HashSet::with_capacity(instances.len());
        for (i, inst) in instances.iter().enumerate() {
            let row = i + 1;
            inst.check(row)?;
            if !ids.insert(inst.id) {
                return Err(DatasetError::DuplicateId { row });
            }
            if i > 0 {
                let prev = &instances[i - 1];
                if (inst.commit_time, inst.id) < (prev.commit_time, prev.id) {
                    return Err(DatasetError::UnsortedTimestamps { row });
                }
            }
        }
        Ok(Self {
            instances,
            source_name: source_name.into(),
        })
    }

    pub fn instances(&self) -> &[CommitInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Content hash over ids, times, labels and features. Used to confirm
    /// that two runs consumed the same stream.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for inst in &self.instances {
            h.update(inst.id.to_le_bytes());
            h.update(inst.commit_time.to_le_bytes());
            h.update([inst.label as u8]);
            h.update(inst.fix_time.unwrap_or(i64::MIN).to_le_bytes());
            for v in inst.features {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Load a commit stream from a CSV file with [`CSV_HEADER`] columns.
pub fn load_commit_stream(path: impl AsRef<Path>) -> Result<CommitStream, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_commit_stream(file, name)
}

/// Parse a commit stream from any reader.
pub fn read_commit_stream(
    reader: impl Read,
    source_name: impl Into<String>,
) -> Result<CommitStream, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let id_col = col("id")?;
    let time_col = col("commit_time")?;
    let feature_cols = FEATURE_NAMES
        .iter()
        .map(|n| col(n))
        .collect::<Result<Vec<_>, _>>()?;
    let label_col = col("label")?;
    let fix_col = col("fix_time")?;

    let mut instances = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let field = |c: usize| record.get(c).unwrap_or("");
        let parse_err = |c: usize| DatasetError::Parse {
            row,
            column: headers.get(c).unwrap_or("").to_string(),
            value: field(c).to_string(),
        };
        let id: u64 = field(id_col).parse().map_err(|_| parse_err(id_col))?;
        let commit_time: i64 = field(time_col).parse().map_err(|_| parse_err(time_col))?;
        let mut features = [0.0; N_FEATURES];
        for (slot, &c) in features.iter_mut().zip(&feature_cols) {
            *slot = field(c).parse().map_err(|_| parse_err(c))?;
        }
        let label = match field(label_col) {
            "0" => Label::Clean,
            "1" => Label::Defect,
            _ => return Err(parse_err(label_col)),
        };
        let fix_time = match field(fix_col) {
            "" => None,
            s => Some(s.parse().map_err(|_| parse_err(fix_col))?),
        };
        instances.push(CommitInstance {
            id,
            commit_time,
            features,
            label,
            fix_time,
        });
    }
    CommitStream::new(instances, source_name)
}

/// Write a stream in the commit CSV format.
pub fn write_commit_stream(stream: &CommitStream, writer: impl Write) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER.split(','))?;
    for inst in stream.instances() {
        let mut rec = Vec::with_capacity(18);
        rec.push(inst.id.to_string());
        rec.push(inst.commit_time.to_string());
        rec.extend(inst.features.iter().map(|v| v.to_string()));
        rec.push(inst.label.index().to_string());
        rec.push(inst.fix_time.map(|t| t.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Drop every commit newer than `max(commit_time) - cutoff`.
pub fn truncate_tail(stream: &CommitStream, cutoff: i64) -> Result<CommitStream, DatasetError> {
    assert!(cutoff >= 0, "cutoff must be non-negative");
    let last = stream
        .instances
        .last()
        .ok_or(DatasetError::EmptyStream)?
        .commit_time;
    let limit = last.saturating_sub(cutoff);
    let kept: Vec<_> = stream
        .instances
        .iter()
        .take_while(|i| i.commit_time <= limit)
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(DatasetError::EmptyResult);
    }
    Ok(CommitStream {
        instances: kept,
        source_name: stream.source_name.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayKind {
    /// Log-normal with the given mean; `dispersion` is the log-space sigma.
    LogNormal,
    /// Exponential with the given mean; `dispersion` is ignored.
    Exponential,
    /// Every fix arrives exactly `mean_days` after its commit (may be 0).
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixDelayDist {
    pub kind: DelayKind,
    pub mean_days: f64,
    pub dispersion: f64,
}

/// From `at_index` onward, class-conditional feature means switch to these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub at_index: usize,
    pub clean_means: Vec<f64>,
    pub defect_means: Vec<f64>,
}

/// Parameters of a synthetic commit stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_instances: usize,
    pub defect_rate: f64,
    pub fix_delay: FixDelayDist,
    /// Initial class-conditional feature means.
    pub clean_means: Vec<f64>,
    pub defect_means: Vec<f64>,
    /// Per-feature standard deviation around the class mean.
    pub feature_sd: f64,
    pub drift_points: Vec<DriftPoint>,
    /// Mean seconds between consecutive commits (exponential gaps).
    pub inter_arrival_mean: f64,
    pub start_time: i64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let mut defect_means = vec![0.0; N_FEATURES];
        defect_means[..6].fill(1.0);
        Self {
            n_instances: 20_000,
            defect_rate: 0.3,
            fix_delay: FixDelayDist {
                kind: DelayKind::LogNormal,
                mean_days: 30.0,
                dispersion: 1.0,
            },
            clean_means: vec![0.0; N_FEATURES],
            defect_means,
            feature_sd: 1.0,
            drift_points: Vec::new(),
            // 9.1 commits per day
            inter_arrival_mean: DAY as f64 / 9.1,
            // 2015-01-01T00:00:00Z
            start_time: 1_420_070_400,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::InvalidSpec(m.to_string()));
        if !(self.defect_rate > 0.0 && self.defect_rate < 1.0) {
            return bad("defect_rate must lie in (0, 1)");
        }
        let d = &self.fix_delay;
        match d.kind {
            DelayKind::Constant if d.mean_days >= 0.0 => {}
            DelayKind::Constant => return bad("constant fix delay must be >= 0 days"),
            _ if !(d.mean_days > 0.0) => return bad("fix delay mean must be > 0 days"),
            DelayKind::LogNormal if !(d.dispersion > 0.0) => {
                return bad("log-normal dispersion must be > 0")
            }
            _ => {}
        }
        if !(self.inter_arrival_mean > 0.0) {
            return bad("inter_arrival_mean must be > 0");
        }
        if !(self.feature_sd > 0.0) {
            return bad("feature_sd must be > 0");
        }
        let means_ok = |m: &Vec<f64>| m.len() == N_FEATURES && m.iter().all(|v| v.is_finite());
        if !means_ok(&self.clean_means) || !means_ok(&self.defect_means) {
            return bad("class means need 14 finite values");
        }
        for p in &self.drift_points {
            if !means_ok(&p.clean_means) || !means_ok(&p.defect_means) {
                return bad("drift point means need 14 finite values");
            }
        }
        Ok(())
    }

    fn delay_sampler(&self) -> Box<dyn Fn(&mut rand_chacha::ChaCha8Rng) -> f64> {
        let d = &self.fix_delay;
        match d.kind {
            DelayKind::LogNormal => {
                let sigma = d.dispersion;
                let mu = d.mean_days.ln() - sigma * sigma / 2.0;
                let dist = LogNormal::new(mu, sigma).expect("validated");
                Box::new(move |r| dist.sample(r))
            }
            DelayKind::Exponential => {
                let dist = Exp::new(1.0 / d.mean_days).expect("validated");
                Box::new(move |r| dist.sample(r))
            }
            DelayKind::Constant => {
                let m = d.mean_days;
                Box::new(move |_| m)
            }
        }
    }
}

/// Generate a stream from `spec`. Deterministic for a fixed `seed`.
pub fn synth_stream(spec: &SynthSpec, seed: u64) -> Result<CommitStream, DatasetError> {
    spec.validate()?;
    let mut rng = seed::rng(seed, &[0x5EED]);
    let gap = Exp::new(1.0 / spec.inter_arrival_mean).expect("validated");
    let noise = Normal::new(0.0, spec.feature_sd).expect("validated");
    let delay = spec.delay_sampler();

    let mut drifts: Vec<&DriftPoint> = spec.drift_points.iter().collect();
    drifts.sort_by_key(|p| p.at_index);
    let mut drifts = drifts.into_iter().peekable();
    let mut clean_means = spec.clean_means.as_slice();
    let mut defect_means = spec.defect_means.as_slice();

    let mut clock = spec.start_time as f64;
    let mut instances = Vec::with_capacity(spec.n_instances);
    for i in 0..spec.n_instances {
        while let Some(p) = drifts.next_if(|p| p.at_index <= i) {
            clean_means = &p.clean_means;
            defect_means = &p.defect_means;
        }
        if i > 0 {
            clock += gap.sample(&mut rng);
        }
        let commit_time = clock.round() as i64;
        let label = if rng.random::<f64>() < spec.defect_rate {
            Label::Defect
        } else {
            Label::Clean
        };
        let means = match label {
            Label::Clean => clean_means,
            Label::Defect => defect_means,
        };
        let mut features = [0.0; N_FEATURES];
        for (f, m) in features.iter_mut().zip(means) {
            *f = m + noise.sample(&mut rng);
        }
        let fix_time = label
            .is_defect()
            .then(|| commit_time + (delay(&mut rng) * DAY as f64).round() as i64);
        instances.push(CommitInstance {
            id: i as u64,
            commit_time,
            features,
            label,
            fix_time,
        });
    }
    CommitStream::new(instances, format!("synth-{seed}"))
}

/// Summary rates of a stream, per day of span.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamStats {
    pub total: usize,
    pub defect_fraction: f64,
    pub commits_per_day: f64,
    pub defects_per_day: f64,
    pub bug_fixes_per_day: f64,
    pub span: (i64, i64),
    /// Set when the span is zero; the per-day fields then hold raw counts.
    pub degenerate_span: bool,
}

pub fn stream_stats(stream: &CommitStream) -> Result<StreamStats, DatasetError> {
    let inst = stream.instances();
    let (first, last) = match (inst.first(), inst.last()) {
        (Some(f), Some(l)) => (f.commit_time, l.commit_time),
        _ => return Err(DatasetError::EmptyStream),
    };
    let total = inst.len();
    let defects = inst.iter().filter(|i| i.label.is_defect()).count();
    let fixes = inst
        .iter()
        .filter_map(|i| i.fix_time)
        .collect::<HashSet<_>>()
        .len();
    let span_days = (last - first) as f64 / DAY as f64;
    let degenerate_span = last == first;
    let per_day = |count: usize| {
        if degenerate_span {
            count as f64
        } else {
            count as f64 / span_days
        }
    };
    Ok(StreamStats {
        total,
        defect_fraction: defects as f64 / total as f64,
        commits_per_day: per_day(total),
        defects_per_day: per_day(defects),
        bug_fixes_per_day: per_day(fixes),
        span: (first, last),
        degenerate_span,
    })
}
