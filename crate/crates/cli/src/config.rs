//! Run configuration: JSON file, command-line overrides and seed derivation.
//!
//! Precedence is command line, then configuration file, then defaults. All
//! component seeds (stream, fold roles, learner, SQA errors) are derived
//! from the single master `seed`, so the echoed configuration is
//! self-contained.

use std::path::PathBuf;

use driftgate_core::dataset::SynthSpec;
use driftgate_core::harness::{ErrorExperimentConfig, ExperimentConfig, SweepAxis};
use driftgate_core::labeling::{LabelingConfig, UNBOUNDED};
use driftgate_core::learners::LearnerConfig;
use driftgate_core::prequential::DEFAULT_ALPHA;
use driftgate_core::stats::DEFAULT_SIGNIFICANCE;
use driftgate_core::validation::ValidationConfig;
use driftgate_core::{seed, DAY};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

const STREAM_KEY: u64 = 1;
const ROLES_KEY: u64 = 2;
const LEARNER_KEY: u64 = 3;
const SQA_KEY: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Seconds.
    pub grid_qa: Vec<i64>,
    /// Seconds.
    pub grid_bfc: Vec<i64>,
    pub fixed: SweepAxis,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid_qa: [1, 3, 7, 15, 30, 60, 90].iter().map(|d| d * DAY).collect(),
            grid_bfc: vec![15 * DAY],
            fixed: SweepAxis::Bfc,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// JSON merge patch turning run A's experiment settings into run B's.
    pub b: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleConfig {
    pub rates: Vec<u32>,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self { rates: vec![1, 2] }
    }
}

/// Everything one invocation needs. Exactly one of `dataset` and `synth`
/// names the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub synth: Option<SynthSpec>,
    /// Seconds of stream tail dropped before the run.
    pub truncate: Option<i64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub learner: LearnerConfig,
    pub validation: ValidationConfig,
    pub labeling: LabelingConfig,
    pub alpha: f64,
    pub checkpoints: Option<Vec<usize>>,
    pub significance: f64,
    pub errors: ErrorExperimentConfig,
    pub sweep: SweepConfig,
    pub compare: CompareConfig,
    pub resample: ResampleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synth: None,
            truncate: None,
            seed: None,
            out: None,
            learner: LearnerConfig::default(),
            validation: ValidationConfig::default(),
            labeling: LabelingConfig::default(),
            alpha: DEFAULT_ALPHA,
            checkpoints: None,
            significance: DEFAULT_SIGNIFICANCE,
            errors: ErrorExperimentConfig::default(),
            sweep: SweepConfig::default(),
            compare: CompareConfig::default(),
            resample: ResampleConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            learner: self.learner.clone(),
            validation: self.validation.clone(),
            labeling: self.labeling.clone(),
            alpha: self.alpha,
            checkpoints: self.checkpoints.clone(),
        }
    }

    /// Run B of a comparison: run A's settings with the `compare.b` patch.
    pub fn experiment_b(&self) -> Result<ExperimentConfig, CliError> {
        let mut value = serde_json::to_value(self.experiment()).expect("serializable");
        merge_patch(&mut value, &Value::Object(self.compare.b.clone()));
        serde_json::from_value(value)
            .map_err(|e| CliError::Usage(format!("invalid compare.b settings: {e}")))
    }

    pub fn stream_seed(&self) -> u64 {
        seed::derive(self.seed.expect("resolved"), &[STREAM_KEY])
    }

    /// Overwrite every component seed with one derived from `seed`.
    pub fn derive_seeds(&mut self, master: u64) {
        self.seed = Some(master);
        self.validation.seed = seed::derive(master, &[ROLES_KEY]);
        self.learner.seed = seed::derive(master, &[LEARNER_KEY]);
        self.labeling.sqa_seed = seed::derive(master, &[SQA_KEY]);
    }
}

/// RFC 7386 merge: objects merge recursively, `null` deletes, anything else
/// replaces.
pub fn merge_patch(target: &mut Value, patch: &Value) {
    match (target, patch) {
        (Value::Object(t), Value::Object(p)) => {
            for (k, v) in p {
                if v.is_null() {
                    t.remove(k);
                } else {
                    merge_patch(t.entry(k.clone()).or_insert(Value::Null), v);
                }
            }
        }
        (t, p) => *t = p.clone(),
    }
}

/// Parse a duration with an optional `d`, `h` or `s` suffix into seconds.
/// Bare numbers are seconds; `inf` means never.
pub fn parse_duration(s: &str) -> Result<i64, String> {
    let s = s.trim();
    if matches!(s, "inf" | "unbounded") {
        return Ok(UNBOUNDED);
    }
    let (num, unit) = match s.char_indices().last() {
        Some((i, 'd')) => (&s[..i], DAY),
        Some((i, 'h')) => (&s[..i], 3_600),
        Some((i, 's')) => (&s[..i], 1),
        _ => (s, 1),
    };
    let v: f64 = num
        .parse()
        .map_err(|_| format!("invalid duration '{s}' (expected e.g. 7d, 36h, 600)"))?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(format!("duration '{s}' must be finite and non-negative"));
    }
    Ok((v * unit as f64).round() as i64)
}

pub fn parse_duration_list(s: &str) -> Result<Vec<i64>, String> {
    s.split(',').map(parse_duration).collect()
}

/// Parse a snake_case enum value the same way the JSON configuration does.
pub fn parse_named<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.trim().to_string()))
        .map_err(|_| format!("unknown value '{s}'"))
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| format!("invalid list item '{v}'")))
        .collect()
}

/// Load a configuration file; also reports whether it set a labeling mode.
pub fn load_file(path: &std::path::Path) -> Result<(RunConfig, bool), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {} is not JSON: {e}", path.display())))?;
    let has_mode = value
        .get("labeling")
        .and_then(|l| l.get("mode"))
        .is_some();
    let cfg = serde_json::from_value(value)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    Ok((cfg, has_mode))
}

/// The JSON spelling of a unit enum value.
pub fn serde_name<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}
