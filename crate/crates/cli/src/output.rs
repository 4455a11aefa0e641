//! CSV tables and the output-directory bundle.
//!
//! Numbers use Rust's shortest round-trip decimal form so reruns are
//! byte-identical and every value parses back to the same `f64`.

use std::path::{Path, PathBuf};

use driftgate_core::harness::{CompareTrace, ErrorRateReport, ResamplingRow, SweepRow, ValidityTrace};
use driftgate_core::stats::TestResult;
use driftgate_core::validation::RunTrace;
use driftgate_core::DAY;
use serde::Serialize;

use crate::CliError;

pub const METRICS_HEADER: [&str; 8] =
    ["commit_index", "sim_time", "fold", "r0", "r1", "fpr", "gmean", "defined_mask"];
pub const TESTS_HEADER: [&str; 6] =
    ["commit_index", "test", "statistic", "p_value", "reject", "direction"];
pub const VALIDITY_HEADER: [&str; 4] = ["commit_index", "e_ideal", "e_nonideal", "v"];
pub const ERRORS_HEADER: [&str; 8] = [
    "test",
    "type_i",
    "type_ii_n005",
    "type_ii_n010",
    "reps",
    "stderr_i",
    "stderr_ii005",
    "stderr_ii010",
];
pub const CURVE_HEADER: [&str; 2] = ["commit_index", "mean_gmean"];
pub const COMPARE_HEADER: [&str; 3] = ["commit_index", "mean_a", "mean_b"];
pub const SWEEP_HEADER: [&str; 4] = ["w_qa_days", "w_bfc_days", "final_v", "mean_v"];
pub const RESAMPLE_HEADER: [&str; 6] = ["name", "kind", "rate", "r1", "fpr", "gmean"];

/// Points on the mean G-mean curve of a single run.
const CURVE_POINTS: usize = 200;

pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Files written into one output directory, in write order.
pub struct Bundle {
    dir: PathBuf,
    files: Vec<String>,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        self.record(name);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_csv<R>(&mut self, name: &str, header: &[&str], rows: R) -> Result<(), CliError>
    where
        R: IntoIterator<Item = Vec<String>>,
    {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Data(e.to_string()))?;
        let write = || -> Result<(), csv::Error> {
            w.write_record(header)?;
            for row in rows {
                w.write_record(&row)?;
            }
            w.flush()?;
            Ok(())
        };
        write().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.record(name);
        Ok(())
    }

    /// Write `manifest.json` listing every file written so far.
    pub fn finish(mut self, command: &str) -> Result<Vec<String>, CliError> {
        self.files.sort();
        let manifest = serde_json::json!({ "command": command, "files": self.files });
        let files = self.files.clone();
        self.write_json("manifest.json", &manifest)?;
        Ok(files)
    }
}

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn metrics_rows(trace: &RunTrace) -> impl Iterator<Item = Vec<String>> + '_ {
    trace.events.iter().map(|e| {
        vec![
            (e.at_index + 1).to_string(),
            e.sim_time.to_string(),
            e.fold.to_string(),
            num(e.snapshot.r0),
            num(e.snapshot.r1),
            num(e.snapshot.fpr),
            num(e.snapshot.gmean),
            e.snapshot.defined_mask().to_string(),
        ]
    })
}

/// Cross-fold mean G-mean at evenly spaced commits, always ending at the
/// last commit.
pub fn curve_rows(trace: &RunTrace) -> Vec<Vec<String>> {
    let n = trace.n_instances;
    let step = n.div_ceil(CURVE_POINTS).max(1);
    let mut idx: Vec<usize> = (step - 1..n).step_by(step).collect();
    if idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    idx.into_iter()
        .map(|i| vec![(i + 1).to_string(), num(trace.mean_gmean_at(i))])
        .collect()
}

pub fn test_row(commit_index: usize, t: &TestResult) -> Vec<String> {
    vec![
        commit_index.to_string(),
        t.test.name().to_string(),
        num(t.statistic),
        num(t.p_value),
        t.reject.to_string(),
        t.direction.to_string(),
    ]
}

pub fn compare_rows(trace: &CompareTrace) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let means = trace
        .points
        .iter()
        .map(|p| vec![p.commit_index.to_string(), num(p.mean_a), num(p.mean_b)])
        .collect();
    let tests = trace
        .points
        .iter()
        .map(|p| test_row(p.commit_index, &p.test))
        .collect();
    (means, tests)
}

pub fn validity_rows(v: &ValidityTrace) -> impl Iterator<Item = Vec<String>> + '_ {
    v.points.iter().map(|p| {
        vec![
            (p.commit_index + 1).to_string(),
            num(p.e_ideal),
            num(p.e_nonideal),
            num(p.v),
        ]
    })
}

fn days(seconds: i64) -> String {
    num(seconds as f64 / DAY as f64)
}

pub fn sweep_rows(rows: &[SweepRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| vec![days(r.w_qa), days(r.w_bfc), num(r.final_v), num(r.mean_v)])
        .collect()
}

pub fn error_rows(report: &ErrorRateReport, alternate_name: &str) -> Vec<Vec<String>> {
    let row = |name: &str, r: &driftgate_core::harness::TestErrorRates| {
        vec![
            name.to_string(),
            num(r.type_i),
            num(r.type_ii[0]),
            num(r.type_ii[1]),
            r.reps.to_string(),
            num(r.stderr_i),
            num(r.stderr_ii[0]),
            num(r.stderr_ii[1]),
        ]
    };
    let mut out: Vec<Vec<String>> = report.rows.iter().map(|r| row(r.test.name(), r)).collect();
    out.push(row(alternate_name, &report.alternate_mcnemar));
    out
}

pub fn resample_rows(rows: &[ResamplingRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.name.clone(),
                crate::config::serde_name(&r.kind),
                r.rate.map(|v| v.to_string()).unwrap_or_default(),
                num(r.r1),
                num(r.fpr),
                num(r.gmean),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-7, 0.0, 1.0, 0.999_999_999_999_9] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(1.0), "1");
        assert_eq!(num(0.25), "0.25");
    }
}
