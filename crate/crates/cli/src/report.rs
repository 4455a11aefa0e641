//! Charts rendered from the CSV tables in an output directory.
//!
//! Every plotted number is read back from a CSV; nothing is recomputed.

use std::path::Path;

use driftgate_core::stats::DEFAULT_SIGNIFICANCE;

use crate::svg::{render, Chart, Series};
use crate::CliError;

/// Longest polyline drawn for per-commit tables.
const MAX_POINTS: usize = 1_000;

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn column(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("missing column {name}")))
    }

    fn numbers(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|r| {
                r[c].parse()
                    .map_err(|_| CliError::Data(format!("column {name}: bad number '{}'", r[c])))
            })
            .collect()
    }
}

fn read_table(path: &Path) -> Result<Option<Table>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Data(e.to_string()))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Data(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::EmptyTrace(path.display().to_string()));
    }
    Ok(Some(Table { headers, rows }))
}

fn series(name: &str, xs: &[f64], ys: &[f64], markers: bool) -> Series {
    Series {
        name: name.to_string(),
        points: xs.iter().copied().zip(ys.iter().copied()).collect(),
        markers,
    }
}

/// Every `stride`-th row plus the last one.
fn thin(n: usize) -> Vec<usize> {
    let stride = n.div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    idx
}

fn chart(title: &str, x_label: &str, y_label: &str, series: Vec<Series>) -> Chart {
    Chart {
        title: title.into(),
        x_label: x_label.into(),
        y_label: y_label.into(),
        series,
        reference: None,
    }
}

fn gmean_chart(t: &Table) -> Result<Chart, CliError> {
    let x = t.numbers("commit_index")?;
    let y = t.numbers("mean_gmean")?;
    Ok(chart(
        "Mean fading G-mean",
        "commits processed",
        "G-mean",
        vec![series("mean G-mean", &x, &y, false)],
    ))
}

fn compare_chart(t: &Table) -> Result<Chart, CliError> {
    let x = t.numbers("commit_index")?;
    Ok(chart(
        "Mean fading G-mean per run",
        "commits processed",
        "G-mean",
        vec![
            series("run A", &x, &t.numbers("mean_a")?, true),
            series("run B", &x, &t.numbers("mean_b")?, true),
        ],
    ))
}

fn pvalue_chart(t: &Table) -> Result<Chart, CliError> {
    let x = t.numbers("commit_index")?;
    let p = t.numbers("p_value")?;
    let test = t.column("test")?;
    let mut out: Vec<Series> = Vec::new();
    for (i, row) in t.rows.iter().enumerate() {
        let name = &row[test];
        let s = match out.iter_mut().position(|s| &s.name == name) {
            Some(j) => &mut out[j],
            None => {
                out.push(series(name, &[], &[], true));
                out.last_mut().expect("just pushed")
            }
        };
        s.points.push((x[i], p[i]));
    }
    let mut c = chart("Test p-value", "commits processed", "p-value", out);
    c.reference = Some(DEFAULT_SIGNIFICANCE);
    Ok(c)
}

fn validity_chart(t: &Table) -> Result<Chart, CliError> {
    let idx = thin(t.rows.len());
    let pick = |v: Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let x = pick(t.numbers("commit_index")?);
    Ok(chart(
        "Evaluation validity",
        "commits processed",
        "G-mean / V",
        vec![
            series("E ideal", &x, &pick(t.numbers("e_ideal")?), false),
            series("E non-ideal", &x, &pick(t.numbers("e_nonideal")?), false),
            series("V", &x, &pick(t.numbers("v")?), false),
        ],
    ))
}

fn sweep_chart(t: &Table) -> Result<Chart, CliError> {
    let qa = t.numbers("w_qa_days")?;
    let bfc = t.numbers("w_bfc_days")?;
    let qa_fixed = qa.iter().all(|&v| v == qa[0]);
    let bfc_varies = bfc.iter().any(|&v| v != bfc[0]);
    let (x, label) = if qa_fixed && bfc_varies {
        (bfc, "W_BFC (days)")
    } else {
        (qa, "W_QA (days)")
    };
    Ok(chart(
        "Final validity by waiting time",
        label,
        "V",
        vec![series("final V", &x, &t.numbers("final_v")?, true)],
    ))
}

type Builder = fn(&Table) -> Result<Chart, CliError>;

const CHARTS: [(&str, &str, Builder); 5] = [
    ("gmean_curve.csv", "gmean.svg", gmean_chart),
    ("compare.csv", "compare_gmean.svg", compare_chart),
    ("tests.csv", "pvalue.svg", pvalue_chart),
    ("validity.csv", "validity.svg", validity_chart),
    ("sweep.csv", "sweep.svg", sweep_chart),
];

/// Render one SVG per chartable CSV in `dir` and return `(csv, svg)` name
/// pairs for the charts written.
pub fn render_report(dir: &Path) -> Result<Vec<(&'static str, &'static str)>, CliError> {
    let mut written = Vec::new();
    for (csv_name, svg_name, build) in CHARTS {
        let Some(table) = read_table(&dir.join(csv_name))? else {
            continue;
        };
        let svg = render(&build(&table)?);
        let path = dir.join(svg_name);
        std::fs::write(&path, svg).map_err(|e| crate::output::io_error(&path, e))?;
        written.push((csv_name, svg_name));
    }
    if written.is_empty() {
        return Err(CliError::EmptyTrace(format!(
            "no chartable tables in {}",
            dir.display()
        )));
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_keeps_ends() {
        assert_eq!(thin(3), vec![0, 1, 2]);
        let t = thin(2_500);
        assert_eq!(t.first(), Some(&0));
        assert_eq!(t.last(), Some(&2_499));
        assert!(t.len() <= MAX_POINTS + 1);
    }
}
