//! The `driftgate` command line: configuration resolution, experiment
//! dispatch, CSV tables and SVG charts.
//!
//! Every stochastic subcommand requires a master `--seed`; the labeling mode
//! must also be stated explicitly for subcommands that run the prequential
//! loop. The resolved configuration is echoed to `config.json`, and running
//! any subcommand again with `--config config.json` reproduces its outputs
//! byte for byte.

pub mod config;
pub mod output;
pub mod report;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use driftgate_core::dataset::{self, CommitStream, SynthSpec};
use driftgate_core::harness::{self, HarnessError, McNemarCounts, SweepAxis};
use driftgate_core::labeling::LabelingMode;
use driftgate_core::learners::{BaseKind, LearnerKind};
use driftgate_core::validation::Strategy;
use serde_json::Value;
use thiserror::Error;

use config::{parse_duration, parse_duration_list, parse_list, parse_named, RunConfig};
use output::Bundle;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("nothing to chart: {0}")]
    EmptyTrace(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::EmptyTrace(_) => 1,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidConfig(_) | HarnessError::NonRandomizedLearner => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<dataset::DatasetError> for CliError {
    fn from(e: dataset::DatasetError) -> Self {
        match e {
            dataset::DatasetError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "driftgate",
    version,
    about = "Simulate online defect prediction under delayed and human-in-the-loop labeling"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one prequential experiment and write its metric trace.
    Simulate(RunArgs),
    /// Compare a labeling regime against ideal labeling.
    Validity(RunArgs),
    /// Evaluation validity over a grid of waiting times.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// SQA waiting times, e.g. 1d,7d,30d.
        #[arg(long, value_parser = parse_duration_list)]
        grid_qa: Option<Vec<i64>>,
        /// BFC waiting times, e.g. 15d,30d.
        #[arg(long, value_parser = parse_duration_list)]
        grid_bfc: Option<Vec<i64>>,
        /// Window held fixed at the first value of its grid: bfc or qa.
        #[arg(long, value_parser = parse_named::<SweepAxis>)]
        fixed: Option<SweepAxis>,
    },
    /// Monte Carlo Type I and Type II error rates of the statistical tests.
    Errors {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        reps: Option<usize>,
        /// McNemar disagreement counts: fading or cumulative.
        #[arg(long, value_parser = parse_named::<McNemarCounts>)]
        mcnemar_counts: Option<McNemarCounts>,
    },
    /// Paired comparison of two configurations on the same folds.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Labeling mode of run B.
        #[arg(long, value_parser = parse_named::<LabelingMode>)]
        b_mode: Option<LabelingMode>,
        /// Learner of run B.
        #[arg(long, value_parser = parse_named::<LearnerKind>)]
        b_learner: Option<LearnerKind>,
        /// Prediction flip probability of run B.
        #[arg(long)]
        b_noise: Option<f64>,
        /// Ensemble size of run B.
        #[arg(long)]
        b_models: Option<usize>,
    },
    /// Bare Hoeffding tree against the resampling ensembles.
    Resample {
        #[command(flatten)]
        run: RunArgs,
        /// Resampling rates, e.g. 1,2.
        #[arg(long, value_parser = parse_list::<u32>)]
        rates: Option<Vec<u32>>,
    },
    /// Write a synthetic commit stream as CSV.
    Synth(RunArgs),
    /// Re-render the SVG charts from the CSV tables in a directory.
    Report {
        /// Directory holding the CSV tables.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Options shared by every experiment subcommand. Unset options fall back to
/// the configuration file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; every component seed is derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Commit stream CSV.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Synthetic stream: `default` or a JSON spec file.
    #[arg(long)]
    pub synth: Option<String>,
    /// Number of synthetic commits.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Drop commits this close to the stream end, e.g. 90d.
    #[arg(long, value_parser = parse_duration)]
    pub truncate: Option<i64>,
    /// Labeling regime: ideal, non_hitl or hitl.
    #[arg(long, value_parser = parse_named::<LabelingMode>)]
    pub mode: Option<LabelingMode>,
    /// SQA waiting time, e.g. 7d.
    #[arg(long, value_parser = parse_duration)]
    pub wqa: Option<i64>,
    /// BFC waiting time, e.g. 15d.
    #[arg(long, value_parser = parse_duration)]
    pub wbfc: Option<i64>,
    /// Probability that an SQA inspection reports the wrong label.
    #[arg(long)]
    pub sqa_error: Option<f64>,
    /// Number of validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Fold strategy: cross, split or bootstrap.
    #[arg(long, value_parser = parse_named::<Strategy>)]
    pub strategy: Option<Strategy>,
    /// Fading factor of the prequential metrics.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = parse_named::<LearnerKind>)]
    pub learner: Option<LearnerKind>,
    /// Base model inside ensembles.
    #[arg(long, value_parser = parse_named::<BaseKind>)]
    pub base: Option<BaseKind>,
    /// Ensemble size.
    #[arg(long)]
    pub models: Option<usize>,
    /// Resampling rate of the resampling ensembles.
    #[arg(long)]
    pub resample_rate: Option<u32>,
    /// Prediction flip probability.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Checkpoints as counts of processed commits, e.g. 1000,2000.
    #[arg(long, value_parser = parse_list::<usize>)]
    pub checkpoints: Option<Vec<usize>>,
    /// Significance level of the statistical tests.
    #[arg(long)]
    pub significance: Option<f64>,
}

/// Parse `args` (program name first), run the subcommand and return the
/// process exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => {
            let cfg = resolve(&args, true)?;
            execute("simulate", cfg, simulate)
        }
        Command::Validity(args) => {
            let cfg = resolve(&args, true)?;
            execute("validity", cfg, validity)
        }
        Command::Sweep {
            run,
            grid_qa,
            grid_bfc,
            fixed,
        } => {
            let mut cfg = resolve(&run, true)?;
            set(&mut cfg.sweep.grid_qa, grid_qa);
            set(&mut cfg.sweep.grid_bfc, grid_bfc);
            set(&mut cfg.sweep.fixed, fixed);
            execute("sweep", cfg, sweep)
        }
        Command::Errors {
            run,
            reps,
            mcnemar_counts,
        } => {
            let mut cfg = resolve(&run, true)?;
            set(&mut cfg.errors.reps, reps);
            set(&mut cfg.errors.mcnemar_counts, mcnemar_counts);
            execute("errors", cfg, errors)
        }
        Command::Compare {
            run,
            b_mode,
            b_learner,
            b_noise,
            b_models,
        } => {
            let mut cfg = resolve(&run, true)?;
            let b = &mut cfg.compare.b;
            let mut patch = |section: &str, key: &str, v: Value| {
                let entry = b
                    .entry(section.to_string())
                    .or_insert_with(|| Value::Object(Default::default()));
                if !entry.is_object() {
                    *entry = Value::Object(Default::default());
                }
                entry[key] = v;
            };
            if let Some(m) = b_mode {
                patch("labeling", "mode", serde_json::to_value(m).expect("enum"));
            }
            if let Some(k) = b_learner {
                patch("learner", "kind", serde_json::to_value(k).expect("enum"));
            }
            if let Some(p) = b_noise {
                patch("learner", "noise_p", Value::from(p));
            }
            if let Some(n) = b_models {
                let models = serde_json::json!({ "n_models": n });
                patch("learner", "ensemble", models);
            }
            cfg.experiment_b()?;
            execute("compare", cfg, compare)
        }
        Command::Resample { run, rates } => {
            let mut cfg = resolve(&run, true)?;
            set(&mut cfg.resample.rates, rates);
            execute("resample", cfg, resample)
        }
        Command::Synth(args) => {
            let cfg = resolve(&args, false)?;
            if cfg.synth.is_none() {
                return Err(CliError::Usage("synth needs a --synth spec".into()));
            }
            execute("synth", cfg, synth)
        }
        Command::Report { out } => {
            for (_, svg) in report::render_report(&out)? {
                println!("{}", out.join(svg).display());
            }
            Ok(())
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Merge file, flags and defaults; check the mandatory settings and derive
/// all component seeds from the master seed.
fn resolve(args: &RunArgs, needs_mode: bool) -> Result<RunConfig, CliError> {
    let (mut cfg, mut has_mode) = match &args.config {
        Some(path) => config::load_file(path)?,
        None => (RunConfig::default(), false),
    };

    if args.dataset.is_some() || args.synth.is_some() {
        cfg.dataset = None;
        cfg.synth = None;
    }
    if let Some(path) = &args.dataset {
        cfg.dataset = Some(path.clone());
    }
    if let Some(s) = &args.synth {
        cfg.synth = Some(load_synth(s)?);
    }
    if args.dataset.is_some() && args.synth.is_some() {
        return Err(CliError::Usage("--dataset and --synth are mutually exclusive".into()));
    }
    if let Some(n) = args.instances {
        match cfg.synth.as_mut() {
            Some(spec) => spec.n_instances = n,
            None => return Err(CliError::Usage("--instances needs a synthetic stream".into())),
        }
    }
    set(&mut cfg.truncate, args.truncate.map(Some));
    set(&mut cfg.seed, args.seed.map(Some));
    set(&mut cfg.out, args.out.clone().map(Some));

    if let Some(m) = args.mode {
        cfg.labeling.mode = m;
        has_mode = true;
    }
    set(&mut cfg.labeling.w_qa, args.wqa);
    set(&mut cfg.labeling.w_bfc, args.wbfc);
    set(&mut cfg.labeling.sqa_error_rate, args.sqa_error);
    set(&mut cfg.validation.k, args.folds);
    set(&mut cfg.validation.strategy, args.strategy.clone());
    set(&mut cfg.alpha, args.alpha);
    set(&mut cfg.learner.kind, args.learner);
    set(&mut cfg.learner.base, args.base);
    set(&mut cfg.learner.ensemble.n_models, args.models);
    set(&mut cfg.learner.ensemble.resample_rate, args.resample_rate);
    set(&mut cfg.learner.noise_p, args.noise);
    set(&mut cfg.checkpoints, args.checkpoints.clone().map(Some));
    set(&mut cfg.significance, args.significance);
    cfg.errors.significance = cfg.significance;

    let Some(master) = cfg.seed else {
        return Err(CliError::Usage("--seed is required".into()));
    };
    if needs_mode && !has_mode {
        return Err(CliError::Usage(
            "--mode is required (ideal, non_hitl or hitl)".into(),
        ));
    }
    match (&cfg.dataset, &cfg.synth) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage("config names both a dataset and a synth spec".into()))
        }
        (None, None) => {
            return Err(CliError::Usage("one of --dataset or --synth is required".into()))
        }
        _ => {}
    }
    if cfg.out.is_none() {
        return Err(CliError::Usage("--out is required".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
        return Err(CliError::Usage(format!("alpha {} outside (0, 1]", cfg.alpha)));
    }
    if !(cfg.significance > 0.0 && cfg.significance < 1.0) {
        return Err(CliError::Usage(format!(
            "significance {} outside (0, 1)",
            cfg.significance
        )));
    }
    cfg.derive_seeds(master);
    cfg.learner.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.labeling.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.validation.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(spec) = &cfg.synth {
        spec.validate()?;
    }
    Ok(cfg)
}

fn load_synth(s: &str) -> Result<SynthSpec, CliError> {
    if s == "default" {
        return Ok(SynthSpec::default());
    }
    let text = std::fs::read_to_string(s)
        .map_err(|e| CliError::Usage(format!("cannot read synth spec {s}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("synth spec {s}: {e}")))
}

fn build_stream(cfg: &RunConfig) -> Result<CommitStream, CliError> {
    let stream = match (&cfg.dataset, &cfg.synth) {
        (Some(path), _) => dataset::load_commit_stream(path)?,
        (None, Some(spec)) => dataset::synth_stream(spec, cfg.stream_seed())?,
        (None, None) => unreachable!("resolve requires a stream source"),
    };
    match cfg.truncate {
        Some(cutoff) => Ok(dataset::truncate_tail(&stream, cutoff)?),
        None => Ok(stream),
    }
}

type Body = fn(&RunConfig, &CommitStream, &mut Bundle) -> Result<(), CliError>;

/// Build the stream, run `body` on the configured thread pool, then echo the
/// configuration and write the manifest.
fn execute(command: &str, cfg: RunConfig, body: Body) -> Result<(), CliError> {
    let out = cfg.out.clone().expect("resolved");
    let mut bundle = Bundle::create(&out)?;
    harness::with_threads(harness::threads_from_env(), || {
        let stream = build_stream(&cfg)?;
        body(&cfg, &stream, &mut bundle)
    })?;
    render_charts(&mut bundle)?;
    let echo = RunConfig {
        out: None,
        ..cfg
    };
    bundle.write_json("config.json", &echo)?;
    let files = bundle.finish(command)?;
    println!("wrote {} files to {}", files.len() + 1, out.display());
    Ok(())
}

fn render_charts(bundle: &mut Bundle) -> Result<(), CliError> {
    let has_table = bundle.files().iter().any(|f| f.ends_with(".csv"));
    if !has_table {
        return Ok(());
    }
    match report::render_report(bundle.dir()) {
        Ok(written) => {
            for (_, svg) in written {
                bundle.record(svg);
            }
            Ok(())
        }
        Err(CliError::EmptyTrace(_)) => Ok(()),
        Err(e) => Err(e),
    }
}

fn simulate(cfg: &RunConfig, stream: &CommitStream, out: &mut Bundle) -> Result<(), CliError> {
    let trace = cfg.experiment().run(stream)?;
    out.write_csv("metrics.csv", &output::METRICS_HEADER, output::metrics_rows(&trace))?;
    out.write_csv("gmean_curve.csv", &output::CURVE_HEADER, output::curve_rows(&trace))
}

fn validity(cfg: &RunConfig, stream: &CommitStream, out: &mut Bundle) -> Result<(), CliError> {
    let (_, _, v) = harness::validity_experiment(stream, &cfg.experiment())?;
    out.write_csv("validity.csv", &output::VALIDITY_HEADER, output::validity_rows(&v))
}

fn sweep(cfg: &RunConfig, stream: &CommitStream, out: &mut Bundle) -> Result<(), CliError> {
    let rows = harness::waiting_time_sweep(
        stream,
        &cfg.experiment(),
        &cfg.sweep.grid_qa,
        &cfg.sweep.grid_bfc,
        cfg.sweep.fixed,
    )?;
    out.write_csv("sweep.csv", &output::SWEEP_HEADER, output::sweep_rows(&rows))
}

fn errors(cfg: &RunConfig, stream: &CommitStream, out: &mut Bundle) -> Result<(), CliError> {
    let report = harness::type_error_experiment(stream, &cfg.experiment(), &cfg.errors)?;
    let alternate = match report.mcnemar_counts {
        McNemarCounts::Fading => McNemarCounts::Cumulative,
        McNemarCounts::Cumulative => McNemarCounts::Fading,
    };
    let alternate_name = format!("mcnemar_{}", config::serde_name(&alternate));
    out.write_csv(
        "errors.csv",
        &output::ERRORS_HEADER,
        output::error_rows(&report, &alternate_name),
    )?;
    let doc = serde_json::json!({
        "accounting": "Type I: the learner run with two independent seeds on shared fold roles. \
            Type II: the same learner against itself behind a prediction-flip filter at each \
            noise level. Wilcoxon and sign tests pool the checkpoint x fold G-means into one \
            test per repetition; McNemar runs once per fold, each fold counting as one trial.",
        "report": report,
    });
    out.write_json("errors.json", &doc)
}

fn compare(cfg: &RunConfig, stream: &CommitStream, out: &mut Bundle) -> Result<(), CliError> {
    let (_, _, trace) =
        harness::compare_runs(stream, &cfg.experiment(), &cfg.experiment_b()?, cfg.significance)?;
    let (means, tests) = output::compare_rows(&trace);
    out.write_csv("compare.csv", &output::COMPARE_HEADER, means)?;
    out.write_csv("tests.csv", &output::TESTS_HEADER, tests)
}

fn resample(cfg: &RunConfig, stream: &CommitStream, out: &mut Bundle) -> Result<(), CliError> {
    let rows = harness::resampling_study(stream, &cfg.experiment(), &cfg.resample.rates)?;
    out.write_csv("resample.csv", &output::RESAMPLE_HEADER, output::resample_rows(&rows))
}

fn synth(_: &RunConfig, stream: &CommitStream, out: &mut Bundle) -> Result<(), CliError> {
    let path = out.dir().join("commits.csv");
    let file = std::fs::File::create(&path).map_err(|e| output::io_error(&path, e))?;
    dataset::write_commit_stream(stream, std::io::BufWriter::new(file))?;
    out.record("commits.csv");
    out.write_json("stream_stats.json", &dataset::stream_stats(stream)?)
}

/// Files listed in a bundle's manifest, relative to `dir`.
pub fn manifest_files(dir: &Path) -> Result<Vec<String>, CliError> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| output::io_error(&path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(v["files"]
        .as_array()
        .map(|a| a.iter().filter_map(|f| f.as_str().map(str::to_string)).collect())
        .unwrap_or_default())
}
