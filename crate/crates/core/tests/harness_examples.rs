use driftgate_core::dataset::{synth_stream, DelayKind, SynthSpec};
use driftgate_core::harness::{
    compare_runs, compare_traces, evaluation_validity, resampling_study, type_error_experiment,
    validity_experiment, waiting_time_sweep, ErrorExperimentConfig, ExperimentConfig,
    HarnessError, SweepAxis,
};
use driftgate_core::labeling::{LabelingConfig, LabelingMode};
use driftgate_core::learners::{EnsembleConfig, LearnerConfig, LearnerKind};
use driftgate_core::stats::TestKind;
use driftgate_core::validation::ValidationConfig;
use driftgate_core::{CommitStream, DAY};

fn stream(n: usize, seed: u64) -> CommitStream {
    synth_stream(
        &SynthSpec {
            n_instances: n,
            ..Default::default()
        },
        seed,
    )
    .unwrap()
}

fn cfg(mode: LabelingMode) -> ExperimentConfig {
    ExperimentConfig {
        labeling: LabelingConfig::with_mode(mode),
        validation: ValidationConfig {
            seed: 5,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn validity_of_a_run_against_itself_is_one() {
    let s = stream(3_000, 1);
    let run = cfg(LabelingMode::Hitl).run(&s).unwrap();
    let v = evaluation_validity(&run, &run.clone()).unwrap();
    assert_eq!(v.points.len(), s.len());
    assert!(v.points.iter().all(|p| p.v == 1.0));
    assert_eq!(v.final_v, 1.0);
    assert_eq!(v.checkpoint_v.len(), 10);
}

#[test]
fn validity_is_one_minus_the_gap() {
    let s = stream(2_000, 2);
    let (ideal, nonideal, v) = validity_experiment(&s, &cfg(LabelingMode::NonHitl)).unwrap();
    for p in &v.points {
        assert!((0.0..=1.0).contains(&p.v));
        assert_eq!(p.e_ideal, ideal.mean_gmean_at(p.commit_index));
        assert_eq!(p.e_nonideal, nonideal.mean_gmean_at(p.commit_index));
        assert!((p.v - (1.0 - (p.e_ideal - p.e_nonideal).abs())).abs() < 1e-15);
    }
}

#[test]
fn unpaired_traces_are_rejected() {
    let a = cfg(LabelingMode::Ideal).run(&stream(1_000, 3)).unwrap();
    let b = cfg(LabelingMode::Ideal).run(&stream(1_000, 4)).unwrap();
    assert!(matches!(
        evaluation_validity(&a, &b),
        Err(HarnessError::TraceMismatch(_))
    ));
    let s = stream(1_000, 3);
    let mut other = cfg(LabelingMode::Ideal);
    other.validation.seed += 1;
    let c = other.run(&s).unwrap();
    assert!(matches!(compare_traces(&a, &c, 0.05), Err(HarnessError::TraceMismatch(_))));
}

#[test]
fn zero_waits_with_immediate_fixes_keep_full_validity() {
    let mut spec = SynthSpec {
        n_instances: 3_000,
        ..Default::default()
    };
    spec.fix_delay.kind = DelayKind::Constant;
    spec.fix_delay.mean_days = 0.0;
    let s = synth_stream(&spec, 7).unwrap();
    for mode in [LabelingMode::Hitl, LabelingMode::NonHitl] {
        let mut c = cfg(mode);
        c.labeling.w_qa = 0;
        c.labeling.w_bfc = 0;
        let (_, _, v) = validity_experiment(&s, &c).unwrap();
        assert!(v.points.iter().all(|p| p.v == 1.0), "{mode:?}");
    }
}

#[test]
fn sweep_has_one_row_per_grid_point_and_validity_falls_with_qa_wait() {
    let s = stream(20_000, 8);
    let grid: Vec<i64> = [1, 3, 7, 15, 30, 60, 90].iter().map(|d| d * DAY).collect();
    let rows =
        waiting_time_sweep(&s, &cfg(LabelingMode::Hitl), &grid, &[15 * DAY], SweepAxis::Bfc).unwrap();
    assert_eq!(rows.len(), 7);
    for (r, &q) in rows.iter().zip(&grid) {
        assert_eq!((r.w_qa, r.w_bfc), (q, 15 * DAY));
        assert!((0.0..=1.0).contains(&r.final_v));
    }
    let v = |days: i64| rows.iter().find(|r| r.w_qa == days * DAY).unwrap().mean_v;
    for (short, long) in [(1, 7), (7, 15), (15, 60)] {
        assert!(v(short) + 0.02 >= v(long), "V({short}d)={} V({long}d)={}", v(short), v(long));
    }
    assert!(matches!(
        waiting_time_sweep(&s, &cfg(LabelingMode::Hitl), &[], &[DAY], SweepAxis::Bfc),
        Err(HarnessError::InvalidConfig(_))
    ));
}

#[test]
fn self_comparison_never_rejects() {
    let s = stream(3_000, 9);
    let c = cfg(LabelingMode::Hitl);
    let (_, _, trace) = compare_runs(&s, &c, &c, 0.05).unwrap();
    assert_eq!(trace.points.len(), 10);
    for p in &trace.points {
        assert_eq!(p.mean_a, p.mean_b);
        assert_eq!(p.test.p_value, 1.0);
        assert!(!p.test.reject);
        assert_eq!(p.test.direction, 0);
    }
}

#[test]
fn noisy_learner_loses_the_comparison() {
    let s = stream(20_000, 10);
    let a = cfg(LabelingMode::Ideal);
    let mut b = a.clone();
    b.learner.noise_p = 0.1;
    let (_, _, trace) = compare_runs(&s, &a, &b, 0.05).unwrap();
    let last = trace.points.last().unwrap();
    assert!(last.test.reject, "{last:?}");
    assert_eq!(last.test.direction, -1);
    assert!(last.mean_a > last.mean_b);
}

#[test]
fn error_experiment_requires_a_randomized_learner() {
    let s = stream(500, 11);
    assert!(matches!(
        type_error_experiment(&s, &cfg(LabelingMode::Ideal), &ErrorExperimentConfig::default()),
        Err(HarnessError::NonRandomizedLearner)
    ));
}

#[test]
fn error_rates_are_bounded_with_binomial_errors() {
    let s = stream(2_000, 12);
    let mut c = cfg(LabelingMode::Ideal);
    c.learner = LearnerConfig {
        kind: LearnerKind::PoissonBagging,
        ensemble: EnsembleConfig {
            n_models: 2,
            ..Default::default()
        },
        seed: 3,
        ..Default::default()
    };
    let exp = ErrorExperimentConfig {
        reps: 3,
        ..Default::default()
    };
    let report = type_error_experiment(&s, &c, &exp).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert_eq!(report.row(TestKind::Mcnemar).trials, 3 * c.validation.k);
    assert_eq!(report.row(TestKind::Wilcoxon).trials, 3);
    for r in report.rows.iter().chain([&report.alternate_mcnemar]) {
        let n = r.trials as f64;
        for (rate, se) in [(r.type_i, r.stderr_i), (r.type_ii[0], r.stderr_ii[0]), (r.type_ii[1], r.stderr_ii[1])] {
            assert!((0.0..=1.0).contains(&rate));
            assert!((se - (rate * (1.0 - rate) / n).sqrt()).abs() < 1e-15);
        }
    }
    assert_eq!(report, type_error_experiment(&s, &c, &exp).unwrap());
}

#[test]
fn resampling_study_reports_five_configurations() {
    let s = stream(3_000, 13);
    let mut c = cfg(LabelingMode::Hitl);
    c.learner.ensemble.n_models = 3;
    let rows = resampling_study(&s, &c, &[1, 2]).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "hoeffding_tree",
            "under_over_bagging(1)",
            "under_over_bagging(2)",
            "rus_boost(1)",
            "rus_boost(2)"
        ]
    );
    for r in &rows {
        for v in [r.r1, r.fpr, r.gmean] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
