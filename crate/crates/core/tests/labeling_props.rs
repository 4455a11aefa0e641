use std::collections::HashSet;

use driftgate_core::dataset::{synth_stream, SynthSpec};
use driftgate_core::labeling::{
    label_noise_rate, schedule_label, LabelEngine, LabelingConfig, LabelingMode, ObservedLabel,
    PendingEntry, UNBOUNDED,
};
use driftgate_core::learners::{LearnerConfig, LearnerKind};
use driftgate_core::validation::{run_prequential, Strategy as Roles, ValidationConfig};
use driftgate_core::{seed, CommitInstance, CommitStream, Label, DAY};
use proptest::prelude::*;

fn labels_for(stream: &CommitStream, routing: &[Label], cfg: &LabelingConfig) -> Vec<ObservedLabel> {
    stream
        .instances()
        .iter()
        .zip(routing)
        .map(|(c, &r)| schedule_label(c, r, cfg))
        .collect()
}

fn noisy_ids(labels: &[ObservedLabel], stream: &CommitStream) -> HashSet<u64> {
    labels
        .iter()
        .zip(stream.instances())
        .filter(|(l, c)| l.label != c.label)
        .map(|(l, _)| l.commit_id)
        .collect()
}

fn random_routing(n: usize, seed_: u64, p: f64) -> Vec<Label> {
    (0..n as u64)
        .map(|i| {
            if seed::uniform(seed_, &[i]) < p {
                Label::Defect
            } else {
                Label::Clean
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hitl_noise_is_a_subset_of_non_hitl_noise(
        stream_seed in 0u64..1_000,
        routing_seed in any::<u64>(),
        positive_share in 0.0f64..1.0,
        w_qa_days in 0i64..60,
        w_bfc_days in 0i64..60,
        mean_delay in 1.0f64..60.0,
    ) {
        let mut spec = SynthSpec { n_instances: 400, ..Default::default() };
        spec.fix_delay.mean_days = mean_delay;
        let stream = synth_stream(&spec, stream_seed).unwrap();
        let routing = random_routing(stream.len(), routing_seed, positive_share);
        let base = LabelingConfig { w_qa: w_qa_days * DAY, w_bfc: w_bfc_days * DAY, ..Default::default() };
        let hitl = labels_for(&stream, &routing, &LabelingConfig { mode: LabelingMode::Hitl, ..base.clone() });
        let non = labels_for(&stream, &routing, &LabelingConfig { mode: LabelingMode::NonHitl, ..base });
        let (nh, nn) = (noisy_ids(&hitl, &stream), noisy_ids(&non, &stream));
        prop_assert!(nh.is_subset(&nn));
        let rh = label_noise_rate(&hitl, &stream).unwrap();
        let rn = label_noise_rate(&non, &stream).unwrap();
        prop_assert!(rh.on_defects <= rn.on_defects);
        prop_assert!(rh.overall <= rn.overall);
    }

    #[test]
    fn due_labels_are_time_ordered(
        entries in prop::collection::vec((0i64..1_000, any::<bool>()), 1..80),
        cut in 0i64..1_200,
    ) {
        let cfg = LabelingConfig { w_qa: 37, w_bfc: 111, ..Default::default() };
        let mut engine = LabelEngine::<()>::new();
        for (i, &(t, positive)) in entries.iter().enumerate() {
            let c = CommitInstance {
                id: i as u64,
                commit_time: t,
                features: [0.0; 14],
                label: if positive { Label::Defect } else { Label::Clean },
                fix_time: positive.then_some(t + (i as i64 * 13) % 200),
            };
            let routing = if i % 3 == 0 { Label::Defect } else { Label::Clean };
            engine.push_pending(PendingEntry::new(&c, routing, &cfg), ()).unwrap();
        }
        let first = engine.due_labels(cut).unwrap();
        prop_assert!(first.windows(2).all(|w| w[0].available_time <= w[1].available_time));
        prop_assert!(first.iter().all(|l| l.available_time <= cut));
        let rest = engine.due_labels(i64::MAX).unwrap();
        prop_assert!(rest.iter().all(|l| l.available_time > cut));
        prop_assert_eq!(first.len() + rest.len(), entries.len());
        prop_assert_eq!(engine.pending_len(), 0);
    }
}

fn same_events(a: &[ObservedLabel], b: &[ObservedLabel]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x.commit_id, x.label, x.available_time) == (y.commit_id, y.label, y.available_time))
}

#[test]
fn zero_windows_collapse_to_ideal_on_clean_streams() {
    let mut spec = SynthSpec {
        n_instances: 500,
        ..Default::default()
    };
    spec.defect_rate = 1e-9;
    let stream = synth_stream(&spec, 2).unwrap();
    assert!(stream.instances().iter().all(|c| c.label == Label::Clean));
    let routing = random_routing(stream.len(), 9, 0.5);
    let zero = LabelingConfig {
        w_qa: 0,
        w_bfc: 0,
        sqa_error_rate: 0.0,
        ..Default::default()
    };
    let per_mode: Vec<Vec<ObservedLabel>> = [LabelingMode::Ideal, LabelingMode::NonHitl, LabelingMode::Hitl]
        .into_iter()
        .map(|mode| labels_for(&stream, &routing, &LabelingConfig { mode, ..zero.clone() }))
        .collect();
    assert!(same_events(&per_mode[0], &per_mode[1]));
    assert!(same_events(&per_mode[0], &per_mode[2]));
}

#[test]
fn unbounded_window_and_immediate_fixes_collapse_to_ideal() {
    let mut spec = SynthSpec {
        n_instances: 500,
        ..Default::default()
    };
    spec.fix_delay.kind = driftgate_core::dataset::DelayKind::Constant;
    spec.fix_delay.mean_days = 0.0;
    let stream = synth_stream(&spec, 4).unwrap();
    let routing = random_routing(stream.len(), 1, 0.3);
    let cfg = LabelingConfig {
        w_qa: 0,
        w_bfc: UNBOUNDED,
        ..Default::default()
    };
    let ideal = labels_for(&stream, &routing, &LabelingConfig::with_mode(LabelingMode::Ideal));
    let non = labels_for(&stream, &routing, &LabelingConfig { mode: LabelingMode::NonHitl, ..cfg.clone() });
    let hitl = labels_for(&stream, &routing, &LabelingConfig { mode: LabelingMode::Hitl, ..cfg });
    // clean commits are never confirmed under an unbounded window
    for ((i, n), h) in ideal.iter().zip(&non).zip(&hitl) {
        assert_eq!(i.label, n.label);
        assert_eq!(i.label, h.label);
        if i.label == Label::Defect {
            assert_eq!(i.available_time, n.available_time);
            assert_eq!(i.available_time, h.available_time);
        }
    }
    assert!(noisy_ids(&non, &stream).is_empty());
}

#[test]
fn late_fix_share_sets_non_hitl_defect_noise() {
    // log-normal(sigma = 1) with mean 19.2 days puts 40% of fixes past 15 days
    let mut spec = SynthSpec {
        n_instances: 100_000,
        ..Default::default()
    };
    spec.fix_delay.mean_days = 19.2;
    let stream = synth_stream(&spec, 8).unwrap();
    let cfg = LabelingConfig::with_mode(LabelingMode::NonHitl);
    let late = stream
        .instances()
        .iter()
        .filter_map(|c| c.fix_delay())
        .filter(|&d| d > cfg.w_bfc)
        .count() as f64
        / stream.instances().iter().filter(|c| c.label.is_defect()).count() as f64;
    assert!((late - 0.4).abs() < 0.01, "late share {late}");

    let routing = vec![Label::Clean; stream.len()];
    let rates = label_noise_rate(&labels_for(&stream, &routing, &cfg), &stream).unwrap();
    assert_eq!(rates.on_defects, late);
    assert!((rates.on_defects - 0.40).abs() < 0.02);

    // SQA inspection of half the commits removes the matching share of noise
    let routing = random_routing(stream.len(), 3, 0.5);
    let hitl = LabelingConfig::with_mode(LabelingMode::Hitl);
    let rh = label_noise_rate(&labels_for(&stream, &routing, &hitl), &stream).unwrap();
    assert!((rh.on_defects - 0.20).abs() < 0.02, "{}", rh.on_defects);
}

#[test]
fn every_commit_is_labeled_once_or_left_pending() {
    let stream = synth_stream(
        &SynthSpec {
            n_instances: 3_000,
            ..Default::default()
        },
        6,
    )
    .unwrap();
    for mode in [LabelingMode::Ideal, LabelingMode::NonHitl, LabelingMode::Hitl] {
        let validation = ValidationConfig {
            strategy: Roles::Bootstrap,
            k: 4,
            seed: 1,
        };
        let learner = LearnerConfig {
            kind: LearnerKind::HoeffdingTree,
            ..Default::default()
        };
        let trace = run_prequential(
            &stream,
            &learner,
            &validation,
            &LabelingConfig::with_mode(mode),
            0.99,
            &[],
        )
        .unwrap();
        for f in 0..validation.k {
            let log = &trace.label_log[f];
            let ids: HashSet<u64> = log.iter().map(|l| l.commit_id).collect();
            assert_eq!(ids.len(), log.len(), "duplicate label");
            assert_eq!(log.len() + trace.unresolved[f], stream.len());
            assert!(log.windows(2).all(|w| w[0].available_time <= w[1].available_time));
            if mode == LabelingMode::Ideal {
                assert_eq!(trace.unresolved[f], 0);
            }
        }
    }
}
