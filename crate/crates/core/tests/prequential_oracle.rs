use driftgate_core::prequential::{FadingConfusion, FadingEstimator};
use driftgate_core::Label;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn label(defect: bool) -> Label {
    if defect {
        Label::Defect
    } else {
        Label::Clean
    }
}

/// Recount the confusion matrix from scratch and derive each indicator.
fn brute_force(history: &[(Label, Label)]) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
    let count = |p: Label, o: Label| history.iter().filter(|&&h| h == (p, o)).count() as f64;
    let tp = count(Label::Defect, Label::Defect);
    let fp = count(Label::Defect, Label::Clean);
    let tn = count(Label::Clean, Label::Clean);
    let fn_ = count(Label::Clean, Label::Defect);
    let r0 = (tn + fp > 0.0).then(|| tn / (tn + fp));
    let r1 = (tp + fn_ > 0.0).then(|| tp / (tp + fn_));
    let fpr = (tn + fp > 0.0).then(|| fp / (tn + fp));
    let g = r0.zip(r1).map(|(a, b)| (a * b).sqrt());
    (r0, r1, fpr, g)
}

#[test]
fn unit_alpha_matches_brute_force_recount() {
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let defect_rate = [0.05, 0.3, 0.7][seed as usize];
        let mut conf = FadingConfusion::new(1.0);
        let mut history = Vec::with_capacity(10_000);
        for step in 0..10_000 {
            let obs = label(rng.random::<f64>() < defect_rate);
            let pred = label(rng.random::<f64>() < 0.4);
            conf.update(pred, obs);
            history.push((pred, obs));
            // a full recount every step is quadratic; sample densely instead
            if !(step < 200 || step % 97 == 0 || step == 9_999) {
                continue;
            }
            let m = conf.metrics();
            let (r0, r1, fpr, g) = brute_force(&history);
            let check = |got: f64, defined: bool, want: Option<f64>| match want {
                Some(w) => assert!(defined && (got - w).abs() < 1e-9, "step {step}: {got} vs {w}"),
                None => assert!(!defined && got == 0.0),
            };
            check(m.r0, m.r0_defined, r0);
            check(m.r1, m.r1_defined, r1);
            check(m.fpr, m.fpr_defined(), fpr);
            check(m.gmean, m.gmean_defined(), g);
        }
        let (r0, r1, fpr, g) = brute_force(&history);
        assert!(r0.is_some() && r1.is_some() && fpr.is_some() && g.is_some());
    }
}

#[test]
fn count_after_2000_updates_is_near_its_limit() {
    let mut e = FadingEstimator::new(0.99);
    for _ in 0..2000 {
        e.update(1.0);
    }
    assert!((99.9..=100.0).contains(&e.count()), "{}", e.count());
}

proptest! {
    #[test]
    fn fading_metrics_stay_in_range(
        seq in prop::collection::vec((any::<bool>(), any::<bool>()), 1..300),
        alpha in 0.5f64..=1.0,
    ) {
        let mut conf = FadingConfusion::new(alpha);
        for (p, o) in seq {
            conf.update(label(p), label(o));
            let m = conf.metrics();
            for v in [m.r0, m.r1, m.fpr, m.gmean] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if m.r0_defined {
                prop_assert!((m.r0 + m.fpr - 1.0).abs() < 1e-12);
            }
        }
    }
}
