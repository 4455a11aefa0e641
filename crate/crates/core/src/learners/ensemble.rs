//! Online ensembles driven by per-member Poisson weights.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{Learner, Prediction};
use crate::{seed, Label};

/// Largest Poisson mean handed to a member; boosting updates can grow
/// without limit on a member that is almost never wrong.
const MAX_LAMBDA: f64 = 1e3;
/// Error floor for boosting vote weights.
const MIN_ERROR: f64 = 1e-6;

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    if !(lambda > 0.0) {
        return 0;
    }
    let d = Poisson::new(lambda.min(MAX_LAMBDA)).expect("finite positive mean");
    d.sample(rng) as u32
}

/// Training weights drawn for one member.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DrawStats {
    pub draws: u64,
    pub zero_draws: u64,
    /// Summed drawn weight per class, indexed by [`Label::index`].
    pub weight_by_class: [u64; 2],
}

impl DrawStats {
    fn record(&mut self, label: Label, k: u32) {
        self.draws += 1;
        self.zero_draws += (k == 0) as u64;
        self.weight_by_class[label.index()] += k as u64;
    }

    pub fn zero_fraction(&self) -> f64 {
        if self.draws == 0 {
            0.0
        } else {
            self.zero_draws as f64 / self.draws as f64
        }
    }

    /// Drawn positive weight over drawn negative weight.
    pub fn class_ratio(&self) -> f64 {
        self.weight_by_class[1] as f64 / self.weight_by_class[0] as f64
    }
}

fn member_rngs(seed: u64, n: usize) -> Vec<ChaCha8Rng> {
    (0..n as u64).map(|m| seed::rng(seed, &[m])).collect()
}

fn vote_fraction(members: &mut [Box<dyn Learner>], x: &[f64]) -> f64 {
    let votes = members
        .iter_mut()
        .map(|m| m.predict(x).label)
        .filter(|&l| l == Label::Defect)
        .count();
    votes as f64 / members.len() as f64
}

/// Online bagging: each member sees each instance with a Poisson(λ·w)
/// weight from its own generator.
#[derive(Clone)]
pub struct PoissonBagging {
    members: Vec<Box<dyn Learner>>,
    rngs: Vec<ChaCha8Rng>,
    lambda: f64,
    unit_weights: bool,
    stats: Vec<DrawStats>,
}

impl PoissonBagging {
    pub fn new(
        base: &impl Fn() -> Box<dyn Learner>,
        n_models: usize,
        lambda: f64,
        seed: u64,
    ) -> Self {
        assert!(n_models >= 1 && lambda > 0.0);
        Self {
            members: (0..n_models).map(|_| base()).collect(),
            rngs: member_rngs(seed, n_models),
            lambda,
            unit_weights: false,
            stats: vec![DrawStats::default(); n_models],
        }
    }

    /// Replace every Poisson draw with the instance weight itself.
    pub fn force_unit_weights(&mut self) {
        self.unit_weights = true;
    }

    pub fn draw_stats(&self, member: usize) -> &DrawStats {
        &self.stats[member]
    }
}

impl Learner for PoissonBagging {
    fn predict(&mut self, x: &[f64]) -> Prediction {
        Prediction::from_score(vote_fraction(&mut self.members, x))
    }

    fn train(&mut self, x: &[f64], label: Label, weight: u32) {
        if weight == 0 {
            return;
        }
        for ((m, rng), st) in self.members.iter_mut().zip(&mut self.rngs).zip(&mut self.stats) {
            let k = if self.unit_weights {
                weight
            } else {
                poisson(rng, self.lambda * weight as f64)
            };
            st.record(label, k);
            m.train(x, label, k);
        }
    }

    fn is_randomized(&self) -> bool {
        true
    }

    fn boxed_clone(&self) -> Box<dyn Learner> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingKind {
    UnderOverBagging,
    RusBoost,
}

/// Imbalance-aware online ensembles.
///
/// Both kinds scale each member's Poisson mean by a class factor computed
/// from cumulative class counts: positives get `sqrt(rate·n_neg/n_pos)` and
/// negatives its reciprocal, so the expected drawn positive:negative weight
/// ratio is `rate`. `RusBoost` then runs online boosting on top of the
/// resampled mean: a member that classifies the instance correctly shrinks
/// the mean passed to the next member, a wrong one grows it, and members
/// vote with weight `ln((1-e)/e)` from their weighted error `e`.
#[derive(Clone)]
pub struct ResamplingEnsemble {
    kind: ResamplingKind,
    members: Vec<Box<dyn Learner>>,
    rngs: Vec<ChaCha8Rng>,
    rate: u32,
    class_counts: [f64; 2],
    correct_weight: Vec<f64>,
    wrong_weight: Vec<f64>,
    stats: Vec<DrawStats>,
}

impl ResamplingEnsemble {
    pub fn new(
        kind: ResamplingKind,
        base: &impl Fn() -> Box<dyn Learner>,
        n_models: usize,
        rate: u32,
        seed: u64,
    ) -> Self {
        assert!(n_models >= 1 && matches!(rate, 1 | 2));
        Self {
            kind,
            members: (0..n_models).map(|_| base()).collect(),
            rngs: member_rngs(seed, n_models),
            rate,
            class_counts: [0.0; 2],
            correct_weight: vec![0.0; n_models],
            wrong_weight: vec![0.0; n_models],
            stats: vec![DrawStats::default(); n_models],
        }
    }

    pub fn kind(&self) -> ResamplingKind {
        self.kind
    }

    pub fn draw_stats(&self, member: usize) -> &DrawStats {
        &self.stats[member]
    }

    /// Poisson mean multiplier for an instance of `label`.
    pub fn class_factor(&self, label: Label) -> f64 {
        let [neg, pos] = self.class_counts;
        if neg <= 0.0 || pos <= 0.0 {
            return 1.0;
        }
        let f = (self.rate as f64 * neg / pos).sqrt();
        match label {
            Label::Defect => f,
            Label::Clean => 1.0 / f,
        }
    }

    fn vote_weight(&self, m: usize) -> f64 {
        let total = self.correct_weight[m] + self.wrong_weight[m];
        if total <= 0.0 {
            return 0.0;
        }
        let e = (self.wrong_weight[m] / total).max(MIN_ERROR);
        if e >= 0.5 {
            0.0
        } else {
            ((1.0 - e) / e).ln()
        }
    }
}

impl Learner for ResamplingEnsemble {
    fn predict(&mut self, x: &[f64]) -> Prediction {
        if self.kind == ResamplingKind::UnderOverBagging {
            return Prediction::from_score(vote_fraction(&mut self.members, x));
        }
        let weights: Vec<f64> = (0..self.members.len()).map(|m| self.vote_weight(m)).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Prediction::from_score(vote_fraction(&mut self.members, x));
        }
        let defect: f64 = self
            .members
            .iter_mut()
            .zip(&weights)
            .filter_map(|(m, w)| (m.predict(x).label == Label::Defect).then_some(w))
            .sum();
        Prediction::from_score(defect / total)
    }

    fn train(&mut self, x: &[f64], label: Label, weight: u32) {
        if weight == 0 {
            return;
        }
        let w = weight as f64;
        self.class_counts[label.index()] += w;
        let seen = self.class_counts[0] + self.class_counts[1];
        let mut lambda = w * self.class_factor(label);
        for m in 0..self.members.len() {
            let k = poisson(&mut self.rngs[m], lambda);
            self.stats[m].record(label, k);
            self.members[m].train(x, label, k);
            if self.kind == ResamplingKind::RusBoost {
                if self.members[m].predict(x).label == label {
                    self.correct_weight[m] += lambda;
                    lambda *= seen / (2.0 * self.correct_weight[m]);
                } else {
                    self.wrong_weight[m] += lambda;
                    lambda *= seen / (2.0 * self.wrong_weight[m]);
                }
            }
        }
    }

    fn is_randomized(&self) -> bool {
        true
    }

    fn boxed_clone(&self) -> Box<dyn Learner> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::tests::random_x;
    use crate::learners::{GaussianNaiveBayes, HoeffdingTree, Majority};
    use rand::Rng;

    fn tree() -> Box<dyn Learner> {
        Box::new(HoeffdingTree::default())
    }

    #[test]
    fn unit_weight_single_member_equals_base() {
        let mut bag = PoissonBagging::new(&tree, 1, 6.0, 3);
        bag.force_unit_weights();
        let mut base = tree();
        let mut rng = seed::rng(20, &[]);
        for _ in 0..2000 {
            let x = random_x(&mut rng);
            let y = if x[0] * x[1] > 0.0 { Label::Defect } else { Label::Clean };
            bag.train(&x, y, 1);
            base.train(&x, y, 1);
            let z = random_x(&mut rng);
            assert_eq!(bag.predict(&z).label, base.predict(&z).label);
        }
    }

    #[test]
    fn unit_lambda_zero_draw_fraction() {
        let majority = || -> Box<dyn Learner> { Box::new(Majority::default()) };
        let mut bag = PoissonBagging::new(&majority, 3, 1.0, 4);
        let x = [0.0; 14];
        for i in 0..100_000 {
            bag.train(&x, if i % 3 == 0 { Label::Defect } else { Label::Clean }, 1);
        }
        // sd of the fraction: sqrt(e^-1 (1 - e^-1) / 1e5) = 0.0015
        for m in 0..3 {
            let f = bag.draw_stats(m).zero_fraction();
            assert!((f - (-1.0f64).exp()).abs() <= 0.005, "{m}: {f}");
        }
    }

    fn ratio_on_imbalanced(kind: ResamplingKind, rate: u32) -> f64 {
        let majority = || -> Box<dyn Learner> { Box::new(Majority::default()) };
        let mut ens = ResamplingEnsemble::new(kind, &majority, 2, rate, 5);
        let mut rng = seed::rng(21, &[]);
        let x = [0.0; 14];
        for _ in 0..100_000 {
            let y = if rng.random::<f64>() < 0.3 { Label::Defect } else { Label::Clean };
            ens.train(&x, y, 1);
        }
        ens.draw_stats(0).class_ratio()
    }

    #[test]
    fn resampling_ratio_tracks_rate() {
        for kind in [ResamplingKind::UnderOverBagging, ResamplingKind::RusBoost] {
            let r1 = ratio_on_imbalanced(kind, 1);
            assert!((r1 - 1.0).abs() <= 0.05, "{kind:?} rate 1: {r1}");
            let r2 = ratio_on_imbalanced(kind, 2);
            assert!((r2 - 2.0).abs() <= 0.1, "{kind:?} rate 2: {r2}");
        }
    }

    #[test]
    fn class_factor_is_neutral_until_both_classes_seen() {
        let nb = || -> Box<dyn Learner> { Box::new(GaussianNaiveBayes::default()) };
        let mut ens = ResamplingEnsemble::new(ResamplingKind::RusBoost, &nb, 2, 2, 0);
        assert_eq!(ens.class_factor(Label::Defect), 1.0);
        ens.train(&[0.0; 14], Label::Clean, 3);
        assert_eq!(ens.class_factor(Label::Defect), 1.0);
        ens.train(&[1.0; 14], Label::Defect, 1);
        let f = ens.class_factor(Label::Defect);
        assert!((f - 6f64.sqrt()).abs() < 1e-15);
        assert!((ens.class_factor(Label::Clean) * f - 1.0).abs() < 1e-15);
    }

    #[test]
    fn differently_seeded_bags_diverge() {
        let mut a = PoissonBagging::new(&tree, 5, 6.0, 1);
        let mut b = PoissonBagging::new(&tree, 5, 6.0, 2);
        let mut rng = seed::rng(22, &[]);
        for _ in 0..3000 {
            let x = random_x(&mut rng);
            let y = if x[0] + 0.5 * x[5] > 0.2 { Label::Defect } else { Label::Clean };
            a.train(&x, y, 1);
            b.train(&x, y, 1);
        }
        let differ = (0..500)
            .map(|_| random_x(&mut rng))
            .filter(|z| a.predict(z) != b.predict(z))
            .count();
        assert!(differ > 0);
    }
}
