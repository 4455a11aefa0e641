use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use libm::erfc;

use super::{Learner, Prediction};
use crate::{seed, Label};

const MIN_SD: f64 = 1e-6;

/// Weighted running mean/variance with observed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianEstimator {
    pub weight: f64,
    pub mean: f64,
    m2: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for GaussianEstimator {
    fn default() -> Self {
        Self {
            weight: 0.0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl GaussianEstimator {
    pub fn update(&mut self, x: f64, w: f64) {
        if w <= 0.0 {
            return;
        }
        self.min = self.min.min(x);
        self.max = self.max.max(x);
        let total = self.weight + w;
        let delta = x - self.mean;
        self.mean += delta * w / total;
        self.m2 += w * delta * (x - self.mean);
        self.weight = total;
    }

    pub fn variance(&self) -> f64 {
        if self.weight > 1.0 {
            (self.m2 / (self.weight - 1.0)).max(0.0)
        } else {
            0.0
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let sd = self.sd().max(MIN_SD);
        let z = (x - self.mean) / sd;
        -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    /// Estimated weight at or below `x`.
    pub fn weight_at_or_below(&self, x: f64) -> f64 {
        if self.weight == 0.0 || x < self.min {
            return 0.0;
        }
        if x >= self.max {
            return self.weight;
        }
        let sd = self.sd();
        if sd <= 0.0 {
            return if x >= self.mean { self.weight } else { 0.0 };
        }
        let z = (x - self.mean) / sd;
        self.weight * 0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }

    pub(crate) fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()));
        close(self.weight, other.weight)
            && close(self.mean, other.mean)
            && close(self.m2, other.m2)
            && self.min == other.min
            && self.max == other.max
    }
}

/// Predicts the class with the larger accumulated weight; the score is the
/// defect share.
#[derive(Debug, Clone, Default)]
pub struct Majority {
    weights: [f64; 2],
}

impl Learner for Majority {
    fn predict(&mut self, _x: &[f64]) -> Prediction {
        let total = self.weights[0] + self.weights[1];
        Prediction::from_score(if total > 0.0 {
            self.weights[1] / total
        } else {
            0.0
        })
    }

    fn train(&mut self, _x: &[f64], label: Label, weight: u32) {
        self.weights[label.index()] += weight as f64;
    }

    fn boxed_clone(&self) -> Box<dyn Learner> {
        Box::new(self.clone())
    }
}

/// Class-conditional Gaussian estimators per feature.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GaussianNaiveBayes {
    pub(crate) class_weights: [f64; 2],
    pub(crate) estimators: Vec<[GaussianEstimator; 2]>,
}

impl GaussianNaiveBayes {
    pub(crate) fn observe(&mut self, x: &[f64], label: Label, w: f64) {
        if self.estimators.len() < x.len() {
            self.estimators.resize_with(x.len(), Default::default);
        }
        self.class_weights[label.index()] += w;
        for (est, &v) in self.estimators.iter_mut().zip(x) {
            est[label.index()].update(v, w);
        }
    }

    pub(crate) fn total_weight(&self) -> f64 {
        self.class_weights[0] + self.class_weights[1]
    }

    /// Posterior probability of defect.
    pub(crate) fn defect_posterior(&self, x: &[f64]) -> f64 {
        let total = self.total_weight();
        if total <= 0.0 {
            return 0.0;
        }
        let mut ln_joint = [0.0; 2];
        for (c, lj) in ln_joint.iter_mut().enumerate() {
            if self.class_weights[c] <= 0.0 {
                *lj = f64::NEG_INFINITY;
                continue;
            }
            *lj = (self.class_weights[c] / total).ln()
                + self
                    .estimators
                    .iter()
                    .zip(x)
                    .map(|(est, &v)| est[c].ln_pdf(v))
                    .sum::<f64>();
        }
        match (ln_joint[0].is_finite(), ln_joint[1].is_finite()) {
            (false, false) => self.class_weights[1] / total,
            (true, false) => 0.0,
            (false, true) => 1.0,
            (true, true) => 1.0 / (1.0 + (ln_joint[0] - ln_joint[1]).exp()),
        }
    }
}

impl Learner for GaussianNaiveBayes {
    fn predict(&mut self, x: &[f64]) -> Prediction {
        Prediction::from_score(self.defect_posterior(x))
    }

    fn train(&mut self, x: &[f64], label: Label, weight: u32) {
        if weight > 0 {
            self.observe(x, label, weight as f64);
        }
    }

    fn boxed_clone(&self) -> Box<dyn Learner> {
        Box::new(self.clone())
    }
}

/// Flips each prediction of the wrapped learner independently with
/// probability `p`. Training passes through untouched.
#[derive(Clone)]
pub struct NoiseFilter {
    base: Box<dyn Learner>,
    p: f64,
    rng: ChaCha8Rng,
    predictions: u64,
    flips: u64,
}

impl NoiseFilter {
    pub fn new(base: Box<dyn Learner>, p: f64, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&p), "noise probability outside [0, 1]");
        Self {
            base,
            p,
            rng: seed::rng(seed, &[0x0004_015E]),
            predictions: 0,
            flips: 0,
        }
    }

    /// (predictions made, predictions flipped)
    pub fn flip_counts(&self) -> (u64, u64) {
        (self.predictions, self.flips)
    }
}

impl Learner for NoiseFilter {
    fn predict(&mut self, x: &[f64]) -> Prediction {
        let p = self.base.predict(x);
        self.predictions += 1;
        if self.rng.random::<f64>() < self.p {
            self.flips += 1;
            p.flipped()
        } else {
            p
        }
    }

    fn train(&mut self, x: &[f64], label: Label, weight: u32) {
        self.base.train(x, label, weight);
    }

    fn is_randomized(&self) -> bool {
        self.p > 0.0 || self.base.is_randomized()
    }

    fn boxed_clone(&self) -> Box<dyn Learner> {
        Box::new(self.clone())
    }
}

/// Online z-scoring of each feature with statistics from training data seen
/// so far.
#[derive(Clone)]
pub struct Standardized {
    base: Box<dyn Learner>,
    stats: Vec<GaussianEstimator>,
}

impl Standardized {
    pub fn new(base: Box<dyn Learner>) -> Self {
        Self {
            base,
            stats: Vec::new(),
        }
    }

    fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| match self.stats.get(j) {
                Some(s) if s.weight > 1.0 && s.sd() > 0.0 => (v - s.mean) / s.sd(),
                Some(s) if s.weight > 0.0 => v - s.mean,
                _ => v,
            })
            .collect()
    }
}

impl Learner for Standardized {
    fn predict(&mut self, x: &[f64]) -> Prediction {
        let z = self.transform(x);
        self.base.predict(&z)
    }

    fn train(&mut self, x: &[f64], label: Label, weight: u32) {
        if weight == 0 {
            return;
        }
        if self.stats.len() < x.len() {
            self.stats.resize_with(x.len(), Default::default);
        }
        for (s, &v) in self.stats.iter_mut().zip(x) {
            s.update(v, weight as f64);
        }
        let z = self.transform(x);
        self.base.train(&z, label, weight);
    }

    fn is_randomized(&self) -> bool {
        self.base.is_randomized()
    }

    fn boxed_clone(&self) -> Box<dyn Learner> {
        Box::new(self.clone())
    }
}
