//! Online binary classifiers.
//!
//! Every learner implements [`Learner`]: `predict` returns a [`Prediction`]
//! whose label is derived from its score with the fixed 0.5 threshold, and
//! `train` takes an integer weight, where weight 0 is a no-op.

mod ensemble;
mod hoeffding;
mod simple;

pub use ensemble::{DrawStats, PoissonBagging, ResamplingEnsemble, ResamplingKind};
pub use hoeffding::{
    decide_split, hoeffding_bound, hoeffding_split_check, HoeffdingConfig, HoeffdingTree,
    LeafStats, SplitDecision,
};
pub use simple::{GaussianEstimator, GaussianNaiveBayes, Majority, NoiseFilter, Standardized};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Label;

pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("invalid learner configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// Estimated probability of defect.
    pub score: f64,
}

impl Prediction {
    pub fn from_score(score: f64) -> Self {
        let score = if score.is_nan() { 0.0 } else { score.clamp(0.0, 1.0) };
        let label = if score >= DECISION_THRESHOLD {
            Label::Defect
        } else {
            Label::Clean
        };
        Self { label, score }
    }

    /// The complementary prediction, keeping label and score consistent.
    pub fn flipped(self) -> Self {
        let mut score = 1.0 - self.score;
        if score == DECISION_THRESHOLD && self.label == Label::Defect {
            score = DECISION_THRESHOLD - f64::EPSILON;
        }
        Self {
            label: self.label.flip(),
            score,
        }
    }
}

pub trait Learner: Send {
    fn predict(&mut self, x: &[f64]) -> Prediction;

    fn train(&mut self, x: &[f64], label: Label, weight: u32);

    /// Whether two instances built with different seeds can diverge.
    fn is_randomized(&self) -> bool {
        false
    }

    fn boxed_clone(&self) -> Box<dyn Learner>;
}

impl Clone for Box<dyn Learner> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Majority,
    GaussianNb,
    HoeffdingTree,
    PoissonBagging,
    UnderOverBagging,
    RusBoost,
    NoiseFilter,
}

/// Base model used inside ensembles and the noise filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Majority,
    GaussianNb,
    HoeffdingTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub n_models: usize,
    /// Poisson mean for online bagging.
    pub lambda: f64,
    /// Target positive-to-negative training ratio for resampling ensembles.
    pub resample_rate: u32,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_models: 10,
            lambda: 6.0,
            resample_rate: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    pub base: BaseKind,
    pub hoeffding: HoeffdingConfig,
    pub ensemble: EnsembleConfig,
    /// Prediction flip probability; any value above 0 wraps the model in a
    /// noise filter.
    pub noise_p: f64,
    pub seed: u64,
    /// Online per-feature standardization before the model sees features.
    pub standardize: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            kind: LearnerKind::HoeffdingTree,
            base: BaseKind::HoeffdingTree,
            hoeffding: HoeffdingConfig::default(),
            ensemble: EnsembleConfig::default(),
            noise_p: 0.0,
            seed: 0,
            standardize: false,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: String| Err(LearnerError::InvalidConfig(m));
        let h = &self.hoeffding;
        if !(h.delta > 0.0 && h.delta < 1.0) {
            return bad(format!("delta {} outside (0, 1)", h.delta));
        }
        if h.grace_period < 1 {
            return bad("grace_period must be >= 1".into());
        }
        if h.n_split_points < 1 {
            return bad("n_split_points must be >= 1".into());
        }
        let e = &self.ensemble;
        if e.n_models < 1 {
            return bad("n_models must be >= 1".into());
        }
        if !(e.lambda > 0.0) {
            return bad("lambda must be > 0".into());
        }
        if !matches!(e.resample_rate, 1 | 2) {
            return bad(format!("resample_rate {} not in {{1, 2}}", e.resample_rate));
        }
        if !(0.0..=1.0).contains(&self.noise_p) {
            return bad(format!("noise_p {} outside [0, 1]", self.noise_p));
        }
        Ok(())
    }

    /// True when differently seeded builds produce different models.
    pub fn is_randomized(&self) -> bool {
        self.noise_p > 0.0
            || matches!(
                self.kind,
                LearnerKind::PoissonBagging
                    | LearnerKind::UnderOverBagging
                    | LearnerKind::RusBoost
                    | LearnerKind::NoiseFilter
            )
    }

    fn base_factory(&self) -> impl Fn() -> Box<dyn Learner> + '_ {
        move || -> Box<dyn Learner> {
            match self.base {
                BaseKind::Majority => Box::new(Majority::default()),
                BaseKind::GaussianNb => Box::new(GaussianNaiveBayes::default()),
                BaseKind::HoeffdingTree => Box::new(HoeffdingTree::new(self.hoeffding.clone())),
            }
        }
    }

    /// Build a fresh learner. `seed` overrides nothing; callers derive
    /// per-fold seeds from [`LearnerConfig::seed`] themselves.
    pub fn build(&self, seed: u64) -> Result<Box<dyn Learner>, LearnerError> {
        self.validate()?;
        let base = self.base_factory();
        let e = &self.ensemble;
        let model: Box<dyn Learner> = match self.kind {
            LearnerKind::Majority => Box::new(Majority::default()),
            LearnerKind::GaussianNb => Box::new(GaussianNaiveBayes::default()),
            LearnerKind::HoeffdingTree => Box::new(HoeffdingTree::new(self.hoeffding.clone())),
            LearnerKind::NoiseFilter => base(),
            LearnerKind::PoissonBagging => Box::new(PoissonBagging::new(
                &base,
                e.n_models,
                e.lambda,
                seed,
            )),
            LearnerKind::UnderOverBagging => Box::new(ResamplingEnsemble::new(
                ResamplingKind::UnderOverBagging,
                &base,
                e.n_models,
                e.resample_rate,
                seed,
            )),
            LearnerKind::RusBoost => Box::new(ResamplingEnsemble::new(
                ResamplingKind::RusBoost,
                &base,
                e.n_models,
                e.resample_rate,
                seed,
            )),
        };
        let model = if self.standardize {
            Box::new(Standardized::new(model))
        } else {
            model
        };
        Ok(
            if self.noise_p > 0.0 || self.kind == LearnerKind::NoiseFilter {
                Box::new(NoiseFilter::new(model, self.noise_p, seed))
            } else {
                model
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    pub(crate) fn random_x(rng: &mut impl Rng) -> Vec<f64> {
        (0..14).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()
    }

    fn all_kinds() -> Vec<LearnerConfig> {
        let kinds = [
            LearnerKind::Majority,
            LearnerKind::GaussianNb,
            LearnerKind::HoeffdingTree,
            LearnerKind::PoissonBagging,
            LearnerKind::UnderOverBagging,
            LearnerKind::RusBoost,
            LearnerKind::NoiseFilter,
        ];
        kinds
            .iter()
            .map(|&kind| LearnerConfig {
                kind,
                noise_p: if kind == LearnerKind::NoiseFilter { 0.3 } else { 0.0 },
                hoeffding: HoeffdingConfig {
                    grace_period: 50,
                    ..HoeffdingConfig::default()
                },
                ensemble: EnsembleConfig {
                    n_models: 3,
                    ..EnsembleConfig::default()
                },
                ..LearnerConfig::default()
            })
            .collect()
    }

    fn trained(cfg: &LearnerConfig) -> Box<dyn Learner> {
        let mut m = cfg.build(9).unwrap();
        let mut rng = seed::rng(1, &[]);
        for _ in 0..600 {
            let x = random_x(&mut rng);
            let y = if x[0] + x[1] > 0.3 { Label::Defect } else { Label::Clean };
            let w = rng.random_range(0..3);
            m.train(&x, y, w);
        }
        m
    }

    #[test]
    fn zero_weight_training_is_a_noop_for_every_kind() {
        for cfg in all_kinds() {
            let base = trained(&cfg);
            let mut before = base.clone();
            let mut after = base.clone();
            let mut rng = seed::rng(2, &[]);
            for _ in 0..20 {
                let x = random_x(&mut rng);
                after.train(&x, Label::Defect, 0);
            }
            for _ in 0..100 {
                let z = random_x(&mut rng);
                assert_eq!(before.predict(&z), after.predict(&z), "{:?}", cfg.kind);
            }
        }
    }

    #[test]
    fn scores_are_consistent_with_labels() {
        for cfg in all_kinds() {
            let mut m = trained(&cfg);
            let mut rng = seed::rng(3, &[]);
            for _ in 0..200 {
                let p = m.predict(&random_x(&mut rng));
                assert!((0.0..=1.0).contains(&p.score));
                assert_eq!(p.label == Label::Defect, p.score >= DECISION_THRESHOLD);
            }
        }
    }

    #[test]
    fn identical_sequences_give_identical_models() {
        for cfg in all_kinds() {
            let mut a = trained(&cfg);
            let mut b = trained(&cfg);
            let mut rng = seed::rng(4, &[]);
            for _ in 0..100 {
                let z = random_x(&mut rng);
                assert_eq!(a.predict(&z), b.predict(&z));
            }
        }
    }

    #[test]
    fn randomized_flag() {
        let c = LearnerConfig::default();
        assert!(!c.is_randomized());
        assert!(!c.build(0).unwrap().is_randomized());
        let c = LearnerConfig {
            kind: LearnerKind::PoissonBagging,
            ..LearnerConfig::default()
        };
        assert!(c.is_randomized());
        assert!(c.build(0).unwrap().is_randomized());
    }

    #[test]
    fn config_validation() {
        let mut c = LearnerConfig::default();
        c.ensemble.resample_rate = 3;
        assert!(c.build(0).is_err());
        let mut c = LearnerConfig::default();
        c.hoeffding.delta = 1.0;
        assert!(c.validate().is_err());
        let mut c = LearnerConfig::default();
        c.noise_p = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn flipped_prediction_stays_consistent() {
        for s in [0.0, 0.2, 0.5, 0.7, 1.0] {
            let p = Prediction::from_score(s);
            let f = p.flipped();
            assert_eq!(f.label, p.label.flip());
            assert_eq!(f.label == Label::Defect, f.score >= DECISION_THRESHOLD);
        }
    }
}
