//! Fading-factor prequential metrics.
//!
//! A fading estimator keeps `S = x + α·S` and `N = 1 + α·N`; its value is
//! `S / N`. The confusion matrix keeps one fading sum per cell, all decayed
//! on every update, so cell ratios are directly comparable.

use serde::{Deserialize, Serialize};

use crate::Label;

pub const DEFAULT_ALPHA: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingEstimator {
    sum: f64,
    count: f64,
    alpha: f64,
}

impl FadingEstimator {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
        Self {
            sum: 0.0,
            count: 0.0,
            alpha,
        }
    }

    pub fn update(&mut self, x: f64) {
        self.sum = x + self.alpha * self.sum;
        self.count = 1.0 + self.alpha * self.count;
    }

    /// Fading sum `S`.
    pub fn sum(&self) -> f64 {
        self.sum
    }

    /// Fading increment `N`.
    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `S / N`, or `None` before the first update.
    pub fn value(&self) -> Option<f64> {
        (self.count > 0.0).then(|| self.sum / self.count)
    }
}

/// Confusion cells with defect as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    TruePositive,
    FalsePositive,
    TrueNegative,
    FalseNegative,
}

impl Cell {
    pub fn of(predicted: Label, observed: Label) -> Self {
        match (predicted, observed) {
            (Label::Defect, Label::Defect) => Cell::TruePositive,
            (Label::Defect, Label::Clean) => Cell::FalsePositive,
            (Label::Clean, Label::Clean) => Cell::TrueNegative,
            (Label::Clean, Label::Defect) => Cell::FalseNegative,
        }
    }
}

/// Fading confusion matrix. Each cell value is the fading sum of its
/// indicator sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingConfusion {
    pub tp: FadingEstimator,
    pub fp: FadingEstimator,
    pub tn: FadingEstimator,
    pub fn_: FadingEstimator,
}

impl FadingConfusion {
    pub fn new(alpha: f64) -> Self {
        let e = FadingEstimator::new(alpha);
        Self {
            tp: e,
            fp: e,
            tn: e,
            fn_: e,
        }
    }

    pub fn update(&mut self, predicted: Label, observed: Label) {
        let hit = Cell::of(predicted, observed);
        let ind = |c: Cell| if c == hit { 1.0 } else { 0.0 };
        self.tp.update(ind(Cell::TruePositive));
        self.fp.update(ind(Cell::FalsePositive));
        self.tn.update(ind(Cell::TrueNegative));
        self.fn_.update(ind(Cell::FalseNegative));
    }

    pub fn metrics(&self) -> MetricSnapshot {
        MetricSnapshot::from_cells(self.tp.sum, self.fp.sum, self.tn.sum, self.fn_.sum)
    }
}

/// R0, R1, FPR and G-mean with per-metric defined flags. Undefined metrics
/// are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot {
    pub r0: f64,
    pub r1: f64,
    pub fpr: f64,
    pub gmean: f64,
    pub r0_defined: bool,
    pub r1_defined: bool,
}

impl MetricSnapshot {
    pub const UNDEFINED: MetricSnapshot = MetricSnapshot {
        r0: 0.0,
        r1: 0.0,
        fpr: 0.0,
        gmean: 0.0,
        r0_defined: false,
        r1_defined: false,
    };

    pub fn from_cells(tp: f64, fp: f64, tn: f64, fn_: f64) -> Self {
        let ratio = |num: f64, den: f64| (den > 0.0).then(|| (num / den).clamp(0.0, 1.0));
        let r1 = ratio(tp, tp + fn_);
        let r0 = ratio(tn, tn + fp);
        Self {
            r0: r0.unwrap_or(0.0),
            r1: r1.unwrap_or(0.0),
            fpr: r0.map(|r| 1.0 - r).unwrap_or(0.0),
            gmean: match (r0, r1) {
                (Some(a), Some(b)) => (a * b).sqrt(),
                _ => 0.0,
            },
            r0_defined: r0.is_some(),
            r1_defined: r1.is_some(),
        }
    }

    pub fn fpr_defined(&self) -> bool {
        self.r0_defined
    }

    pub fn gmean_defined(&self) -> bool {
        self.r0_defined && self.r1_defined
    }

    /// Bit mask over (r0, r1, fpr, gmean), least significant bit first.
    pub fn defined_mask(&self) -> u8 {
        (self.r0_defined as u8)
            | (self.r1_defined as u8) << 1
            | (self.fpr_defined() as u8) << 2
            | (self.gmean_defined() as u8) << 3
    }
}
