//! Incremental decision tree with Hoeffding-bound split decisions over
//! numeric attributes.

use serde::{Deserialize, Serialize};

use super::simple::{GaussianEstimator, GaussianNaiveBayes};
use super::{Learner, Prediction};
use crate::Label;

/// Range of information gain for two classes, in bits.
const GAIN_RANGE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoeffdingConfig {
    pub delta: f64,
    pub grace_period: u32,
    pub tie_threshold: f64,
    /// Equally spaced candidate thresholds between the observed min and max.
    pub n_split_points: usize,
    /// Each of at least two branches must hold this share of the weight.
    pub min_branch_fraction: f64,
}

impl Default for HoeffdingConfig {
    fn default() -> Self {
        Self {
            delta: 1e-7,
            grace_period: 200,
            tie_threshold: 0.05,
            n_split_points: 10,
            min_branch_fraction: 0.01,
        }
    }
}

/// `sqrt(R² ln(1/δ) / (2n))`
pub fn hoeffding_bound(range: f64, delta: f64, n: f64) -> f64 {
    (range * range * (1.0 / delta).ln() / (2.0 * n)).sqrt()
}

pub fn decide_split(gain_best: f64, gain_second: f64, epsilon: f64, tie_threshold: f64) -> bool {
    gain_best - gain_second > epsilon || epsilon < tie_threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDecision {
    /// `None` when the best candidate is not to split.
    pub feature: Option<usize>,
    pub split_point: f64,
    pub gain_best: f64,
    pub gain_second: f64,
    pub epsilon: f64,
    pub split: bool,
}

/// Sufficient statistics held by one leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    /// Class distribution including the share estimated at creation.
    pub class_weights: [f64; 2],
    /// Per-class statistics observed since the leaf was created.
    pub observed: GaussianNaiveBayes,
    pub weight_at_last_eval: f64,
}

impl LeafStats {
    fn new(initial: [f64; 2]) -> Self {
        Self {
            class_weights: initial,
            observed: GaussianNaiveBayes::default(),
            weight_at_last_eval: 0.0,
        }
    }

    pub fn observed_weight(&self) -> f64 {
        self.observed.total_weight()
    }

    pub fn observe(&mut self, x: &[f64], label: Label, w: f64) {
        self.class_weights[label.index()] += w;
        self.observed.observe(x, label, w);
    }

    /// Equal up to floating-point reassociation in the running moments.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let a = &self.observed;
        let b = &other.observed;
        self.class_weights == other.class_weights
            && self.weight_at_last_eval == other.weight_at_last_eval
            && a.class_weights == b.class_weights
            && a.estimators.len() == b.estimators.len()
            && a.estimators.iter().zip(&b.estimators).all(|(x, y)| {
                x[0].approx_eq(&y[0], tol) && x[1].approx_eq(&y[1], tol)
            })
    }

    fn is_pure(&self) -> bool {
        let w = self.observed.class_weights;
        w[0] <= 0.0 || w[1] <= 0.0
    }
}

fn entropy(w: [f64; 2]) -> f64 {
    let total = w[0] + w[1];
    if total <= 0.0 {
        return 0.0;
    }
    w.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| {
            let p = v / total;
            -p * p.log2()
        })
        .sum()
}

/// Information gain of a binary split, or `None` when fewer than two
/// branches carry `min_frac` of the weight.
fn info_gain(parent: [f64; 2], left: [f64; 2], right: [f64; 2], min_frac: f64) -> Option<f64> {
    let total = parent[0] + parent[1];
    let wl = left[0] + left[1];
    let wr = right[0] + right[1];
    let branch_total = wl + wr;
    if total <= 0.0 || branch_total <= 0.0 {
        return None;
    }
    if wl / branch_total < min_frac || wr / branch_total < min_frac {
        return None;
    }
    Some(entropy(parent) - (wl * entropy(left) + wr * entropy(right)) / branch_total)
}

fn branch_weights(est: &[GaussianEstimator; 2], point: f64) -> ([f64; 2], [f64; 2]) {
    let mut left = [0.0; 2];
    let mut right = [0.0; 2];
    for c in 0..2 {
        let below = est[c].weight_at_or_below(point).clamp(0.0, est[c].weight);
        left[c] = below;
        right[c] = est[c].weight - below;
    }
    (left, right)
}

/// Best threshold on one feature with its gain and branch distributions.
fn best_split_on(
    est: &[GaussianEstimator; 2],
    parent: [f64; 2],
    cfg: &HoeffdingConfig,
) -> Option<(f64, f64, [f64; 2], [f64; 2])> {
    let lo = est[0].min.min(est[1].min);
    let hi = est[0].max.max(est[1].max);
    if !(hi > lo) {
        return None;
    }
    let step = (hi - lo) / (cfg.n_split_points + 1) as f64;
    let mut best: Option<(f64, f64, [f64; 2], [f64; 2])> = None;
    for i in 1..=cfg.n_split_points {
        let point = lo + step * i as f64;
        let (left, right) = branch_weights(est, point);
        if let Some(g) = info_gain(parent, left, right, cfg.min_branch_fraction) {
            if best.as_ref().is_none_or(|b| g > b.0) {
                best = Some((g, point, left, right));
            }
        }
    }
    best
}

pub fn hoeffding_split_check(leaf: &LeafStats, cfg: &HoeffdingConfig) -> SplitDecision {
    best_candidates(leaf, cfg).0
}

type Children = Option<([f64; 2], [f64; 2])>;

fn best_candidates(leaf: &LeafStats, cfg: &HoeffdingConfig) -> (SplitDecision, Children) {
    let parent = leaf.observed.class_weights;
    // the null split competes with merit 0
    let mut best = (0.0, None, f64::NAN, None);
    let mut second = f64::NEG_INFINITY;
    for (j, est) in leaf.observed.estimators.iter().enumerate() {
        if let Some((g, point, l, r)) = best_split_on(est, parent, cfg) {
            if g > best.0 {
                second = best.0;
                best = (g, Some(j), point, Some((l, r)));
            } else if g > second {
                second = g;
            }
        }
    }
    let second = if second.is_finite() { second } else { 0.0 };
    let epsilon = hoeffding_bound(GAIN_RANGE, cfg.delta, leaf.observed_weight().max(1.0));
    let split = best.1.is_some() && decide_split(best.0, second, epsilon, cfg.tie_threshold);
    (
        SplitDecision {
            feature: best.1,
            split_point: best.2,
            gain_best: best.0,
            gain_second: second,
            epsilon,
            split,
        },
        best.3,
    )
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(LeafStats),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct HoeffdingTree {
    cfg: HoeffdingConfig,
    nodes: Vec<Node>,
}

impl Default for HoeffdingTree {
    fn default() -> Self {
        Self::new(HoeffdingConfig::default())
    }
}

impl HoeffdingTree {
    pub fn new(cfg: HoeffdingConfig) -> Self {
        Self {
            cfg,
            nodes: vec![Node::Leaf(LeafStats::new([0.0; 2]))],
        }
    }

    fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(_) => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Statistics of the leaf that `x` sorts into.
    pub fn leaf_stats(&self, x: &[f64]) -> &LeafStats {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf(s) => s,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    fn try_split(&mut self, idx: usize) {
        let Node::Leaf(leaf) = &mut self.nodes[idx] else {
            return;
        };
        leaf.weight_at_last_eval = leaf.observed_weight();
        let (decision, children) = best_candidates(leaf, &self.cfg);
        if !decision.split {
            return;
        }
        let (Some(feature), Some((l, r))) = (decision.feature, children) else {
            return;
        };
        let left = self.nodes.len();
        self.nodes.push(Node::Leaf(LeafStats::new(l)));
        self.nodes.push(Node::Leaf(LeafStats::new(r)));
        self.nodes[idx] = Node::Split {
            feature,
            threshold: decision.split_point,
            left,
            right: left + 1,
        };
    }
}

impl Learner for HoeffdingTree {
    fn predict(&mut self, x: &[f64]) -> Prediction {
        let leaf = self.leaf_stats(x);
        if leaf.observed_weight() >= self.cfg.grace_period as f64 {
            return Prediction::from_score(leaf.observed.defect_posterior(x));
        }
        let w = leaf.class_weights;
        let total = w[0] + w[1];
        Prediction::from_score(if total > 0.0 { w[1] / total } else { 0.0 })
    }

    fn train(&mut self, x: &[f64], label: Label, weight: u32) {
        if weight == 0 {
            return;
        }
        let idx = self.leaf_index(x);
        let grace = self.cfg.grace_period as f64;
        let Node::Leaf(leaf) = &mut self.nodes[idx] else {
            unreachable!()
        };
        leaf.observe(x, label, weight as f64);
        if leaf.observed_weight() - leaf.weight_at_last_eval >= grace && !leaf.is_pure() {
            self.try_split(idx);
        }
    }

    fn boxed_clone(&self) -> Box<dyn Learner> {
        Box::new(self.clone())
    }
}
