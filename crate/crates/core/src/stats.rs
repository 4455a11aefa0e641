//! McNemar, Wilcoxon signed-rank and sign tests for paired comparisons of two
//! online classifiers.
//!
//! Pairs are `(x, y)` with `x` from algorithm 1 and `y` from algorithm 2; a
//! positive direction means algorithm 2 scored higher (or, for McNemar, made
//! fewer exclusive mistakes).

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use libm::erfc;
use thiserror::Error;

pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

/// Largest sample size for which the exact Wilcoxon null distribution is
/// enumerated.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("paired observations contain a non-finite value at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Mcnemar,
    Wilcoxon,
    Sign,
}

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::Mcnemar => "mcnemar",
            TestKind::Wilcoxon => "wilcoxon",
            TestKind::Sign => "sign",
        }
    }
}

/// Which side the evidence favours: -1 algorithm 1, +1 algorithm 2, 0 neither.
pub type Direction = i8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub n_effective: usize,
    pub direction: Direction,
}

impl TestResult {
    fn new(test: TestKind, statistic: f64, p: f64, n: usize, direction: Direction) -> Self {
        let p_value = p.clamp(0.0, 1.0);
        Self {
            test,
            statistic,
            p_value,
            reject: p_value < DEFAULT_SIGNIFICANCE,
            n_effective: n,
            direction,
        }
    }

    /// Re-evaluate the decision at another significance level.
    pub fn at_level(mut self, level: f64) -> Self {
        self.reject = self.p_value < level;
        self
    }
}

fn signum(v: f64) -> Direction {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Tail distributions backing the three tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    /// Upper tail `P(X >= x)` of chi-squared with one degree of freedom.
    Chi2Df1,
    /// Upper tail `P(Z >= x)` of the standard normal.
    StandardNormal,
    /// Lower tail `P(X <= x)` of Binomial(n, 1/2).
    BinomialHalf { n: u64 },
}

pub fn tail_probability(dist: Tail, x: f64) -> Result<f64, StatsError> {
    match dist {
        Tail::Chi2Df1 => {
            if x < 0.0 || x.is_nan() {
                return Err(StatsError::DomainError(format!(
                    "chi-squared argument {x} is negative"
                )));
            }
            // Q(1/2, x/2) = erfc(sqrt(x/2))
            Ok(erfc((x / 2.0).sqrt()))
        }
        Tail::StandardNormal => {
            if x.is_nan() {
                return Err(StatsError::DomainError("NaN normal argument".into()));
            }
            Ok(0.5 * erfc(x / std::f64::consts::SQRT_2))
        }
        Tail::BinomialHalf { n } => {
            if x.is_nan() {
                return Err(StatsError::DomainError("NaN binomial argument".into()));
            }
            if x < 0.0 {
                return Ok(0.0);
            }
            let k = x.floor();
            if k >= n as f64 {
                return Ok(1.0);
            }
            Ok(binomial_half_cdf(n, k as u64))
        }
    }
}

/// `P(X <= k)` for `X ~ Binomial(n, 1/2)`, summed exactly in big integers
/// and rounded once.
fn binomial_half_cdf(n: u64, k: u64) -> f64 {
    debug_assert!(k < n);
    if n > 10_000 {
        return binomial_half_cdf_log(n, k);
    }
    let mut coeff = BigUint::one();
    let mut total = BigUint::zero();
    for i in 0..=k {
        total += &coeff;
        coeff = coeff * (n - i) / (i + 1);
    }
    ratio_pow2(&total, n)
}

/// `num / 2^shift` as f64 without overflowing intermediate conversions.
fn ratio_pow2(num: &BigUint, shift: u64) -> f64 {
    let bits = num.bits();
    if bits <= 64 {
        return num.to_f64().unwrap_or(f64::INFINITY) * 2f64.powi(-(shift as i32));
    }
    let drop = bits - 64;
    let top = (num >> drop).to_u64().expect("fits in 64 bits") as f64;
    let exp = drop as i64 - shift as i64;
    top * 2f64.powi(exp as i32)
}

fn binomial_half_cdf_log(n: u64, k: u64) -> f64 {
    use libm::lgamma as ln_gamma;
    let ln_n1 = ln_gamma(n as f64 + 1.0);
    let terms: Vec<f64> = (0..=k)
        .map(|i| {
            ln_n1 - ln_gamma(i as f64 + 1.0) - ln_gamma((n - i) as f64 + 1.0)
                - n as f64 * std::f64::consts::LN_2
        })
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()).exp()
}

/// McNemar's chi-squared test on the exclusive-error counts `a` (algorithm 1
/// wrong, algorithm 2 right) and `b` (the converse). Counts may be fading
/// sums, hence real-valued.
pub fn mcnemar(a: f64, b: f64) -> TestResult {
    assert!(a >= 0.0 && b >= 0.0, "McNemar counts must be non-negative");
    let n = (a + b).round() as usize;
    if a + b == 0.0 {
        return TestResult::new(TestKind::Mcnemar, 0.0, 1.0, 0, 0);
    }
    let chi2 = (a - b).powi(2) / (a + b);
    let p = tail_probability(Tail::Chi2Df1, chi2).expect("chi2 >= 0");
    TestResult::new(TestKind::Mcnemar, chi2, p, n, signum(a - b))
}

/// Running exclusive-error counts for one fold, optionally faded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarState {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
}

impl McNemarState {
    /// `alpha = 1` keeps cumulative counts.
    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0 && alpha <= 1.0);
        Self { a: 0.0, b: 0.0, alpha }
    }

    pub fn update(&mut self, correct_1: bool, correct_2: bool) {
        let a = (!correct_1 && correct_2) as u8 as f64;
        let b = (correct_1 && !correct_2) as u8 as f64;
        self.a = a + self.alpha * self.a;
        self.b = b + self.alpha * self.b;
    }

    pub fn test(&self) -> TestResult {
        mcnemar(self.a, self.b)
    }
}

/// Paired observations `(x_i, y_i)`; all values finite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairedObservations {
    pairs: Vec<(f64, f64)>,
}

impl PairedObservations {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self, StatsError> {
        if let Some(i) = pairs
            .iter()
            .position(|(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(StatsError::NonFinite(i));
        }
        Ok(Self { pairs })
    }

    pub fn from_slices(x: &[f64], y: &[f64]) -> Result<Self, StatsError> {
        if x.len() != y.len() {
            return Err(StatsError::DomainError(format!(
                "length mismatch {} vs {}",
                x.len(),
                y.len()
            )));
        }
        Self::new(x.iter().copied().zip(y.iter().copied()).collect())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    /// Nonzero differences `y - x`.
    fn nonzero_differences(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|(x, y)| y - x)
            .filter(|d| *d != 0.0)
            .collect()
    }

    pub fn swapped(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(|&(x, y)| (y, x)).collect(),
        }
    }
}

/// Signed-rank sums of a set of nonzero differences.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedRanks {
    /// Ranks of |d| (average ranks on ties), aligned with the input.
    pub ranks: Vec<f64>,
    pub w_plus: f64,
    pub w_minus: f64,
}

pub fn signed_ranks(diffs: &[f64]) -> SignedRanks {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut ranks = vec![0.0; diffs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && diffs[order[end]].abs() == diffs[order[start]].abs() {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    let (mut w_plus, mut w_minus) = (0.0, 0.0);
    for (d, r) in diffs.iter().zip(&ranks) {
        if *d > 0.0 {
            w_plus += r;
        } else {
            w_minus += r;
        }
    }
    SignedRanks {
        ranks,
        w_plus,
        w_minus,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMode {
    /// Normal approximation with continuity correction.
    #[default]
    Normal,
    /// Exact null distribution (n <= [`WILCOXON_EXACT_MAX_N`]).
    Exact,
}

/// Two-sided Wilcoxon signed-rank test using the normal approximation.
pub fn wilcoxon_signed_rank(pairs: &PairedObservations) -> TestResult {
    wilcoxon_with_mode(pairs, WilcoxonMode::Normal).expect("normal mode is total")
}

pub fn wilcoxon_with_mode(
    pairs: &PairedObservations,
    mode: WilcoxonMode,
) -> Result<TestResult, StatsError> {
    let diffs = pairs.nonzero_differences();
    let n = diffs.len();
    if n == 0 {
        return Ok(TestResult::new(TestKind::Wilcoxon, 0.0, 1.0, 0, 0));
    }
    let sr = signed_ranks(&diffs);
    let t = sr.w_plus.min(sr.w_minus);
    let direction = signum(sr.w_plus - sr.w_minus);
    let p = match mode {
        WilcoxonMode::Normal => {
            let nf = n as f64;
            let mu = nf * (nf + 1.0) / 4.0;
            let sigma = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0).sqrt();
            let z = (t - mu + 0.5) / sigma;
            // lower tail at z equals upper tail at -z
            2.0 * tail_probability(Tail::StandardNormal, -z)?
        }
        WilcoxonMode::Exact => {
            if n > WILCOXON_EXACT_MAX_N {
                return Err(StatsError::DomainError(format!(
                    "exact Wilcoxon supports n <= {WILCOXON_EXACT_MAX_N}, got {n}"
                )));
            }
            2.0 * exact_lower_tail(&sr.ranks, t)
        }
    };
    Ok(TestResult::new(TestKind::Wilcoxon, t, p.min(1.0), n, direction))
}

/// `P(W+ <= t)` under the null that each rank's sign is a fair coin.
/// Ranks are doubled to integers so tied (half-integer) ranks are exact.
fn exact_lower_tail(ranks: &[f64], t: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let limit = (t * 2.0).round() as usize;
    let hits: u64 = counts[..=limit.min(total)].iter().sum();
    hits as f64 / 2f64.powi(ranks.len() as i32)
}

/// Exact two-sided sign test; zero differences are excluded.
pub fn sign_test(pairs: &PairedObservations) -> TestResult {
    let diffs = pairs.nonzero_differences();
    let n = diffs.len();
    let plus = diffs.iter().filter(|d| **d > 0.0).count();
    let minus = n - plus;
    if n == 0 {
        return TestResult::new(TestKind::Sign, 0.0, 1.0, 0, 0);
    }
    let smaller = plus.min(minus) as f64;
    let tail = tail_probability(Tail::BinomialHalf { n: n as u64 }, smaller).expect("finite");
    TestResult::new(
        TestKind::Sign,
        plus as f64,
        (2.0 * tail).min(1.0),
        n,
        signum(plus as f64 - minus as f64),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn from_diffs(d: &[f64]) -> PairedObservations {
        PairedObservations::new(d.iter().map(|&v| (0.0, v)).collect()).unwrap()
    }

    #[test]
    fn mcnemar_examples() {
        let r = mcnemar(30.0, 10.0);
        assert_eq!(r.statistic, 10.0);
        assert_abs_diff_eq!(r.p_value, 0.001565, epsilon = 1e-6);
        assert!(r.reject);
        assert_eq!(r.direction, 1);

        let r = mcnemar(5.0, 5.0);
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = mcnemar(0.0, 0.0);
        assert_eq!((r.statistic, r.p_value, r.reject), (0.0, 1.0, false));
    }

    #[test]
    fn mcnemar_state_fades() {
        let mut s = McNemarState::new(0.5);
        s.update(false, true);
        s.update(true, false);
        assert_eq!((s.a, s.b), (0.5, 1.0));
        let mut s = McNemarState::new(1.0);
        for _ in 0..3 {
            s.update(false, true);
        }
        s.update(true, true);
        assert_eq!((s.a, s.b), (3.0, 0.0));
    }

    #[test]
    fn wilcoxon_hand_ranked() {
        let sr = signed_ranks(&[1.0, 2.0, 3.0]);
        assert_eq!((sr.w_plus, sr.w_minus), (6.0, 0.0));
        let r = wilcoxon_signed_rank(&from_diffs(&[1.0, 2.0, 3.0]));
        assert_eq!(r.statistic, 0.0);

        let sr = signed_ranks(&[1.0, -2.0, 3.0]);
        assert_eq!(sr.ranks, vec![1.0, 2.0, 3.0]);
        assert_eq!((sr.w_plus, sr.w_minus), (4.0, 2.0));
        assert_eq!(wilcoxon_signed_rank(&from_diffs(&[1.0, -2.0, 3.0])).statistic, 2.0);
    }

    #[test]
    fn wilcoxon_ties_get_average_ranks() {
        let sr = signed_ranks(&[1.0, -1.0, 2.0, 5.0, 5.0, 5.0]);
        assert_eq!(sr.ranks, vec![1.5, 1.5, 3.0, 5.0, 5.0, 5.0]);
    }

    #[test]
    fn wilcoxon_normal_approximation_n10() {
        let d: Vec<f64> = (1..=10).map(f64::from).collect();
        let r = wilcoxon_signed_rank(&from_diffs(&d));
        assert_eq!(r.statistic, 0.0);
        let z: f64 = (0.5 - 27.5) / 96.25f64.sqrt();
        assert_abs_diff_eq!(z, -2.752, epsilon = 1e-3);
        assert_abs_diff_eq!(r.p_value, 0.00592, epsilon = 1e-5);
        assert_eq!(r.direction, 1);
    }

    #[test]
    fn wilcoxon_exact_small_cases() {
        // n = 3, all positive: P(W+ <= 0) = 1/8, two-sided 1/4
        let r = wilcoxon_with_mode(&from_diffs(&[1.0, 2.0, 3.0]), WilcoxonMode::Exact).unwrap();
        assert_eq!(r.p_value, 0.25);
        // n = 10 all positive: 2/1024
        let d: Vec<f64> = (1..=10).map(f64::from).collect();
        let r = wilcoxon_with_mode(&from_diffs(&d), WilcoxonMode::Exact).unwrap();
        assert_eq!(r.p_value, 2.0 / 1024.0);
        let d: Vec<f64> = (1..=26).map(f64::from).collect();
        assert!(wilcoxon_with_mode(&from_diffs(&d), WilcoxonMode::Exact).is_err());
    }

    #[test]
    fn all_zero_differences() {
        let p = PairedObservations::new(vec![(0.3, 0.3); 5]).unwrap();
        let r = wilcoxon_signed_rank(&p);
        assert_eq!((r.p_value, r.n_effective), (1.0, 0));
        let r = sign_test(&p);
        assert_eq!((r.p_value, r.n_effective), (1.0, 0));
    }

    #[test]
    fn sign_test_examples() {
        let r = sign_test(&from_diffs(&[1.0; 10]));
        assert_eq!(r.p_value, 0.001953125);
        assert_eq!(r.statistic, 10.0);

        let mut d = vec![1.0; 5];
        d.extend([-1.0; 5]);
        assert_eq!(sign_test(&from_diffs(&d)).p_value, 1.0);

        let mut d = vec![1.0; 8];
        d.extend([-1.0; 2]);
        assert_eq!(sign_test(&from_diffs(&d)).p_value, 0.109375);

        let mut d = vec![1.0; 8];
        d.extend([0.0; 4]);
        assert_eq!(sign_test(&from_diffs(&d)).n_effective, 8);
    }

    #[test]
    fn tail_examples() {
        assert_eq!(tail_probability(Tail::Chi2Df1, 0.0).unwrap(), 1.0);
        assert!(matches!(
            tail_probability(Tail::Chi2Df1, -1.0),
            Err(StatsError::DomainError(_))
        ));
        assert_abs_diff_eq!(
            tail_probability(Tail::StandardNormal, 1.959964).unwrap(),
            0.025,
            epsilon = 1e-6
        );
        assert_eq!(
            tail_probability(Tail::BinomialHalf { n: 10 }, 2.0).unwrap(),
            56.0 / 1024.0
        );
        assert_eq!(tail_probability(Tail::BinomialHalf { n: 10 }, 10.0).unwrap(), 1.0);
    }

    #[test]
    fn binomial_large_n_matches_symmetry() {
        // P(X <= n/2 - 1) + P(X = n/2) + P(X >= n/2 + 1) = 1 with symmetric tails
        let n = 2000;
        let lower = tail_probability(Tail::BinomialHalf { n }, 999.0).unwrap();
        let upto_mid = tail_probability(Tail::BinomialHalf { n }, 1000.0).unwrap();
        assert_abs_diff_eq!(2.0 * lower + (upto_mid - lower), 1.0, epsilon = 1e-12);
        let big = binomial_half_cdf_log(2000, 999);
        assert_abs_diff_eq!(big, lower, epsilon = 1e-10);
    }

    #[test]
    fn rejects_nonfinite_pairs() {
        assert_eq!(
            PairedObservations::new(vec![(0.0, 1.0), (f64::NAN, 0.0)]),
            Err(StatsError::NonFinite(1))
        );
    }

    fn diffs() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(
            prop_oneof![(-50i32..50).prop_map(|v| v as f64 / 10.0), -1.0f64..1.0],
            1..30,
        )
    }

    proptest! {
        #[test]
        fn exchange_symmetry(d in diffs()) {
            let p = from_diffs(&d);
            let q = p.swapped();
            for (a, b) in [
                (wilcoxon_signed_rank(&p), wilcoxon_signed_rank(&q)),
                (sign_test(&p), sign_test(&q)),
            ] {
                prop_assert_eq!(a.p_value, b.p_value);
                prop_assert_eq!(a.direction, -b.direction);
            }
        }

        #[test]
        fn mcnemar_exchange_and_monotone(total in 1u32..200, a in 0u32..200) {
            let a = a.min(total);
            let b = total - a;
            let r = mcnemar(a as f64, b as f64);
            let s = mcnemar(b as f64, a as f64);
            prop_assert_eq!(r.p_value, s.p_value);
            prop_assert_eq!(r.direction, -s.direction);
            if a < total {
                // one more unit of imbalance toward a cannot raise p when a >= b
                let r2 = mcnemar((a + 1) as f64, (b - 1) as f64);
                if a >= b {
                    prop_assert!(r2.p_value <= r.p_value);
                }
            }
        }

        #[test]
        fn sign_test_monotone_in_imbalance(n in 1usize..60, plus in 0usize..60) {
            let plus = plus.min(n);
            let p = |k: usize| {
                let d: Vec<f64> = (0..n).map(|i| if i < k { 1.0 } else { -1.0 }).collect();
                sign_test(&from_diffs(&d)).p_value
            };
            if 2 * plus >= n && plus < n {
                prop_assert!(p(plus + 1) <= p(plus));
            }
        }

        #[test]
        fn sign_test_scale_invariant(d in diffs(), c in 0.001f64..1000.0) {
            let scaled: Vec<f64> = d.iter().map(|v| v * c).collect();
            let a = sign_test(&from_diffs(&d));
            let b = sign_test(&from_diffs(&scaled));
            prop_assert_eq!(a.statistic, b.statistic);
            prop_assert_eq!(a.p_value, b.p_value);
        }

        #[test]
        fn wilcoxon_invariant_to_monotone_odd_transform(d in diffs()) {
            // x -> x^3 + x is strictly increasing and odd
            let t: Vec<f64> = d.iter().map(|v| v * v * v + v).collect();
            let a = wilcoxon_signed_rank(&from_diffs(&d));
            let b = wilcoxon_signed_rank(&from_diffs(&t));
            prop_assert_eq!(a.statistic, b.statistic);
            prop_assert_eq!(a.p_value, b.p_value);
        }

        #[test]
        fn p_values_in_unit_interval(d in diffs()) {
            let p = from_diffs(&d);
            for r in [wilcoxon_signed_rank(&p), sign_test(&p)] {
                prop_assert!((0.0..=1.0).contains(&r.p_value));
                prop_assert_eq!(r.reject, r.p_value < DEFAULT_SIGNIFICANCE);
            }
        }
    }
}
