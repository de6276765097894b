//! Clipped inverse-propensity value estimation with confidence intervals.
//!
//! The value of a deterministic policy `h` on a log of T events is
//!
//! ```text
//! point = (1/T) * sum_t  r_t * I(h(x_t) = a_t) / max(prob(x_t, a_t), tau)
//! ```
//!
//! Each term lies in `[0, 1/tau]`, so the point estimate does too. The
//! threshold `tau` bounds the weight of rare actions at the cost of a
//! downward bias: actions displayed with low frequency have their value
//! underestimated, never overestimated.
//!
//! The interval comes from the relative-entropy form of the Chernoff bound.
//! Terms are rescaled by `tau` into `[0, 1]`, the set of means `q` with
//! `KL(m || q) <= ln(2/delta) / T` is found by bisection, and the endpoints
//! are rescaled back by `1/tau`. The bound assumes the samples are IID; logs
//! produced by T distinct policies yield independent but not identically
//! distributed terms, and the interval is reported as-is under that caveat.
//!
//! Per-event terms are combined with a fixed pairwise (tree) summation, so a
//! chunked parallel reduction over the same tree produces bit-identical
//! results to the sequential code path.

use std::collections::BTreeMap;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::propensity::{PropensityModel, PropensityTable};
use crate::sparse::SparseVector;

/// Threshold and confidence level used by the estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    tau: f64,
    delta: f64,
}

impl EstimatorConfig {
    pub const DEFAULT_DELTA: f64 = 0.05;

    /// `tau` must lie in `(0, 1]`, `delta` in `(0, 1)`.
    pub fn new(tau: f64, delta: f64) -> Result<Self> {
        if !tau.is_finite() || tau <= 0.0 || tau > 1.0 {
            return Err(Error::Config(format!("tau {tau} outside (0, 1]")));
        }
        if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
            return Err(Error::Config(format!("delta {delta} outside (0, 1)")));
        }
        Ok(Self { tau, delta })
    }

    /// Config with the default confidence level `delta = 0.05`.
    pub fn with_tau(tau: f64) -> Result<Self> {
        Self::new(tau, Self::DEFAULT_DELTA)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Point estimate with its two-sided confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Number of events the estimate was computed over.
    pub t: usize,
    pub tau: f64,
    pub delta: f64,
}

/// A deterministic map from contexts to actions, queried per logged event.
///
/// `None` means the policy abstains for this context (for example, an argmax
/// policy with an empty feasible set); abstentions never match the log.
pub trait Policy {
    fn decide(&self, context_id: &str, context_features: &SparseVector) -> Option<String>;
}

/// Table-backed policy for tests and simulation: context id -> action id.
#[derive(Debug, Clone, Default)]
pub struct FixedPolicy {
    choices: BTreeMap<String, String>,
}

impl FixedPolicy {
    pub fn new(choices: BTreeMap<String, String>) -> Self {
        Self { choices }
    }

    pub fn insert(&mut self, context_id: impl Into<String>, action_id: impl Into<String>) {
        self.choices.insert(context_id.into(), action_id.into());
    }
}

impl Policy for FixedPolicy {
    fn decide(&self, context_id: &str, _context_features: &SparseVector) -> Option<String> {
        self.choices.get(context_id).cloned()
    }
}

/// The importance weight `1 / max(p, tau)`, always in `[1, 1/tau]`.
pub fn clipped_weight(p: f64, tau: f64) -> Result<f64> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::Config(format!("tau {tau} must be positive")));
    }
    debug_assert!((0.0..=1.0 + 1e-12).contains(&p), "propensity {p} outside [0, 1]");
    Ok(1.0 / p.max(tau))
}

/// Sum with a fixed pairwise tree: split at the midpoint down to blocks of at
/// most 8 elements, which are summed left to right. The order is part of the
/// contract so chunked reductions reproduce it exactly.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Bernoulli relative entropy `KL(p || q)` in nats.
pub fn kl_bernoulli(p: f64, q: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
    if (p - q).abs() == 0.0 {
        return 0.0;
    }
    if q <= 0.0 || q >= 1.0 {
        return f64::INFINITY;
    }
    let left = if p == 0.0 { 0.0 } else { p * (p / q).ln() };
    let right = if p == 1.0 {
        0.0
    } else {
        (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
    };
    left + right
}

const KL_BISECT_TOL: f64 = 1e-10;

// Largest q in [m, 1] with KL(m || q) <= bound. KL is increasing in q there.
fn kl_upper_inverse(m: f64, bound: f64) -> f64 {
    if kl_bernoulli(m, 1.0) <= bound {
        return 1.0;
    }
    let (mut lo, mut hi) = (m, 1.0);
    while hi - lo > KL_BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if kl_bernoulli(m, mid) <= bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// Smallest q in [0, m] with KL(m || q) <= bound. KL is decreasing in q there.
fn kl_lower_inverse(m: f64, bound: f64) -> f64 {
    if kl_bernoulli(m, 0.0) <= bound {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, m);
    while hi - lo > KL_BISECT_TOL {
        let mid = 0.5 * (lo + hi);
        if kl_bernoulli(m, mid) <= bound {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided interval for a point estimate in `[0, 1/tau]`.
///
/// The point is rescaled by `tau` into `[0, 1]`, the relative-entropy
/// Chernoff bound `KL(m || q) <= ln(2/delta) / T` is inverted by bisection
/// (absolute tolerance 1e-10 in q), and the endpoints are rescaled by
/// `1/tau`.
pub fn confidence_interval(point: f64, t: usize, tau: f64, delta: f64) -> Result<(f64, f64)> {
    let cfg = EstimatorConfig::new(tau, delta)?;
    if t == 0 {
        return Err(Error::Estimation("confidence interval needs T >= 1".into()));
    }
    let cap = 1.0 / cfg.tau;
    if !point.is_finite() || point < 0.0 || point > cap * (1.0 + 1e-9) {
        return Err(Error::Domain(format!("point {point} outside [0, {cap}]")));
    }
    let m = (cfg.tau * point).clamp(0.0, 1.0);
    let bound = (2.0 / cfg.delta).ln() / t as f64;
    let lo = kl_lower_inverse(m, bound) / cfg.tau;
    let hi = kl_upper_inverse(m, bound) / cfg.tau;
    Ok((lo.min(point), hi.max(point.min(cap))))
}

fn finish(point_raw: f64, t: usize, cfg: EstimatorConfig) -> Result<ValueEstimate> {
    // Every term is in [0, 1/tau]; clamp float residue so the invariant
    // 0 <= point <= 1/tau is exact.
    let point = point_raw.clamp(0.0, 1.0 / cfg.tau);
    let (ci_low, ci_high) = confidence_interval(point, t, cfg.tau, cfg.delta)?;
    Ok(ValueEstimate {
        point,
        ci_low,
        ci_high,
        t,
        tau: cfg.tau,
        delta: cfg.delta,
    })
}

/// Estimate the value of a deterministic policy from a log.
///
/// Events where the policy disagrees with the logged action contribute
/// exactly zero.
pub fn evaluate_policy<P, M>(
    data: &Dataset,
    policy: &P,
    prop: &M,
    cfg: EstimatorConfig,
) -> Result<ValueEstimate>
where
    P: Policy + ?Sized,
    M: PropensityModel + ?Sized,
{
    if data.is_empty() {
        return Err(Error::Estimation("cannot evaluate a policy on an empty dataset".into()));
    }
    let mut terms = Vec::with_capacity(data.len());
    for event in data.iter() {
        let chosen = policy.decide(&event.context_id, &event.context_features);
        let term = if chosen.as_deref() == Some(event.action_id.as_str()) {
            let p = prop.prob(&event.context_id, &event.action_id);
            event.reward * clipped_weight(p, cfg.tau)?
        } else {
            0.0
        };
        terms.push(term);
    }
    finish(pairwise_sum(&terms) / data.len() as f64, data.len(), cfg)
}

/// Estimate the value of the policy that picks uniformly from the feasible
/// set, computed analytically: the match indicator is replaced by the exact
/// uniform probability `1/|C(x)|`, so no sampling happens and the result is
/// seed-free. The seed is reserved for an optional sampled variant.
pub fn evaluate_random_baseline(
    data: &Dataset,
    table: &PropensityTable,
    cfg: EstimatorConfig,
    _seed: u64,
) -> Result<ValueEstimate> {
    if data.is_empty() {
        return Err(Error::Estimation("cannot evaluate a policy on an empty dataset".into()));
    }
    let mut terms = Vec::with_capacity(data.len());
    for event in data.iter() {
        // With a table fitted on the same log the logged action is always
        // feasible; an infeasible pair can only mean a mismatched table.
        let pair = table.pair_count(&event.context_id, &event.action_id);
        debug_assert!(pair > 0, "logged action must be feasible under the fitted table");
        let term = if pair > 0 {
            let c = table.feasible_len(&event.context_id) as f64;
            let p = table.prob(&event.context_id, &event.action_id);
            event.reward * (1.0 / c) * clipped_weight(p, cfg.tau)?
        } else {
            0.0
        };
        terms.push(term);
    }
    finish(pairwise_sum(&terms) / data.len() as f64, data.len(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LoggedEvent;
    use proptest::prelude::*;

    fn event(x: &str, a: &str, r: f64) -> LoggedEvent {
        LoggedEvent::new(x, a, r, SparseVector::empty(), SparseVector::empty()).unwrap()
    }

    struct FlatProb(f64);

    impl PropensityModel for FlatProb {
        fn prob(&self, _x: &str, _a: &str) -> f64 {
            self.0
        }
    }

    /// Propensity keyed by (context, action) for hand-built cases.
    struct MapProb(BTreeMap<(String, String), f64>);

    impl MapProb {
        fn of(entries: &[(&str, &str, f64)]) -> Self {
            Self(
                entries
                    .iter()
                    .map(|&(x, a, p)| ((x.to_string(), a.to_string()), p))
                    .collect(),
            )
        }
    }

    impl PropensityModel for MapProb {
        fn prob(&self, x: &str, a: &str) -> f64 {
            self.0
                .get(&(x.to_string(), a.to_string()))
                .copied()
                .unwrap_or(0.0)
        }
    }

    fn log_policy(data: &Dataset) -> FixedPolicy {
        let mut p = FixedPolicy::default();
        for e in data.iter() {
            p.insert(e.context_id.clone(), e.action_id.clone());
        }
        p
    }

    #[test]
    fn clipped_weight_cases() {
        assert_eq!(clipped_weight(0.5, 0.05).unwrap(), 2.0);
        assert_eq!(clipped_weight(0.0, 0.05).unwrap(), 20.0);
        assert_eq!(clipped_weight(0.05, 0.05).unwrap(), 20.0);
        assert!(clipped_weight(0.5, 0.0).is_err());
        assert!(clipped_weight(0.5, -1.0).is_err());
    }

    #[test]
    fn single_matching_event_at_full_propensity() {
        let data = Dataset::new(vec![event("x", "a", 1.0)]);
        let cfg = EstimatorConfig::with_tau(0.05).unwrap();
        let est = evaluate_policy(&data, &log_policy(&data), &FlatProb(1.0), cfg).unwrap();
        assert_eq!(est.point, 1.0);
        assert!(est.ci_low <= est.point && est.point <= est.ci_high);
    }

    #[test]
    fn mismatching_policy_scores_zero() {
        let data = Dataset::new(vec![event("x", "a", 1.0), event("y", "b", 1.0)]);
        let mut h = FixedPolicy::default();
        h.insert("x", "other");
        // No decision at all for y.
        let cfg = EstimatorConfig::with_tau(0.05).unwrap();
        let est = evaluate_policy(&data, &h, &FlatProb(1.0), cfg).unwrap();
        assert_eq!(est.point, 0.0);
        assert_eq!(est.ci_low, 0.0);
    }

    #[test]
    fn two_event_hand_computation() {
        // Terms: 1 * 1/max(0.5, 0.1) = 2 and 0 * 1/max(0.25, 0.1) = 0.
        let data = Dataset::new(vec![event("x", "a", 1.0), event("y", "b", 0.0)]);
        let prop = MapProb::of(&[("x", "a", 0.5), ("y", "b", 0.25)]);
        let cfg = EstimatorConfig::with_tau(0.1).unwrap();
        let est = evaluate_policy(&data, &log_policy(&data), &prop, cfg).unwrap();
        assert_eq!(est.point, 1.0);
    }

    #[test]
    fn interval_zero_case_matches_closed_form() {
        // KL(0 || q) = -ln(1 - q), so the upper endpoint solves
        // -ln(1 - q) = ln(2/delta)/T, i.e. q = 1 - (delta/2)^(1/T).
        let (lo, hi) = confidence_interval(0.0, 1000, 1.0, 0.05).unwrap();
        let expected = 1.0 - (0.025f64).powf(1.0 / 1000.0);
        assert_eq!(lo, 0.0);
        assert!((hi - expected).abs() < 1e-9, "hi={hi} expected={expected}");
        assert!((expected - 0.003682).abs() < 1e-6);
    }

    #[test]
    fn interval_at_maximal_point_is_capped() {
        let (lo, hi) = confidence_interval(1.0 / 0.05, 100, 0.05, 0.05).unwrap();
        assert_eq!(hi, 1.0 / 0.05);
        assert!(lo <= hi);
    }

    #[test]
    fn interval_rejects_out_of_range_points() {
        assert!(matches!(
            confidence_interval(21.0, 10, 0.05, 0.05),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            confidence_interval(-0.5, 10, 0.05, 0.05),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn random_baseline_hand_case() {
        // One event, feasible set {a, b}, so the uniform pick probability is
        // 1/2 and the term is 1 * 0.5 * 1/max(0.5, 0.1) = 1.0.
        let data = Dataset::new(vec![event("x", "a", 1.0), event("x", "b", 0.0)]);
        let table = PropensityTable::fit_empirical(&data).unwrap();
        let cfg = EstimatorConfig::with_tau(0.1).unwrap();
        let est = evaluate_random_baseline(&data, &table, cfg, 0).unwrap();
        // Second event contributes 0 reward; first contributes 1.0; mean 0.5.
        assert_eq!(est.point, 0.5);
    }

    #[test]
    fn random_baseline_with_singleton_feasible_matches_logging_policy() {
        let data = Dataset::new(vec![event("x", "a", 0.8), event("x", "a", 0.4)]);
        let table = PropensityTable::fit_empirical(&data).unwrap();
        let cfg = EstimatorConfig::with_tau(0.1).unwrap();
        let random = evaluate_random_baseline(&data, &table, cfg, 0).unwrap();
        let logged = evaluate_policy(&data, &log_policy(&data), &table, cfg).unwrap();
        assert_eq!(random.point, logged.point);
    }

    #[test]
    fn random_baseline_zero_rewards() {
        let data = Dataset::new(vec![event("x", "a", 0.0), event("x", "b", 0.0)]);
        let table = PropensityTable::fit_empirical(&data).unwrap();
        let cfg = EstimatorConfig::with_tau(0.1).unwrap();
        let est = evaluate_random_baseline(&data, &table, cfg, 0).unwrap();
        assert_eq!(est.point, 0.0);
    }

    #[test]
    fn tau_one_is_the_plain_matched_average() {
        let data = Dataset::new(vec![
            event("x", "a", 1.0),
            event("y", "b", 0.5),
            event("z", "c", 0.0),
        ]);
        let cfg = EstimatorConfig::with_tau(1.0).unwrap();
        let est = evaluate_policy(&data, &log_policy(&data), &FlatProb(0.2), cfg).unwrap();
        assert!((est.point - 0.5).abs() < 1e-15);
    }

    #[test]
    fn duplicating_the_log_keeps_point_and_narrows_interval() {
        let data = Dataset::new(vec![event("x", "a", 1.0), event("y", "b", 0.25)]);
        let doubled = Dataset::new(
            data.events()
                .iter()
                .chain(data.events().iter())
                .cloned()
                .collect(),
        );
        let cfg = EstimatorConfig::with_tau(0.5).unwrap();
        let prop = FlatProb(0.5);
        let h = log_policy(&data);
        let once = evaluate_policy(&data, &h, &prop, cfg).unwrap();
        let twice = evaluate_policy(&doubled, &h, &prop, cfg).unwrap();
        assert_eq!(once.point, twice.point);
        assert!(twice.ci_high - twice.ci_low < once.ci_high - once.ci_low);
    }

    #[test]
    fn pairwise_sum_matches_reference_on_blocks() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 * 0.001).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn pairwise_sum_splits_reproduce_the_whole() {
        // The tree is fixed at midpoints, so a chunked reduction that sums
        // each half independently lands on the same bits.
        let xs: Vec<f64> = (0..211).map(|i| ((i * 37) % 101) as f64 * 1e-3 + 0.1).collect();
        let mid = xs.len() / 2;
        assert_eq!(pairwise_sum(&xs), pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..]));
    }

    proptest! {
        #[test]
        fn point_is_monotone_in_tau_and_bounded(
            rewards in proptest::collection::vec(0.0f64..=1.0, 1..40),
            probs in proptest::collection::vec(0.0f64..=1.0, 1..40),
            tau_lo in 0.01f64..1.0,
            tau_hi in 0.01f64..1.0,
        ) {
            let n = rewards.len().min(probs.len());
            let events: Vec<LoggedEvent> = (0..n)
                .map(|i| event(&format!("x{i}"), "a", rewards[i]))
                .collect();
            let data = Dataset::new(events);
            let prop = MapProb(
                (0..n)
                    .map(|i| ((format!("x{i}"), "a".to_string()), probs[i]))
                    .collect(),
            );
            let h = log_policy(&data);
            let (t1, t2) = if tau_lo <= tau_hi { (tau_lo, tau_hi) } else { (tau_hi, tau_lo) };
            let small = evaluate_policy(&data, &h, &prop, EstimatorConfig::with_tau(t1).unwrap()).unwrap();
            let large = evaluate_policy(&data, &h, &prop, EstimatorConfig::with_tau(t2).unwrap()).unwrap();
            // Smaller tau never shrinks the estimate.
            prop_assert!(small.point >= large.point - 1e-12);
            for est in [small, large] {
                prop_assert!(est.point >= 0.0 && est.point <= 1.0 / est.tau);
                prop_assert!(est.ci_low <= est.point + 1e-12);
                prop_assert!(est.point <= est.ci_high + 1e-12);
                prop_assert!(est.ci_high <= 1.0 / est.tau + 1e-9);
            }
        }

        #[test]
        fn interval_brackets_the_point(
            point_frac in 0.0f64..=1.0,
            t in 1usize..5000,
            tau in 0.01f64..=1.0,
            delta in 0.001f64..0.5,
        ) {
            let point = point_frac / tau;
            let (lo, hi) = confidence_interval(point, t, tau, delta).unwrap();
            prop_assert!(0.0 <= lo && lo <= point + 1e-12);
            prop_assert!(point <= hi + 1e-12);
            prop_assert!(hi <= 1.0 / tau + 1e-9);
        }
    }
}
