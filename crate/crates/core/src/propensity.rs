//! Empirical estimation of the logging policy from the full log.
//!
//! The logging policy is modeled by counting: for each `(context, action)`
//! pair the table records how often the action was displayed for that
//! context, and the probability is the ratio of exact integer counts, so the
//! per-context probabilities sum to 1 without drift. Context identity is the
//! explicit `context_id` field, never the feature vector.
//!
//! Fitting is a single order-independent counting pass; tables merge
//! associatively and commutatively, so counting can be chunked and reduced.
//! Lookups after fitting are read-only and thread-safe.
//!
//! Only the counting estimator ships; anything implementing
//! [`PropensityModel`] (a regression model, an exact simulator matrix) can
//! stand in for it downstream.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Anything that can report the estimated display probability of an action
/// for a context. The estimator consumes propensities only through this.
pub trait PropensityModel {
    /// Estimated probability in `[0, 1]`; 0 for unseen pairs.
    fn prob(&self, context_id: &str, action_id: &str) -> f64;
}

/// Which part of the log the empirical table is counted over.
///
/// `All` is the default: estimates from the full log are conservative for
/// new policies and optimistic for the logging policy. `Train` counts only
/// events before the `#split` marker; `Split` counts only events after it,
/// pairing with evaluation on the test segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitScope {
    All,
    Train,
    Split,
}

impl FromStr for FitScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "train" => Ok(Self::Train),
            "split" => Ok(Self::Split),
            other => Err(Error::Config(format!(
                "unknown scope {other:?} (expected all, train, or split)"
            ))),
        }
    }
}

/// Count table for the empirical logging-policy estimate.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PropensityTable {
    // context -> action -> pair count; context totals kept alongside so the
    // per-context counts always sum to the total by construction.
    counts: BTreeMap<String, BTreeMap<String, u64>>,
    totals: BTreeMap<String, u64>,
}

impl PropensityTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Count every event of the dataset.
    pub fn fit_empirical(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Estimation("cannot fit a propensity table on an empty dataset".into()));
        }
        let mut table = Self::new();
        for event in data.iter() {
            table.record(&event.context_id, &event.action_id);
        }
        Ok(table)
    }

    /// Add one observation.
    pub fn record(&mut self, context_id: &str, action_id: &str) {
        *self
            .counts
            .entry(context_id.to_string())
            .or_default()
            .entry(action_id.to_string())
            .or_insert(0) += 1;
        *self.totals.entry(context_id.to_string()).or_insert(0) += 1;
    }

    /// Combine two tables; the merge is associative and commutative.
    pub fn merge(mut self, other: Self) -> Self {
        for (context, row) in other.counts {
            let dst = self.counts.entry(context.clone()).or_default();
            for (action, n) in row {
                *dst.entry(action).or_insert(0) += n;
            }
        }
        for (context, n) in other.totals {
            *self.totals.entry(context).or_insert(0) += n;
        }
        self
    }

    /// Empirical probability; 0 when the pair (or the context) is unseen.
    pub fn prob(&self, context_id: &str, action_id: &str) -> f64 {
        let Some(total) = self.totals.get(context_id) else {
            return 0.0;
        };
        let pair = self
            .counts
            .get(context_id)
            .and_then(|row| row.get(action_id))
            .copied()
            .unwrap_or(0);
        pair as f64 / *total as f64
    }

    pub fn pair_count(&self, context_id: &str, action_id: &str) -> u64 {
        self.counts
            .get(context_id)
            .and_then(|row| row.get(action_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn context_count(&self, context_id: &str) -> u64 {
        self.totals.get(context_id).copied().unwrap_or(0)
    }

    /// Actions with positive empirical probability for this context, in id
    /// order; empty when the context is unseen.
    pub fn feasible_set(&self, context_id: &str) -> Vec<&str> {
        self.counts
            .get(context_id)
            .map(|row| row.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn feasible_len(&self, context_id: &str) -> usize {
        self.counts.get(context_id).map(BTreeMap::len).unwrap_or(0)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &str> {
        self.totals.keys().map(String::as_str)
    }

    /// Serialize as TAB-separated rows: context, action, pair count, context count.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# context_id\taction_id\tpair_count\tcontext_count\n");
        for (context, row) in &self.counts {
            let total = self.totals[context];
            for (action, n) in row {
                let _ = writeln!(out, "{context}\t{action}\t{n}\t{total}");
            }
        }
        out
    }

    /// Parse a serialized table, validating that the per-context pair counts
    /// sum to the recorded context count.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Self::new();
        let mut claimed: BTreeMap<String, u64> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Format(format!(
                    "line {}: expected 4 fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let pair: u64 = fields[2].parse().map_err(|_| {
                Error::Format(format!("line {}: bad pair count {:?}", lineno + 1, fields[2]))
            })?;
            let total: u64 = fields[3].parse().map_err(|_| {
                Error::Format(format!("line {}: bad context count {:?}", lineno + 1, fields[3]))
            })?;
            if pair == 0 {
                return Err(Error::Format(format!(
                    "line {}: zero pair count for a listed pair",
                    lineno + 1
                )));
            }
            let prev = table
                .counts
                .entry(fields[0].to_string())
                .or_default()
                .insert(fields[1].to_string(), pair);
            if prev.is_some() {
                return Err(Error::Format(format!(
                    "line {}: duplicate pair ({}, {})",
                    lineno + 1,
                    fields[0],
                    fields[1]
                )));
            }
            *table.totals.entry(fields[0].to_string()).or_insert(0) += pair;
            if let Some(&c) = claimed.get(fields[0]) {
                if c != total {
                    return Err(Error::Format(format!(
                        "line {}: context count for {} changed from {} to {}",
                        lineno + 1,
                        fields[0],
                        c,
                        total
                    )));
                }
            } else {
                claimed.insert(fields[0].to_string(), total);
            }
        }
        for (context, &total) in &claimed {
            if table.totals[context] != total {
                return Err(Error::Format(format!(
                    "context {context}: pair counts sum to {} but context count is {total}",
                    table.totals[context]
                )));
            }
        }
        Ok(table)
    }
}

impl PropensityModel for PropensityTable {
    fn prob(&self, context_id: &str, action_id: &str) -> f64 {
        PropensityTable::prob(self, context_id, action_id)
    }
}

/// Propensity that reports 1 for every pair; used by the unweighted naive
/// training path, where the importance weight degenerates to 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitPropensity;

impl PropensityModel for UnitPropensity {
    fn prob(&self, _context_id: &str, _action_id: &str) -> f64 {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LoggedEvent;
    use crate::sparse::SparseVector;
    use proptest::prelude::*;

    fn event(x: &str, a: &str) -> LoggedEvent {
        LoggedEvent::new(x, a, 0.0, SparseVector::empty(), SparseVector::empty()).unwrap()
    }

    fn dataset(pairs: &[(&str, &str)]) -> Dataset {
        Dataset::new(pairs.iter().map(|(x, a)| event(x, a)).collect())
    }

    #[test]
    fn counts_give_the_ratio() {
        let data = dataset(&[("x", "a"), ("x", "a"), ("x", "a"), ("x", "b")]);
        let table = PropensityTable::fit_empirical(&data).unwrap();
        assert_eq!(table.prob("x", "a"), 0.75);
        assert_eq!(table.prob("x", "b"), 0.25);
        assert_eq!(table.pair_count("x", "a"), 3);
        assert_eq!(table.context_count("x"), 4);
    }

    #[test]
    fn single_observation_has_probability_one() {
        let table = PropensityTable::fit_empirical(&dataset(&[("x", "a")])).unwrap();
        assert_eq!(table.prob("x", "a"), 1.0);
        assert_eq!(table.feasible_set("x"), vec!["a"]);
    }

    #[test]
    fn doubling_the_log_keeps_probabilities() {
        let pairs = [("x", "a"), ("x", "b"), ("y", "a"), ("x", "a")];
        let once = PropensityTable::fit_empirical(&dataset(&pairs)).unwrap();
        let doubled: Vec<_> = pairs.iter().chain(pairs.iter()).copied().collect();
        let twice = PropensityTable::fit_empirical(&dataset(&doubled)).unwrap();
        for x in ["x", "y"] {
            for a in ["a", "b"] {
                assert_eq!(once.prob(x, a), twice.prob(x, a));
            }
        }
    }

    #[test]
    fn unseen_lookups_are_zero_and_empty() {
        let table = PropensityTable::fit_empirical(&dataset(&[("x", "a")])).unwrap();
        assert_eq!(table.prob("x", "zzz"), 0.0);
        assert_eq!(table.prob("unseen", "a"), 0.0);
        assert!(table.feasible_set("unseen").is_empty());
    }

    #[test]
    fn repeated_single_action_is_the_whole_feasible_set() {
        let data = dataset(&[("x", "a"); 10]);
        let table = PropensityTable::fit_empirical(&data).unwrap();
        assert_eq!(table.feasible_set("x"), vec!["a"]);
        assert_eq!(table.prob("x", "a"), 1.0);
    }

    #[test]
    fn empty_dataset_is_an_estimation_error() {
        assert!(matches!(
            PropensityTable::fit_empirical(&Dataset::default()),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn table_text_round_trips() {
        let data = dataset(&[("x", "a"), ("x", "b"), ("y", "c"), ("x", "a")]);
        let table = PropensityTable::fit_empirical(&data).unwrap();
        let parsed = PropensityTable::parse(&table.to_text()).unwrap();
        assert_eq!(parsed, table);
    }

    #[test]
    fn parse_rejects_inconsistent_totals() {
        let text = "x\ta\t3\t5\nx\tb\t1\t5\n";
        assert!(PropensityTable::parse(text).is_err());
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one_and_order_does_not_matter(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60),
            seed in any::<u64>(),
        ) {
            let names = ["x0", "x1", "x2", "x3"];
            let acts = ["a0", "a1", "a2", "a3"];
            let items: Vec<(&str, &str)> =
                pairs.iter().map(|&(x, a)| (names[x], acts[a])).collect();
            let table = PropensityTable::fit_empirical(&dataset(&items)).unwrap();

            for x in table.contexts().collect::<Vec<_>>() {
                let sum: f64 = table
                    .feasible_set(x)
                    .iter()
                    .map(|a| table.prob(x, a))
                    .sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
            }

            // Permute the log with a toy LCG; the table must be identical.
            let mut shuffled = items.clone();
            let mut state = seed;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let permuted = PropensityTable::fit_empirical(&dataset(&shuffled)).unwrap();
            prop_assert_eq!(permuted, table);
        }

        #[test]
        fn merge_matches_single_pass(
            left in proptest::collection::vec((0usize..3, 0usize..3), 1..30),
            right in proptest::collection::vec((0usize..3, 0usize..3), 1..30),
        ) {
            let names = ["x0", "x1", "x2"];
            let acts = ["a0", "a1", "a2"];
            let to_items = |v: &[(usize, usize)]| -> Vec<(&str, &str)> {
                v.iter().map(|&(x, a)| (names[x], acts[a])).collect()
            };
            let l = PropensityTable::fit_empirical(&dataset(&to_items(&left))).unwrap();
            let r = PropensityTable::fit_empirical(&dataset(&to_items(&right))).unwrap();
            let mut all = to_items(&left);
            all.extend(to_items(&right));
            let whole = PropensityTable::fit_empirical(&dataset(&all)).unwrap();
            prop_assert_eq!(l.clone().merge(r.clone()), whole.clone());
            prop_assert_eq!(r.merge(l), whole);
        }
    }
}
