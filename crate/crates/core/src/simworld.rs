//! Finite synthetic contextual-bandit worlds with exact brute-force oracles.
//!
//! A world is a finite context distribution, a finite action set, and a
//! reward-mean matrix. Logging runs a sequence of (possibly deterministic)
//! policies, one per round; the uniform mixture of that sequence is the
//! stochastic policy the estimator behaves as if it had observed. With
//! deterministic rewards every expectation is a finite sum, so estimator
//! means, policy values, and bias bounds can be computed exactly and checked
//! against full enumeration of all outcome sequences. Bernoulli rewards
//! exist for interval-coverage experiments; their means enter the exact
//! formulas analytically.
//!
//! All oracles are pure functions; Monte Carlo helpers derive one seed per
//! trial so runs are reproducible and parallelizable.
//!
//! World and policy-sequence files are plain text with `[section]` headers;
//! see `parse` on the respective types.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{parse_feature_list, ActionCatalog, Dataset, LoggedEvent};
use crate::error::{Error, Result};
use crate::estimator::{evaluate_policy, EstimatorConfig, FixedPolicy};
use crate::propensity::PropensityModel;
use crate::sparse::{hash_token, SparseVector};

/// Row-stochastic matrix indexed `[context][action]`.
pub type Matrix = Vec<Vec<f64>>;

const ROW_SUM_TOL: f64 = 1e-12;
/// Slack for comparing exact floating-point sums against one another.
const FLOAT_SLACK: f64 = 1e-9;
/// Enumeration guard for [`enumerate_estimator_mean`].
const MAX_ENUM_TERMS: f64 = 1e7;

/// How rewards are realized when logging events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    /// The reward vector is a fixed function of the context.
    Deterministic,
    /// Each reward is a Bernoulli draw with the configured mean.
    Bernoulli,
}

/// A finite contextual-bandit instance supporting exact enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    contexts: Vec<String>,
    context_probs: Vec<f64>,
    actions: Vec<String>,
    reward_means: Matrix,
    reward_kind: RewardKind,
    context_features: Vec<SparseVector>,
    action_features: Vec<SparseVector>,
}

impl SyntheticWorld {
    /// Build a world with identity features (one hashed unit feature per
    /// context/action id). Context probabilities must sum to 1 within 1e-12
    /// and reward means must lie in `[0, 1]`.
    pub fn new(
        contexts: Vec<(String, f64)>,
        actions: Vec<String>,
        reward_means: Matrix,
        reward_kind: RewardKind,
    ) -> Result<Self> {
        if contexts.is_empty() || actions.is_empty() {
            return Err(Error::Format("world needs at least one context and one action".into()));
        }
        let (ids, probs): (Vec<String>, Vec<f64>) = contexts.into_iter().unzip();
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Format(format!(
                "context probabilities must be nonnegative and sum to 1 (sum {sum})"
            )));
        }
        if reward_means.len() != ids.len()
            || reward_means.iter().any(|row| row.len() != actions.len())
        {
            return Err(Error::Format("reward matrix shape does not match contexts x actions".into()));
        }
        if reward_means
            .iter()
            .flatten()
            .any(|m| !m.is_finite() || !(0.0..=1.0).contains(m))
        {
            return Err(Error::Format("reward means must lie in [0, 1]".into()));
        }
        let context_features = ids
            .iter()
            .map(|id| SparseVector::canonicalize([(hash_token(id), 1.0)]).expect("finite"))
            .collect();
        let action_features = actions
            .iter()
            .map(|id| SparseVector::canonicalize([(hash_token(id), 1.0)]).expect("finite"))
            .collect();
        Ok(Self {
            contexts: ids,
            context_probs: probs,
            actions,
            reward_means,
            reward_kind,
            context_features,
            action_features,
        })
    }

    pub fn n_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn context_id(&self, i: usize) -> &str {
        &self.contexts[i]
    }

    pub fn action_id(&self, j: usize) -> &str {
        &self.actions[j]
    }

    pub fn context_index(&self, id: &str) -> Option<usize> {
        self.contexts.iter().position(|c| c == id)
    }

    pub fn action_index(&self, id: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == id)
    }

    pub fn context_prob(&self, i: usize) -> f64 {
        self.context_probs[i]
    }

    pub fn reward_mean(&self, i: usize, j: usize) -> f64 {
        self.reward_means[i][j]
    }

    pub fn reward_kind(&self) -> RewardKind {
        self.reward_kind
    }

    pub fn context_features(&self, i: usize) -> &SparseVector {
        &self.context_features[i]
    }

    pub fn action_features(&self, j: usize) -> &SparseVector {
        &self.action_features[j]
    }

    /// Replace the default identity features.
    pub fn set_context_features(&mut self, id: &str, features: SparseVector) -> Result<()> {
        let i = self
            .context_index(id)
            .ok_or_else(|| Error::Format(format!("unknown context {id:?}")))?;
        self.context_features[i] = features;
        Ok(())
    }

    pub fn set_action_features(&mut self, id: &str, features: SparseVector) -> Result<()> {
        let j = self
            .action_index(id)
            .ok_or_else(|| Error::Format(format!("unknown action {id:?}")))?;
        self.action_features[j] = features;
        Ok(())
    }

    /// Catalog of every action in the world, including never-logged ones.
    pub fn catalog(&self) -> ActionCatalog {
        let mut catalog = ActionCatalog::new();
        for (j, id) in self.actions.iter().enumerate() {
            catalog.insert(id.clone(), self.action_features[j].clone());
        }
        catalog
    }

    /// Parse a world file. Sections:
    ///
    /// ```text
    /// [contexts]        id TAB probability, one per line
    /// [actions]         id, one per line
    /// [rewards]         context_id TAB mean per action, in action order
    /// [reward_kind]     deterministic | bernoulli
    /// [context_features]  optional: id TAB feature list
    /// [action_features]   optional: id TAB feature list
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut contexts: Vec<(String, f64)> = Vec::new();
        let mut actions: Vec<String> = Vec::new();
        let mut reward_rows: Vec<(String, Vec<f64>)> = Vec::new();
        let mut kind = RewardKind::Deterministic;
        let mut ctx_features: Vec<(String, SparseVector)> = Vec::new();
        let mut act_features: Vec<(String, SparseVector)> = Vec::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            let at = |msg: String| Error::Format(format!("line {}: {msg}", lineno + 1));
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.to_string();
                continue;
            }
            match section.as_str() {
                "contexts" => {
                    let (id, p) = line
                        .split_once('\t')
                        .ok_or_else(|| at("expected id TAB probability".into()))?;
                    let p: f64 = p.parse().map_err(|_| at(format!("bad probability {p:?}")))?;
                    contexts.push((id.to_string(), p));
                }
                "actions" => actions.push(line.to_string()),
                "rewards" => {
                    let mut parts = line.split('\t');
                    let id = parts.next().unwrap_or("").to_string();
                    let row = parts
                        .map(|v| v.parse::<f64>().map_err(|_| at(format!("bad reward {v:?}"))))
                        .collect::<Result<Vec<f64>>>()?;
                    reward_rows.push((id, row));
                }
                "reward_kind" => {
                    kind = match line {
                        "deterministic" => RewardKind::Deterministic,
                        "bernoulli" => RewardKind::Bernoulli,
                        other => return Err(at(format!("unknown reward kind {other:?}"))),
                    };
                }
                "context_features" | "action_features" => {
                    let (id, list) = line
                        .split_once('\t')
                        .ok_or_else(|| at("expected id TAB features".into()))?;
                    let features = parse_feature_list(list).map_err(|e| at(e.to_string()))?;
                    if section == "context_features" {
                        ctx_features.push((id.to_string(), features));
                    } else {
                        act_features.push((id.to_string(), features));
                    }
                }
                other => return Err(at(format!("line outside a known section ({other:?})"))),
            }
        }
        let mut means = vec![vec![0.0; actions.len()]; contexts.len()];
        if reward_rows.len() != contexts.len() {
            return Err(Error::Format(format!(
                "[rewards] has {} rows for {} contexts",
                reward_rows.len(),
                contexts.len()
            )));
        }
        for (id, row) in reward_rows {
            let i = contexts
                .iter()
                .position(|(c, _)| *c == id)
                .ok_or_else(|| Error::Format(format!("rewards for unknown context {id:?}")))?;
            if row.len() != actions.len() {
                return Err(Error::Format(format!(
                    "rewards row for {id:?} has {} values for {} actions",
                    row.len(),
                    actions.len()
                )));
            }
            means[i] = row;
        }
        let mut world = Self::new(contexts, actions, means, kind)?;
        for (id, features) in ctx_features {
            world.set_context_features(&id, features)?;
        }
        for (id, features) in act_features {
            world.set_action_features(&id, features)?;
        }
        Ok(world)
    }
}

/// The per-round logging policies; round t draws its action from policy t.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySequence {
    policies: Vec<Matrix>,
}

impl PolicySequence {
    /// Validate shape and row sums against the world.
    pub fn new(policies: Vec<Matrix>, world: &SyntheticWorld) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::Format("policy sequence must have T >= 1".into()));
        }
        for (t, matrix) in policies.iter().enumerate() {
            validate_policy_matrix(matrix, world)
                .map_err(|e| Error::Format(format!("policy {t}: {e}")))?;
        }
        Ok(Self { policies })
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn policies(&self) -> &[Matrix] {
        &self.policies
    }

    /// Repeat the sequence cyclically to exactly `rounds` policies.
    pub fn cycled(&self, rounds: usize) -> Result<Self> {
        if rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        let policies = (0..rounds)
            .map(|t| self.policies[t % self.policies.len()].clone())
            .collect();
        Ok(Self { policies })
    }

    /// Parse a policy-sequence file: one `[policy]` section per policy, an
    /// optional `repeat TAB n` line, then one `context_id TAB p...` row per
    /// context with probabilities in action order.
    pub fn parse(text: &str, world: &SyntheticWorld) -> Result<Self> {
        struct Block {
            repeat: usize,
            rows: Vec<(String, Vec<f64>)>,
        }
        let mut blocks: Vec<Block> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            let at = |msg: String| Error::Format(format!("line {}: {msg}", lineno + 1));
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[policy]" {
                blocks.push(Block { repeat: 1, rows: Vec::new() });
                continue;
            }
            let block = blocks
                .last_mut()
                .ok_or_else(|| at("row before the first [policy] section".into()))?;
            if let Some(n) = line.strip_prefix("repeat\t") {
                block.repeat = n.parse().map_err(|_| at(format!("bad repeat count {n:?}")))?;
                if block.repeat == 0 {
                    return Err(at("repeat must be >= 1".into()));
                }
                continue;
            }
            let mut parts = line.split('\t');
            let id = parts.next().unwrap_or("").to_string();
            let row = parts
                .map(|v| v.parse::<f64>().map_err(|_| at(format!("bad probability {v:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            block.rows.push((id, row));
        }
        let mut policies = Vec::new();
        for block in blocks {
            let mut matrix = vec![Vec::new(); world.n_contexts()];
            let mut seen = vec![false; world.n_contexts()];
            for (id, row) in block.rows {
                let i = world
                    .context_index(&id)
                    .ok_or_else(|| Error::Format(format!("unknown context {id:?} in policy")))?;
                if seen[i] {
                    return Err(Error::Format(format!("duplicate row for context {id:?}")));
                }
                seen[i] = true;
                matrix[i] = row;
            }
            if let Some(i) = seen.iter().position(|s| !s) {
                return Err(Error::Format(format!(
                    "policy missing a row for context {:?}",
                    world.context_id(i)
                )));
            }
            for _ in 0..block.repeat {
                policies.push(matrix.clone());
            }
        }
        Self::new(policies, world)
    }
}

fn validate_policy_matrix(matrix: &Matrix, world: &SyntheticWorld) -> Result<()> {
    if matrix.len() != world.n_contexts() {
        return Err(Error::Format(format!(
            "matrix has {} rows for {} contexts",
            matrix.len(),
            world.n_contexts()
        )));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != world.n_actions() {
            return Err(Error::Format(format!(
                "row {i} has {} entries for {} actions",
                row.len(),
                world.n_actions()
            )));
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Format(format!("row {i} must sum to 1 (sum {sum})")));
        }
    }
    Ok(())
}

/// Uniform mixture of the sequence: `pi(a|x) = (1/T) sum_t pi_t(a|x)`.
/// Two deterministic policies choosing `a` then `b` mix to probability 0.5
/// each, which is how a varying deterministic logger looks stochastic.
pub fn mixture_policy(seq: &PolicySequence) -> Matrix {
    let t = seq.len() as f64;
    let first = &seq.policies()[0];
    let mut out = vec![vec![0.0; first[0].len()]; first.len()];
    for matrix in seq.policies() {
        for (i, row) in matrix.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                out[i][j] += p;
            }
        }
    }
    for row in &mut out {
        for p in row.iter_mut() {
            *p /= t;
        }
    }
    out
}

fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = i;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}

/// Simulate one log: round t draws a context from the world, an action from
/// policy t, and records the realized reward of that action. Fully
/// determined by the seed.
pub fn log_events(world: &SyntheticWorld, seq: &PolicySequence, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(seq.len());
    for matrix in seq.policies() {
        let x = sample_index(&world.context_probs, rng.random::<f64>());
        let a = sample_index(&matrix[x], rng.random::<f64>());
        let mean = world.reward_means[x][a];
        let reward = match world.reward_kind {
            RewardKind::Deterministic => mean,
            RewardKind::Bernoulli => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
        };
        events.push(
            LoggedEvent::new(
                world.contexts[x].clone(),
                world.actions[a].clone(),
                reward,
                world.context_features[x].clone(),
                world.action_features[a].clone(),
            )
            .expect("world rewards are valid"),
        );
    }
    Dataset::new(events)
}

/// Exact value of a deterministic policy, given as an action index per
/// context: `sum_x P(x) * mean(x, h(x))`.
pub fn exact_policy_value(world: &SyntheticWorld, h: &[usize]) -> f64 {
    assert_eq!(h.len(), world.n_contexts(), "policy must cover every context");
    world
        .context_probs
        .iter()
        .enumerate()
        .map(|(i, &px)| px * world.reward_means[i][h[i]])
        .sum()
}

/// Exact value of a stochastic policy matrix.
pub fn exact_stochastic_value(world: &SyntheticWorld, pi: &Matrix) -> f64 {
    let mut value = 0.0;
    for (i, &px) in world.context_probs.iter().enumerate() {
        for (j, &p) in pi[i].iter().enumerate() {
            value += px * p * world.reward_means[i][j];
        }
    }
    value
}

/// Closed-form expectation of the clipped estimator under the mixture
/// policy: `E_x sum_a pi(a|x) mean(x,a) I(h(x)=a) / max(pihat(x,a), tau)`.
pub fn exact_estimator_expectation(
    world: &SyntheticWorld,
    seq: &PolicySequence,
    h: &[usize],
    pi_hat: &Matrix,
    tau: f64,
) -> f64 {
    assert!(tau > 0.0, "tau must be positive");
    let pi = mixture_policy(seq);
    estimator_mean_under(world, &pi, h, pi_hat, tau)
}

fn estimator_mean_under(
    world: &SyntheticWorld,
    pi: &Matrix,
    h: &[usize],
    pi_hat: &Matrix,
    tau: f64,
) -> f64 {
    let mut mean = 0.0;
    for (i, &px) in world.context_probs.iter().enumerate() {
        let a = h[i];
        mean += px * pi[i][a] * world.reward_means[i][a] / pi_hat[i][a].max(tau);
    }
    mean
}

/// Brute-force expectation of the estimator: enumerate every length-T
/// sequence of (context, action) outcomes, weight each by its probability,
/// and average the resulting estimator values. Rewards enter through their
/// means, which is their exact expectation for both reward kinds.
///
/// This is the independent oracle for the closed form above; the two must
/// agree to 1e-12 on every enumerable instance.
pub fn enumerate_estimator_mean(
    world: &SyntheticWorld,
    seq: &PolicySequence,
    h: &[usize],
    pi_hat: &Matrix,
    tau: f64,
) -> Result<f64> {
    assert!(tau > 0.0, "tau must be positive");
    let states = (world.n_contexts() * world.n_actions()) as f64;
    let terms = states.powi(seq.len() as i32);
    if terms > MAX_ENUM_TERMS {
        return Err(Error::Capacity(format!(
            "enumeration needs {terms:.3e} weighted terms (limit {MAX_ENUM_TERMS:.0e})"
        )));
    }
    // Depth-first over rounds, carrying the sequence probability and the
    // partial sum of estimator terms; zero-probability branches are pruned.
    struct Walker<'a> {
        world: &'a SyntheticWorld,
        seq: &'a PolicySequence,
        h: &'a [usize],
        pi_hat: &'a Matrix,
        tau: f64,
        total: f64,
    }
    impl Walker<'_> {
        fn walk(&mut self, t: usize, prob: f64, sum: f64) {
            if t == self.seq.len() {
                self.total += prob * (sum / self.seq.len() as f64);
                return;
            }
            let matrix = &self.seq.policies()[t];
            for (x, &px) in self.world.context_probs.iter().enumerate() {
                if px == 0.0 {
                    continue;
                }
                for (a, &pa) in matrix[x].iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    let term = if self.h[x] == a {
                        self.world.reward_means[x][a] / self.pi_hat[x][a].max(self.tau)
                    } else {
                        0.0
                    };
                    self.walk(t + 1, prob * px * pa, sum + term);
                }
            }
        }
    }
    let mut walker = Walker { world, seq, h, pi_hat, tau, total: 0.0 };
    walker.walk(0, 1.0, 0.0);
    Ok(walker.total)
}

/// Worst squared propensity error per context:
/// `reg(x) = max_a (pi(a|x) - pihat(a|x))^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretProfile {
    per_context: Vec<f64>,
}

impl RegretProfile {
    pub fn compute(pi: &Matrix, pi_hat: &Matrix) -> Self {
        assert_eq!(pi.len(), pi_hat.len());
        let per_context = pi
            .iter()
            .zip(pi_hat)
            .map(|(row, hat_row)| {
                row.iter()
                    .zip(hat_row)
                    .map(|(p, q)| (p - q) * (p - q))
                    .fold(0.0f64, f64::max)
            })
            .collect();
        Self { per_context }
    }

    pub fn get(&self, context: usize) -> f64 {
        self.per_context[context]
    }

    pub fn values(&self) -> &[f64] {
        &self.per_context
    }

    /// `E_x[reg(x)]` under the world's context distribution.
    pub fn expectation(&self, world: &SyntheticWorld) -> f64 {
        self.per_context
            .iter()
            .enumerate()
            .map(|(i, r)| world.context_prob(i) * r)
            .sum()
    }
}

/// The exact two-sided bias bound around the estimator mean, evaluated on a
/// single stochastic logging policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasBounds {
    pub lower: f64,
    pub upper: f64,
    pub mean: f64,
    pub ok: bool,
}

/// Compute `E_x[I(pi(h(x)|x) >= tau) (V^h(x) - sqrt(reg(x))/tau)]` as the
/// lower bound, `V^h + E_x[I(...) sqrt(reg(x))/tau]` as the upper bound, and
/// the exact estimator mean between them.
pub fn bias_bounds(
    world: &SyntheticWorld,
    pi: &Matrix,
    pi_hat: &Matrix,
    tau: f64,
    h: &[usize],
) -> BiasBounds {
    assert!(tau > 0.0, "tau must be positive");
    let reg = RegretProfile::compute(pi, pi_hat);
    let value = exact_policy_value(world, h);
    let mut lower = 0.0;
    let mut penalty = 0.0;
    for (i, &px) in world.context_probs.iter().enumerate() {
        if pi[i][h[i]] >= tau {
            let slack = reg.get(i).sqrt() / tau;
            lower += px * (world.reward_means[i][h[i]] - slack);
            penalty += px * slack;
        }
    }
    let upper = value + penalty;
    let mean = estimator_mean_under(world, pi, h, pi_hat, tau);
    let ok = lower - FLOAT_SLACK <= mean && mean <= upper + FLOAT_SLACK;
    BiasBounds { lower, upper, mean, ok }
}

fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a golden-ratio stream.
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Propensity view of an exact per-world matrix, for feeding simulated
/// truths (or perturbations of them) straight into the estimator.
pub struct MatrixPropensity<'a> {
    world: &'a SyntheticWorld,
    matrix: &'a Matrix,
}

impl<'a> MatrixPropensity<'a> {
    pub fn new(world: &'a SyntheticWorld, matrix: &'a Matrix) -> Self {
        Self { world, matrix }
    }
}

impl PropensityModel for MatrixPropensity<'_> {
    fn prob(&self, context_id: &str, action_id: &str) -> f64 {
        match (self.world.context_index(context_id), self.world.action_index(action_id)) {
            (Some(i), Some(j)) => self.matrix[i][j],
            _ => 0.0,
        }
    }
}

/// Deterministic index policy as an estimator [`FixedPolicy`] keyed by id.
pub fn index_policy(world: &SyntheticWorld, h: &[usize]) -> FixedPolicy {
    let mut policy = FixedPolicy::default();
    for (i, &a) in h.iter().enumerate() {
        policy.insert(world.context_id(i), world.action_id(a));
    }
    policy
}

/// Fraction of simulated logs whose estimator lands farther than the
/// Hoeffding radius `(1/tau) sqrt(ln(2/delta) / (2T))` from the exact mean.
/// The bound promises this fraction is at most `delta` up to binomial noise.
pub fn hoeffding_check(
    world: &SyntheticWorld,
    seq: &PolicySequence,
    h: &[usize],
    pi_hat: &Matrix,
    cfg: EstimatorConfig,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let (tau, delta) = (cfg.tau(), cfg.delta());
    let mean = exact_estimator_expectation(world, seq, h, pi_hat, tau);
    let t = seq.len() as f64;
    let radius = (1.0 / tau) * ((2.0 / delta).ln() / (2.0 * t)).sqrt();
    let policy = index_policy(world, h);
    let prop = MatrixPropensity::new(world, pi_hat);
    let mut violations = 0usize;
    for trial in 0..trials {
        let data = log_events(world, seq, derive_seed(seed, trial as u64));
        let est = evaluate_policy(&data, &policy, &prop, cfg)?;
        if (est.point - mean).abs() > radius {
            violations += 1;
        }
    }
    Ok(violations as f64 / trials as f64)
}

/// Reproducible generator for random desk-scale instances. Distribution
/// rows come from a normalized-uniform scheme: draw k uniforms and divide
/// by their sum.
pub struct InstanceGen {
    rng: ChaCha8Rng,
}

impl InstanceGen {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn normalized_row(&mut self, k: usize) -> Vec<f64> {
        loop {
            let row: Vec<f64> = (0..k).map(|_| self.rng.random::<f64>()).collect();
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                let mut row: Vec<f64> = row.iter().map(|v| v / sum).collect();
                // Force the row to sum to 1 exactly enough for validation.
                let correction: f64 = 1.0 - row.iter().sum::<f64>();
                row[k - 1] += correction;
                return row;
            }
        }
    }

    pub fn world(&mut self, n_contexts: usize, n_actions: usize, kind: RewardKind) -> SyntheticWorld {
        let probs = self.normalized_row(n_contexts);
        let contexts = (0..n_contexts)
            .map(|i| (format!("x{i}"), probs[i]))
            .collect();
        let actions = (0..n_actions).map(|j| format!("a{j}")).collect();
        let means = (0..n_contexts)
            .map(|_| (0..n_actions).map(|_| self.rng.random::<f64>()).collect())
            .collect();
        SyntheticWorld::new(contexts, actions, means, kind).expect("generated world is valid")
    }

    pub fn policy_matrix(&mut self, n_contexts: usize, n_actions: usize) -> Matrix {
        (0..n_contexts).map(|_| self.normalized_row(n_actions)).collect()
    }

    pub fn sequence(&mut self, world: &SyntheticWorld, t: usize) -> PolicySequence {
        let policies = (0..t)
            .map(|_| self.policy_matrix(world.n_contexts(), world.n_actions()))
            .collect();
        PolicySequence::new(policies, world).expect("generated sequence is valid")
    }

    pub fn deterministic_policy(&mut self, n_contexts: usize, n_actions: usize) -> Vec<usize> {
        (0..n_contexts)
            .map(|_| self.rng.random_range(0..n_actions))
            .collect()
    }

    pub fn pick(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }
}
