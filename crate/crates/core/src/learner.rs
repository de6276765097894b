//! Warm-start policy training: importance-weighted squared-loss SGD on
//! crossed page/ad features, argmax policies over the feasible set, and the
//! deliberately flawed naive baseline.
//!
//! The regressor minimizes `w * (y - f(x, a))^2` with
//! `w = 1 / max(prob(a|x), tau)`, the same clip the estimator uses, so one
//! tau flows through both. SGD runs over events in log order (the order is
//! part of the algorithm), weights start at zero, and there is no
//! regularization. A step on event `(x, a, y)` with prediction `p` adds
//! `2 * eta * w * (y - p) * value` to each active crossed weight; the
//! constant 2 is fixed so finite-difference checks of the gradient are
//! exact. The intercept is added to every score but is not an SGD
//! parameter: zero-initialized training leaves it 0, and model files may
//! carry a hand-set value.
//!
//! Model application is read-only and thread-safe; the learning-rate sweep
//! runs its candidates independently (optionally in parallel) and selects by
//! weighted training error, ties going to the smaller rate.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::{ActionCatalog, Dataset};
use crate::error::{Error, Result};
use crate::estimator::{clipped_weight, pairwise_sum, Policy};
use crate::propensity::{PropensityModel, PropensityTable};
use crate::sparse::{cross_features, sparse_dot, SparseVector};

/// Linear click regressor over crossed features.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearModel {
    pub weights: BTreeMap<u64, f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Score an (already crossed) feature vector.
    pub fn score(&self, crossed: &SparseVector) -> f64 {
        sparse_dot(&self.weights, crossed) + self.intercept
    }

    /// Score a (context, action) pair by crossing its feature vectors.
    pub fn predict(&self, context: &SparseVector, action: &SparseVector) -> f64 {
        self.score(&cross_features(context, action))
    }

    pub fn is_finite(&self) -> bool {
        self.intercept.is_finite() && self.weights.values().all(|w| w.is_finite())
    }
}

/// Header recorded alongside the weights in a model file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMeta {
    pub tau: f64,
    pub learning_rate: f64,
    pub passes: usize,
}

/// Render a model file: header key/value lines, then `feature_id TAB weight`
/// rows. Weights use the shortest round-trip decimal form.
pub fn write_model(model: &LinearModel, meta: &ModelMeta) -> String {
    let mut out = String::from("# banditkit model v1\n");
    let _ = writeln!(out, "intercept\t{}", model.intercept);
    let _ = writeln!(out, "tau\t{}", meta.tau);
    let _ = writeln!(out, "learning_rate\t{}", meta.learning_rate);
    let _ = writeln!(out, "passes\t{}", meta.passes);
    for (id, weight) in &model.weights {
        let _ = writeln!(out, "{id}\t{weight}");
    }
    out
}

/// Parse a model file written by [`write_model`].
pub fn parse_model(text: &str) -> Result<(LinearModel, ModelMeta)> {
    let mut model = LinearModel::zero();
    let mut tau = None;
    let mut learning_rate = None;
    let mut passes = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('\t').ok_or_else(|| {
            Error::Format(format!("line {}: expected key TAB value", lineno + 1))
        })?;
        let bad = |what: &str| Error::Format(format!("line {}: bad {what} {value:?}", lineno + 1));
        if let Ok(id) = key.parse::<u64>() {
            let weight: f64 = value.parse().map_err(|_| bad("weight"))?;
            model.weights.insert(id, weight);
        } else {
            match key {
                "intercept" => model.intercept = value.parse().map_err(|_| bad("intercept"))?,
                "tau" => tau = Some(value.parse().map_err(|_| bad("tau"))?),
                "learning_rate" => {
                    learning_rate = Some(value.parse().map_err(|_| bad("learning_rate"))?)
                }
                "passes" => passes = Some(value.parse().map_err(|_| bad("passes"))?),
                other => {
                    return Err(Error::Format(format!(
                        "line {}: unknown header key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
    }
    let meta = ModelMeta {
        tau: tau.ok_or_else(|| Error::Format("model file missing tau header".into()))?,
        learning_rate: learning_rate
            .ok_or_else(|| Error::Format("model file missing learning_rate header".into()))?,
        passes: passes.ok_or_else(|| Error::Format("model file missing passes header".into()))?,
    };
    Ok((model, meta))
}

/// Settings for the SGD trainer and the learning-rate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rates: Vec<f64>,
    pub passes: usize,
    pub tau: f64,
    /// Reserved for samplers; SGD itself visits events strictly in log order.
    pub seed: u64,
    pub weighted: bool,
}

impl TrainConfig {
    /// The standard five-rate sweep with a single pass, importance-weighted.
    pub fn new(tau: f64) -> Self {
        Self {
            learning_rates: vec![0.2, 0.1, 0.05, 0.02, 0.01],
            passes: 1,
            tau,
            seed: 0,
            weighted: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() {
            return Err(Error::Config("learning_rates must be nonempty".into()));
        }
        if self.learning_rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.passes == 0 {
            return Err(Error::Config("passes must be >= 1".into()));
        }
        if !self.tau.is_finite() || self.tau <= 0.0 || self.tau > 1.0 {
            return Err(Error::Config(format!("tau {} outside (0, 1]", self.tau)));
        }
        Ok(())
    }
}

// Crossed features and importance weight, computed once per event.
fn prepare<M: PropensityModel + ?Sized>(
    data: &Dataset,
    prop: &M,
    cfg: &TrainConfig,
) -> Result<Vec<(SparseVector, f64, f64)>> {
    let mut out = Vec::with_capacity(data.len());
    for event in data.iter() {
        let crossed = cross_features(&event.context_features, &event.action_features);
        let weight = if cfg.weighted {
            clipped_weight(prop.prob(&event.context_id, &event.action_id), cfg.tau)?
        } else {
            1.0
        };
        out.push((crossed, weight, event.reward));
    }
    Ok(out)
}

fn sgd(prepared: &[(SparseVector, f64, f64)], passes: usize, rate: f64) -> Result<LinearModel> {
    let mut model = LinearModel::zero();
    let diverged = || Error::Training {
        rate,
        msg: "weights became non-finite".into(),
    };
    for _ in 0..passes {
        for (crossed, weight, y) in prepared {
            let p = model.score(crossed);
            if !p.is_finite() {
                return Err(diverged());
            }
            let step = 2.0 * rate * weight * (y - p);
            if !step.is_finite() {
                return Err(diverged());
            }
            for &(id, value) in crossed.entries() {
                *model.weights.entry(id).or_insert(0.0) += step * value;
            }
        }
    }
    if !model.is_finite() {
        return Err(diverged());
    }
    Ok(model)
}

/// Train one regressor at a fixed learning rate.
pub fn train_regressor<M: PropensityModel + ?Sized>(
    data: &Dataset,
    prop: &M,
    cfg: &TrainConfig,
    learning_rate: f64,
) -> Result<LinearModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Estimation("cannot train on an empty dataset".into()));
    }
    if !learning_rate.is_finite() || learning_rate <= 0.0 {
        return Err(Error::Config(format!("learning rate {learning_rate} must be positive")));
    }
    sgd(&prepare(data, prop, cfg)?, cfg.passes, learning_rate)
}

/// Mean weighted squared error of a model over a dataset, using the same
/// weighting the trainer used.
pub fn training_error<M: PropensityModel + ?Sized>(
    model: &LinearModel,
    data: &Dataset,
    prop: &M,
    cfg: &TrainConfig,
) -> Result<f64> {
    let prepared = prepare(data, prop, cfg)?;
    let terms: Vec<f64> = prepared
        .iter()
        .map(|(crossed, weight, y)| {
            let r = y - model.score(crossed);
            weight * r * r
        })
        .collect();
    Ok(pairwise_sum(&terms) / data.len().max(1) as f64)
}

/// One sweep candidate: its rate and final training error, or `None` when
/// the run diverged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCandidate {
    pub learning_rate: f64,
    pub train_error: Option<f64>,
}

/// Outcome of the learning-rate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub model: LinearModel,
    pub learning_rate: f64,
    pub train_error: f64,
    pub candidates: Vec<RateCandidate>,
}

/// Train one model per configured learning rate and keep the one with the
/// smallest weighted training error; ties go to the smaller rate. Diverged
/// candidates are excluded; if every candidate diverges this is a training
/// error. `parallelism` caps how many candidates train concurrently
/// (1 = sequential); the selection is identical either way.
pub fn select_model<M: PropensityModel + Sync + ?Sized>(
    data: &Dataset,
    prop: &M,
    cfg: &TrainConfig,
    parallelism: usize,
) -> Result<SweepReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Estimation("cannot train on an empty dataset".into()));
    }
    let prepared = prepare(data, prop, cfg)?;
    let run = |rate: f64| -> Result<(LinearModel, f64)> {
        let model = sgd(&prepared, cfg.passes, rate)?;
        let terms: Vec<f64> = prepared
            .iter()
            .map(|(crossed, weight, y)| {
                let r = y - model.score(crossed);
                weight * r * r
            })
            .collect();
        Ok((model, pairwise_sum(&terms) / data.len() as f64))
    };

    let mut outcomes: Vec<Option<(LinearModel, f64)>> = Vec::new();
    if parallelism <= 1 || cfg.learning_rates.len() <= 1 {
        for &rate in &cfg.learning_rates {
            outcomes.push(settle(run(rate))?);
        }
    } else {
        let mut slots: Vec<Option<Result<(LinearModel, f64)>>> =
            (0..cfg.learning_rates.len()).map(|_| None).collect();
        for (chunk_idx, chunk) in cfg.learning_rates.chunks(parallelism).enumerate() {
            let results = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&rate| scope.spawn(move || run(rate)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("sweep worker panicked"))
                    .collect::<Vec<_>>()
            });
            for (i, result) in results.into_iter().enumerate() {
                slots[chunk_idx * parallelism + i] = Some(result);
            }
        }
        for slot in slots {
            outcomes.push(settle(slot.expect("every slot filled"))?);
        }
    }

    let candidates: Vec<RateCandidate> = cfg
        .learning_rates
        .iter()
        .zip(&outcomes)
        .map(|(&learning_rate, outcome)| RateCandidate {
            learning_rate,
            train_error: outcome.as_ref().map(|(_, e)| *e),
        })
        .collect();

    let mut best: Option<(f64, f64, &LinearModel)> = None;
    for (outcome, cand) in outcomes.iter().zip(&candidates) {
        let Some((model, error)) = outcome.as_ref() else {
            continue;
        };
        let better = match best {
            None => true,
            Some((best_error, best_rate, _)) => {
                *error < best_error || (*error == best_error && cand.learning_rate < best_rate)
            }
        };
        if better {
            best = Some((*error, cand.learning_rate, model));
        }
    }
    let (train_error, learning_rate, model) = best.ok_or(Error::Training {
        rate: f64::NAN,
        msg: "every learning-rate candidate diverged".into(),
    })?;
    Ok(SweepReport {
        model: model.clone(),
        learning_rate,
        train_error,
        candidates,
    })
}

// Divergence (or a non-finite error value) excludes the candidate; any other
// failure propagates.
fn settle(result: Result<(LinearModel, f64)>) -> Result<Option<(LinearModel, f64)>> {
    match result {
        Ok((model, error)) if error.is_finite() => Ok(Some((model, error))),
        Ok(_) => Ok(None),
        Err(Error::Training { .. }) => Ok(None),
        Err(other) => Err(other),
    }
}

/// Deterministic argmax policy backed by a linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgmaxPolicy {
    pub model: LinearModel,
    /// When true, the argmax only ranges over the feasible set of the
    /// context; when false (the naive baseline) it ranges over the whole
    /// catalog.
    pub restrict_to_feasible: bool,
}

impl ArgmaxPolicy {
    pub fn feasible(model: LinearModel) -> Self {
        Self {
            model,
            restrict_to_feasible: true,
        }
    }

    pub fn naive(model: LinearModel) -> Self {
        Self {
            model,
            restrict_to_feasible: false,
        }
    }

    /// Pick the highest-scoring candidate; exact score ties break to the
    /// lexicographically smallest action id.
    pub fn act<'a>(
        &self,
        context: &SparseVector,
        candidates: impl IntoIterator<Item = (&'a str, &'a SparseVector)>,
    ) -> Result<String> {
        let mut best: Option<(f64, &str)> = None;
        for (action_id, features) in candidates {
            let score = self.model.predict(context, features);
            let wins = match best {
                None => true,
                Some((best_score, best_id)) => {
                    score > best_score || (score == best_score && action_id < best_id)
                }
            };
            if wins {
                best = Some((score, action_id));
            }
        }
        best.map(|(_, id)| id.to_string())
            .ok_or_else(|| Error::Policy("empty candidate set".into()))
    }
}

/// Train the naive supervised baseline: unweighted squared loss and an
/// argmax over the whole catalog. `cfg.weighted` is ignored (forced false);
/// this policy exists as the negative control.
pub fn train_naive(
    data: &Dataset,
    cfg: &TrainConfig,
    parallelism: usize,
) -> Result<(ArgmaxPolicy, SweepReport)> {
    let mut cfg = cfg.clone();
    cfg.weighted = false;
    let report = select_model(data, &crate::propensity::UnitPropensity, &cfg, parallelism)?;
    Ok((ArgmaxPolicy::naive(report.model.clone()), report))
}

/// Bridges an [`ArgmaxPolicy`] to the estimator's [`Policy`] view: candidate
/// actions come from the catalog, restricted to the feasible set when the
/// policy asks for it. Feasible actions missing from the catalog are
/// skipped.
pub struct CatalogPolicy<'a> {
    pub policy: &'a ArgmaxPolicy,
    pub catalog: &'a ActionCatalog,
    pub table: &'a PropensityTable,
}

impl Policy for CatalogPolicy<'_> {
    fn decide(&self, context_id: &str, context_features: &SparseVector) -> Option<String> {
        if self.policy.restrict_to_feasible {
            let candidates = self
                .table
                .feasible_set(context_id)
                .into_iter()
                .filter_map(|a| self.catalog.get(a).map(|f| (a, f)));
            self.policy.act(context_features, candidates).ok()
        } else {
            self.policy.act(context_features, self.catalog.iter()).ok()
        }
    }
}
