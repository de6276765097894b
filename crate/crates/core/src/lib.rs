//! Offline contextual-bandit toolkit.
//!
//! Logged interaction data of the form `(context, action, reward)` carries
//! no reward information about the actions that were not displayed, and the
//! historical logging policy that chose the actions is usually unknown and
//! often deterministic. This crate provides the pieces needed to still
//! evaluate and train new policies from such logs:
//!
//! - [`propensity`]: estimate the logging policy by exact counting and
//!   expose the feasible action set per context.
//! - [`estimator`]: the clipped inverse-propensity value estimator with
//!   relative-entropy Chernoff confidence intervals.
//! - [`learner`]: importance-weighted squared-loss SGD over crossed sparse
//!   features, argmax policies, the learning-rate sweep, and the naive
//!   supervised baseline.
//! - [`simworld`]: finite synthetic worlds whose estimator means, policy
//!   values, and bias bounds are computable exactly, for verifying the
//!   estimator end to end against brute-force enumeration.
//!
//! All core types are immutable after construction and safe to share across
//! threads.

pub mod data;
pub mod error;
pub mod estimator;
pub mod learner;
pub mod propensity;
pub mod simworld;
pub mod sparse;

pub use data::{ActionCatalog, Dataset, EventsFile, LoggedEvent};
pub use error::{Error, Result};
pub use estimator::{EstimatorConfig, FixedPolicy, Policy, ValueEstimate};
pub use learner::{ArgmaxPolicy, LinearModel, TrainConfig};
pub use propensity::{FitScope, PropensityModel, PropensityTable};
pub use simworld::{PolicySequence, RewardKind, SyntheticWorld};
pub use sparse::SparseVector;
