//! Preference-rating engine for pairwise model comparisons.
//!
//! Fits multivariate ratings (base strength, shared judge-bias weights, and
//! per-model task modifiers) to win/loss/draw records by MAP estimation, with
//! bootstrap uncertainty, benchmark-to-preference bridging, and a synthetic
//! experiment harness. See the README for the data model and CLI.

// validation uses `!(x > 0.0)` instead of `x <= 0.0` so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod error;
pub mod features;
pub mod io;
mod lbfgs;
pub mod likelihood;
pub mod model;
pub mod optimizer;
pub mod sim;
pub mod uncertainty;

pub use error::{RatingError, Result};
pub use likelihood::{LikelihoodKind, LikelihoodModel};
pub use model::{
    anchor, game_rating, task_rating, Dataset, FeatureSpec, Game, ModelId, Outcome, PriorSpec,
    RatingParameters, Side,
};
pub use optimizer::{fit, fit_univariate, FitConfig, FitResult};
pub use uncertainty::{bootstrap_fit, pivotal_interval, sigma_interval, BootstrapSamples};
