//! Domain types for games, datasets, features and the rating parameterization.
//!
//! A rating for model `m` in game `g` is the linear form
//!
//! ```text
//! R_m(g) = base[m] + sum_j alpha[j] * f_j(g, side) + sum_j beta[m][j] * f'_j(g, side)
//! ```
//!
//! where `alpha` weights are shared across models (judge biases) and `beta`
//! weights are model-specific (task modifiers and similar).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{RatingError, Result};

/// Opaque model identifier. Non-empty, unique within a dataset registry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelId(pub String);

impl ModelId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(RatingError::InvalidData("empty model id".into()));
        }
        Ok(ModelId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Which side of a game a model played.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::First => Side::Second,
            Side::Second => Side::First,
        }
    }
}

/// Game outcome as the score credited to the first model.
///
/// 1 = first model wins, 0 = second wins, 0.5 = draw. Other values in [0, 1]
/// encode fractional win rates (e.g. rescaled benchmark win rates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Outcome {
    pub weight_for_first: f64,
}

impl Outcome {
    pub fn new(weight_for_first: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight_for_first) {
            return Err(RatingError::InvalidData(format!(
                "outcome weight {weight_for_first} outside [0, 1]"
            )));
        }
        Ok(Outcome { weight_for_first })
    }

    pub fn win() -> Self {
        Outcome { weight_for_first: 1.0 }
    }

    pub fn loss() -> Self {
        Outcome { weight_for_first: 0.0 }
    }

    pub fn draw() -> Self {
        Outcome { weight_for_first: 0.5 }
    }
}

/// One pairwise comparison between two models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Game {
    pub model_a: ModelId,
    pub model_b: ModelId,
    pub outcome: Outcome,
    /// Task identifiers this game belongs to.
    #[serde(default)]
    pub tags: BTreeSet<String>,
    /// Feature name -> (value for model_a, value for model_b).
    #[serde(default)]
    pub features: BTreeMap<String, (f64, f64)>,
    /// Aggregated count; three weighted games can store win/draw/loss tallies.
    #[serde(default = "default_multiplicity")]
    pub multiplicity: u64,
}

fn default_multiplicity() -> u64 {
    1
}

impl Game {
    pub fn new(model_a: ModelId, model_b: ModelId, outcome: Outcome) -> Result<Self> {
        if model_a == model_b {
            return Err(RatingError::InvalidData(format!(
                "game between a model and itself: {model_a}"
            )));
        }
        Ok(Game {
            model_a,
            model_b,
            outcome,
            tags: BTreeSet::new(),
            features: BTreeMap::new(),
            multiplicity: 1,
        })
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tags.insert(tag.into());
        self
    }

    pub fn with_feature(mut self, name: impl Into<String>, a: f64, b: f64) -> Self {
        self.features.insert(name.into(), (a, b));
        self
    }

    pub fn with_multiplicity(mut self, multiplicity: u64) -> Self {
        self.multiplicity = multiplicity;
        self
    }

    pub fn model(&self, side: Side) -> &ModelId {
        match side {
            Side::First => &self.model_a,
            Side::Second => &self.model_b,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.model_a == self.model_b {
            return Err(RatingError::InvalidData(format!(
                "game between a model and itself: {}",
                self.model_a
            )));
        }
        if self.multiplicity == 0 {
            return Err(RatingError::InvalidData("game multiplicity must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.outcome.weight_for_first) {
            return Err(RatingError::InvalidData("outcome weight outside [0, 1]".into()));
        }
        for (name, (a, b)) in &self.features {
            if !a.is_finite() || !b.is_finite() {
                return Err(RatingError::NonFinite(format!("feature '{name}'")));
            }
        }
        Ok(())
    }
}

/// An ordered collection of games plus registries of everything they mention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub games: Vec<Game>,
    pub model_registry: Vec<ModelId>,
    pub task_registry: Vec<String>,
    pub feature_registry: Vec<String>,
}

impl Dataset {
    /// Build a dataset, deriving registries in first-appearance order.
    pub fn new(games: Vec<Game>) -> Result<Self> {
        let mut models = Vec::new();
        let mut tasks = Vec::new();
        let mut features = Vec::new();
        for game in &games {
            game.validate()?;
            for m in [&game.model_a, &game.model_b] {
                if m.0.is_empty() {
                    return Err(RatingError::InvalidData("empty model id".into()));
                }
                if !models.contains(m) {
                    models.push(m.clone());
                }
            }
            for tag in &game.tags {
                if !tasks.contains(tag) {
                    tasks.push(tag.clone());
                }
            }
            for name in game.features.keys() {
                if !features.contains(name) {
                    features.push(name.clone());
                }
            }
        }
        Ok(Dataset {
            games,
            model_registry: models,
            task_registry: tasks,
            feature_registry: features,
        })
    }

    /// Build from explicit registries, checking that they cover every game.
    pub fn from_parts(
        games: Vec<Game>,
        model_registry: Vec<ModelId>,
        task_registry: Vec<String>,
        feature_registry: Vec<String>,
    ) -> Result<Self> {
        check_unique(&model_registry, "model registry")?;
        check_unique(&task_registry, "task registry")?;
        check_unique(&feature_registry, "feature registry")?;
        for game in &games {
            game.validate()?;
            for m in [&game.model_a, &game.model_b] {
                if !model_registry.contains(m) {
                    return Err(RatingError::UnknownModel(m.0.clone()));
                }
            }
            for tag in &game.tags {
                if !task_registry.contains(tag) {
                    return Err(RatingError::UnknownTask(tag.clone()));
                }
            }
            for name in game.features.keys() {
                if !feature_registry.contains(name) {
                    return Err(RatingError::InvalidData(format!(
                        "feature '{name}' not in registry"
                    )));
                }
            }
        }
        Ok(Dataset {
            games,
            model_registry,
            task_registry,
            feature_registry,
        })
    }

    pub fn model_index(&self, model: &ModelId) -> Result<usize> {
        self.model_registry
            .iter()
            .position(|m| m == model)
            .ok_or_else(|| RatingError::UnknownModel(model.0.clone()))
    }

    /// Total number of comparisons counting multiplicity.
    pub fn total_games(&self) -> u64 {
        self.games.iter().map(|g| g.multiplicity).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }
}

fn check_unique<T: PartialEq + std::fmt::Debug>(items: &[T], what: &str) -> Result<()> {
    for (i, item) in items.iter().enumerate() {
        if items[..i].contains(item) {
            return Err(RatingError::InvalidData(format!(
                "duplicate entry {item:?} in {what}"
            )));
        }
    }
    Ok(())
}

/// Whether a feature's weight is shared across models or model-specific.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Contributes to the shared weight vector alpha.
    Shared,
    /// Contributes to the model-specific weight matrix beta.
    ModelSpecific,
}

/// Where a feature's per-game value comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// A numeric column stored on each game (precomputed or materialized by a
    /// built-in extractor at ingestion time).
    Column(String),
    /// Evaluates to 1 iff the game carries the tag.
    TaskIndicator(String),
    /// Evaluates to 1 for the second side, 0 for the first.
    Position,
}

/// Policy for feature columns missing on a game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Missing value is the neutral point 0.
    #[default]
    Lenient,
    /// Missing value is an error.
    Strict,
}

/// Declares one feature of the linear rating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub source: FeatureSource,
}

impl FeatureSpec {
    pub fn shared_column(name: impl Into<String>) -> Self {
        let name = name.into();
        FeatureSpec {
            source: FeatureSource::Column(name.clone()),
            name,
            kind: FeatureKind::Shared,
        }
    }

    pub fn shared_position() -> Self {
        FeatureSpec {
            name: "position".into(),
            kind: FeatureKind::Shared,
            source: FeatureSource::Position,
        }
    }

    pub fn task_modifier(tag: impl Into<String>) -> Self {
        let tag = tag.into();
        FeatureSpec {
            name: tag.clone(),
            kind: FeatureKind::ModelSpecific,
            source: FeatureSource::TaskIndicator(tag),
        }
    }

    /// Evaluate this feature for one side of a game.
    pub fn value(&self, game: &Game, side: Side, policy: MissingPolicy) -> Result<f64> {
        match &self.source {
            FeatureSource::Position => Ok(if side == Side::Second { 1.0 } else { 0.0 }),
            FeatureSource::TaskIndicator(tag) => {
                Ok(if game.tags.contains(tag) { 1.0 } else { 0.0 })
            }
            FeatureSource::Column(column) => match game.features.get(column) {
                Some(&(a, b)) => Ok(if side == Side::First { a } else { b }),
                None => match policy {
                    MissingPolicy::Lenient => Ok(0.0),
                    MissingPolicy::Strict => Err(RatingError::MissingFeature(column.clone())),
                },
            },
        }
    }
}

/// Fitted (or candidate) parameters of the rating model.
///
/// Carries its own model list and feature specs so that ratings can be
/// evaluated for arbitrary games without re-supplying the fit context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingParameters {
    pub models: Vec<ModelId>,
    pub shared_specs: Vec<FeatureSpec>,
    pub specific_specs: Vec<FeatureSpec>,
    /// Base rating per model, rating points.
    pub base: Vec<f64>,
    /// Shared weight per shared feature, rating points per feature unit.
    pub alpha: Vec<f64>,
    /// Model-specific weights, indexed `[model][specific feature]`.
    pub beta: Vec<Vec<f64>>,
}

impl RatingParameters {
    pub fn zeros(
        models: Vec<ModelId>,
        shared_specs: Vec<FeatureSpec>,
        specific_specs: Vec<FeatureSpec>,
        base_value: f64,
    ) -> Self {
        let n = models.len();
        let d = shared_specs.len();
        let dp = specific_specs.len();
        RatingParameters {
            models,
            shared_specs,
            specific_specs,
            base: vec![base_value; n],
            alpha: vec![0.0; d],
            beta: vec![vec![0.0; dp]; n],
        }
    }

    pub fn model_index(&self, model: &ModelId) -> Result<usize> {
        self.models
            .iter()
            .position(|m| m == model)
            .ok_or_else(|| RatingError::UnknownModel(model.0.clone()))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.models.len();
        if self.base.len() != n || self.beta.len() != n {
            return Err(RatingError::InvalidData("parameter dimensions mismatch".into()));
        }
        if self.alpha.len() != self.shared_specs.len() {
            return Err(RatingError::InvalidData("alpha dimension mismatch".into()));
        }
        for row in &self.beta {
            if row.len() != self.specific_specs.len() {
                return Err(RatingError::InvalidData("beta dimension mismatch".into()));
            }
        }
        let finite = self.base.iter().chain(self.alpha.iter()).all(|v| v.is_finite())
            && self.beta.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(RatingError::NonFinite("rating parameters".into()));
        }
        Ok(())
    }

    /// Flatten into (base..., alpha..., beta rows...) for norm computations.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.base.clone();
        out.extend_from_slice(&self.alpha);
        for row in &self.beta {
            out.extend_from_slice(row);
        }
        out
    }
}

/// Gaussian prior scales for the MAP objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// One sigma per shared feature.
    pub sigma_shared: Vec<f64>,
    /// One sigma per model-specific feature (shared across models).
    pub sigma_specific: Vec<f64>,
    /// Prior scale on base ratings; `None` means flat (requires anchoring).
    pub sigma_base: Option<f64>,
    /// Post-fit mean of base ratings under a flat base prior.
    pub anchor_value: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            sigma_shared: Vec::new(),
            sigma_specific: Vec::new(),
            sigma_base: None,
            anchor_value: 1000.0,
        }
    }
}

impl PriorSpec {
    pub fn flat(anchor_value: f64) -> Self {
        PriorSpec {
            anchor_value,
            ..Default::default()
        }
    }

    /// Same sigma for every shared and every model-specific feature.
    pub fn uniform(
        n_shared: usize,
        sigma_shared: f64,
        n_specific: usize,
        sigma_specific: f64,
    ) -> Self {
        PriorSpec {
            sigma_shared: vec![sigma_shared; n_shared],
            sigma_specific: vec![sigma_specific; n_specific],
            sigma_base: None,
            anchor_value: 1000.0,
        }
    }

    pub fn with_sigma_base(mut self, sigma: f64) -> Self {
        self.sigma_base = Some(sigma);
        self
    }

    pub fn with_anchor(mut self, anchor_value: f64) -> Self {
        self.anchor_value = anchor_value;
        self
    }

    pub fn validate(&self, n_shared: usize, n_specific: usize) -> Result<()> {
        if self.sigma_shared.len() != n_shared {
            return Err(RatingError::InvalidConfig(format!(
                "expected {n_shared} shared prior scales, got {}",
                self.sigma_shared.len()
            )));
        }
        if self.sigma_specific.len() != n_specific {
            return Err(RatingError::InvalidConfig(format!(
                "expected {n_specific} model-specific prior scales, got {}",
                self.sigma_specific.len()
            )));
        }
        for s in self.sigma_shared.iter().chain(self.sigma_specific.iter()) {
            if !(*s > 0.0) {
                return Err(RatingError::InvalidConfig("prior sigma must be > 0".into()));
            }
        }
        if let Some(s) = self.sigma_base {
            if !(s > 0.0) {
                return Err(RatingError::InvalidConfig("sigma_base must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Rating of one side of a game under the linear model.
///
/// Missing feature columns contribute 0.
pub fn game_rating(params: &RatingParameters, game: &Game, side: Side) -> Result<f64> {
    let m = params.model_index(game.model(side))?;
    let mut rating = params.base[m];
    for (j, spec) in params.shared_specs.iter().enumerate() {
        rating += params.alpha[j] * spec.value(game, side, MissingPolicy::Lenient)?;
    }
    for (j, spec) in params.specific_specs.iter().enumerate() {
        rating += params.beta[m][j] * spec.value(game, side, MissingPolicy::Lenient)?;
    }
    Ok(rating)
}

/// Task-specific rating: base plus the model's task modifier.
pub fn task_rating(params: &RatingParameters, model: &ModelId, task: &str) -> Result<f64> {
    let m = params.model_index(model)?;
    let j = params
        .specific_specs
        .iter()
        .position(|s| matches!(&s.source, FeatureSource::TaskIndicator(tag) if tag == task))
        .ok_or_else(|| RatingError::UnknownTask(task.to_string()))?;
    Ok(params.base[m] + params.beta[m][j])
}

/// Shift all base ratings so their mean equals `anchor_value`.
///
/// Under a flat base prior the loss is invariant to this shift; it fixes the
/// gauge freedom of the rating scale. Alpha and beta are untouched.
pub fn anchor(params: &RatingParameters, anchor_value: f64) -> RatingParameters {
    let mut out = params.clone();
    if out.base.is_empty() {
        return out;
    }
    let mean = out.base.iter().sum::<f64>() / out.base.len() as f64;
    let shift = anchor_value - mean;
    for b in &mut out.base {
        *b += shift;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_model_params() -> RatingParameters {
        RatingParameters::zeros(
            vec![ModelId("m1".into()), ModelId("m2".into())],
            vec![],
            vec![],
            1000.0,
        )
    }

    #[test]
    fn game_rating_zero_weights_is_base() {
        let params = two_model_params();
        let game = Game::new(
            ModelId("m1".into()),
            ModelId("m2".into()),
            Outcome::draw(),
        )
        .unwrap();
        assert_relative_eq!(game_rating(&params, &game, Side::First).unwrap(), 1000.0);
    }

    #[test]
    fn game_rating_task_indicator_adds_beta() {
        let mut params = RatingParameters::zeros(
            vec![ModelId("m1".into()), ModelId("m2".into())],
            vec![],
            vec![FeatureSpec::task_modifier("code")],
            1000.0,
        );
        params.beta[0][0] = 25.0;
        let game = Game::new(ModelId("m1".into()), ModelId("m2".into()), Outcome::win())
            .unwrap()
            .with_tag("code");
        assert_relative_eq!(game_rating(&params, &game, Side::First).unwrap(), 1025.0);
        // untagged game: indicator is 0
        let untagged =
            Game::new(ModelId("m1".into()), ModelId("m2".into()), Outcome::win()).unwrap();
        assert_relative_eq!(game_rating(&params, &untagged, Side::First).unwrap(), 1000.0);
    }

    #[test]
    fn game_rating_shared_length_feature() {
        let mut params = RatingParameters::zeros(
            vec![ModelId("m1".into()), ModelId("m2".into())],
            vec![FeatureSpec::shared_column("length")],
            vec![],
            1000.0,
        );
        params.alpha[0] = 130.74;
        let game = Game::new(ModelId("m1".into()), ModelId("m2".into()), Outcome::win())
            .unwrap()
            .with_feature("length", 3.0, 0.0);
        assert_relative_eq!(
            game_rating(&params, &game, Side::First).unwrap(),
            1392.22,
            epsilon = 1e-9
        );
    }

    #[test]
    fn game_rating_unknown_model_errors() {
        let params = two_model_params();
        let game =
            Game::new(ModelId("m1".into()), ModelId("other".into()), Outcome::win()).unwrap();
        assert!(game_rating(&params, &game, Side::Second).is_err());
    }

    #[test]
    fn task_rating_examples() {
        let mut params = RatingParameters::zeros(
            vec![ModelId("m1".into()), ModelId("m2".into())],
            vec![],
            vec![FeatureSpec::task_modifier("code")],
            1000.0,
        );
        assert_relative_eq!(
            task_rating(&params, &ModelId("m1".into()), "code").unwrap(),
            1000.0
        );
        params.beta[0][0] = -40.0;
        assert_relative_eq!(
            task_rating(&params, &ModelId("m1".into()), "code").unwrap(),
            960.0
        );
        assert!(task_rating(&params, &ModelId("m1".into()), "math").is_err());
    }

    #[test]
    fn anchor_mean_shift() {
        let mut params = two_model_params();
        params.base = vec![0.0, 100.0];
        let anchored = anchor(&params, 1000.0);
        assert_eq!(anchored.base, vec![950.0, 1050.0]);
        // already at mean 1000: identity
        let again = anchor(&anchored, 1000.0);
        assert_eq!(again.base, anchored.base);
    }

    #[test]
    fn game_rating_is_linear_in_parameters() {
        let mk = |b0: f64, b1: f64, a: f64, t: f64| {
            let mut p = RatingParameters::zeros(
                vec![ModelId("m1".into()), ModelId("m2".into())],
                vec![FeatureSpec::shared_column("len")],
                vec![FeatureSpec::task_modifier("t")],
                0.0,
            );
            p.base = vec![b0, b1];
            p.alpha = vec![a];
            p.beta[0][0] = t;
            p
        };
        let p1 = mk(10.0, -3.0, 2.0, 7.0);
        let p2 = mk(-1.0, 5.0, 0.5, -2.0);
        let (ca, cb) = (0.3, 1.7);
        let combo = mk(
            ca * 10.0 - cb * 1.0,
            ca * -3.0 + cb * 5.0,
            ca * 2.0 + cb * 0.5,
            ca * 7.0 + cb * -2.0,
        );
        let game = Game::new(ModelId("m1".into()), ModelId("m2".into()), Outcome::win())
            .unwrap()
            .with_tag("t")
            .with_feature("len", 2.5, 1.5);
        for side in [Side::First, Side::Second] {
            let r1 = game_rating(&p1, &game, side).unwrap();
            let r2 = game_rating(&p2, &game, side).unwrap();
            let rc = game_rating(&combo, &game, side).unwrap();
            assert_relative_eq!(rc, ca * r1 + cb * r2, epsilon = 1e-9);
        }
    }

    #[test]
    fn task_rating_matches_game_rating_on_pure_task_game() {
        let mut params = RatingParameters::zeros(
            vec![ModelId("m1".into()), ModelId("m2".into())],
            vec![],
            vec![FeatureSpec::task_modifier("t")],
            1000.0,
        );
        params.beta[0][0] = 33.0;
        let game = Game::new(ModelId("m1".into()), ModelId("m2".into()), Outcome::win())
            .unwrap()
            .with_tag("t");
        let via_game = game_rating(&params, &game, Side::First).unwrap();
        let via_task = task_rating(&params, &ModelId("m1".into()), "t").unwrap();
        assert_relative_eq!(via_game, via_task);
    }

    #[test]
    fn dataset_registries_and_invariants() {
        let games = vec![
            Game::new(ModelId("a".into()), ModelId("b".into()), Outcome::win())
                .unwrap()
                .with_tag("code")
                .with_feature("length", 1.0, 2.0),
            Game::new(ModelId("b".into()), ModelId("c".into()), Outcome::draw()).unwrap(),
        ];
        let ds = Dataset::new(games).unwrap();
        assert_eq!(ds.model_registry.len(), 3);
        assert_eq!(ds.task_registry, vec!["code".to_string()]);
        assert_eq!(ds.feature_registry, vec!["length".to_string()]);
        assert_eq!(ds.total_games(), 2);
    }

    #[test]
    fn self_play_rejected() {
        assert!(Game::new(ModelId("a".into()), ModelId("a".into()), Outcome::win()).is_err());
    }
}
