//! Synthetic-arena generation and experiment drivers.
//!
//! A [`GroundTruth`] holds the generating rating parameters; [`generate`]
//! draws seeded game streams from it. On top of that sit three experiment
//! drivers: sample-efficiency curves for warm-start strategies, the
//! joint-versus-separate convergence study, and the likelihood-model
//! comparison. All outputs are deterministic per seed.

use std::collections::BTreeMap;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{accuracies_to_games, default_grid, tune_w, BenchmarkResults};
use crate::error::{RatingError, Result};
use crate::likelihood::{game_loss, LikelihoodKind, LikelihoodModel};
use crate::model::{
    anchor, game_rating, Dataset, FeatureSource, FeatureSpec, Game, ModelId, Outcome, PriorSpec,
    RatingParameters, Side,
};
use crate::optimizer::{fit, fit_univariate, FitConfig};

// ---------------------------------------------------------------------------
// Ground truth and game generation
// ---------------------------------------------------------------------------

/// Generating process for a synthetic arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// True rating parameters, including any shared or task-modifier specs.
    pub params: RatingParameters,
    /// Win probabilities for the sampled outcomes.
    pub likelihood: LikelihoodModel,
    /// Uniform sampling range per precomputed feature column.
    pub feature_ranges: BTreeMap<String, (f64, f64)>,
    /// Task tags and their mix probabilities; empty means untagged games.
    pub task_mix: Vec<(String, f64)>,
    /// Probability that a game is a draw, independent of the ratings.
    pub draw_rate: f64,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.params.models.len() < 2 {
            return Err(RatingError::InvalidConfig("ground truth needs >= 2 models".into()));
        }
        if !(0.0..1.0).contains(&self.draw_rate) {
            return Err(RatingError::InvalidConfig("draw_rate must be in [0, 1)".into()));
        }
        if !self.task_mix.is_empty() {
            let sum: f64 = self.task_mix.iter().map(|(_, p)| p).sum();
            if self.task_mix.iter().any(|(_, p)| *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(RatingError::InvalidConfig(
                    "task mix probabilities must be non-negative and sum to 1".into(),
                ));
            }
        }
        for (name, &(lo, hi)) in &self.feature_ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(RatingError::InvalidConfig(format!(
                    "invalid range for feature '{name}'"
                )));
            }
        }
        for spec in &self.params.shared_specs {
            if let FeatureSource::Column(name) = &spec.source {
                if !self.feature_ranges.contains_key(name) {
                    return Err(RatingError::InvalidConfig(format!(
                        "no sampling range for feature column '{name}'"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Standard normal draw via Box-Muller.
pub(crate) fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let v: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Draw one game: uniform ordered model pair, task tag from the mix, feature
/// values from their ranges, outcome from the draw rate and the truth's win
/// probability.
pub fn sample_game<R: Rng>(truth: &GroundTruth, rng: &mut R) -> Result<Game> {
    let n = truth.params.models.len();
    let i = rng.gen_range(0..n);
    let j = loop {
        let j = rng.gen_range(0..n);
        if j != i {
            break j;
        }
    };
    let mut game = Game::new(
        truth.params.models[i].clone(),
        truth.params.models[j].clone(),
        Outcome::draw(),
    )?;
    if !truth.task_mix.is_empty() {
        let weights = WeightedIndex::new(truth.task_mix.iter().map(|(_, p)| *p))
            .map_err(|e| RatingError::InvalidConfig(format!("task mix: {e}")))?;
        game = game.with_tag(truth.task_mix[weights.sample(rng)].0.clone());
    }
    for (name, &(lo, hi)) in &truth.feature_ranges {
        let (a, b) = if lo == hi {
            (lo, lo)
        } else {
            (rng.gen_range(lo..hi), rng.gen_range(lo..hi))
        };
        game = game.with_feature(name.clone(), a, b);
    }
    let r_a = game_rating(&truth.params, &game, Side::First)?;
    let r_b = game_rating(&truth.params, &game, Side::Second)?;
    let p = truth.likelihood.win_probability(r_a, r_b)?;
    let outcome = if rng.gen::<f64>() < truth.draw_rate {
        Outcome::draw()
    } else if rng.gen::<f64>() < p {
        Outcome::win()
    } else {
        Outcome::loss()
    };
    game.outcome = outcome;
    Ok(game)
}

/// `n` i.i.d. games from the truth; the registries cover every model, task
/// tag, and feature column of the generator even if unsampled.
pub fn generate(truth: &GroundTruth, n: u64, seed: u64) -> Result<Dataset> {
    truth.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let games = (0..n)
        .map(|_| sample_game(truth, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_parts(
        games,
        truth.params.models.clone(),
        truth.task_mix.iter().map(|(t, _)| t.clone()).collect(),
        truth.feature_ranges.keys().cloned().collect(),
    )
}

/// Merge games that agree on models, outcome, tags, and features into one
/// record with summed multiplicity. Order of first appearance is kept, so the
/// result is deterministic; fits on the merged dataset are equivalent.
pub fn aggregate(dataset: &Dataset) -> Dataset {
    type Key = (String, String, u64, Vec<String>, Vec<(String, u64, u64)>);
    let mut index: BTreeMap<Key, usize> = BTreeMap::new();
    let mut games: Vec<Game> = Vec::new();
    for game in &dataset.games {
        let key: Key = (
            game.model_a.0.clone(),
            game.model_b.0.clone(),
            game.outcome.weight_for_first.to_bits(),
            game.tags.iter().cloned().collect(),
            game.features
                .iter()
                .map(|(k, &(a, b))| (k.clone(), a.to_bits(), b.to_bits()))
                .collect(),
        );
        match index.get(&key) {
            Some(&at) => games[at].multiplicity += game.multiplicity,
            None => {
                index.insert(key, games.len());
                games.push(game.clone());
            }
        }
    }
    Dataset {
        games,
        model_registry: dataset.model_registry.clone(),
        task_registry: dataset.task_registry.clone(),
        feature_registry: dataset.feature_registry.clone(),
    }
}

/// Multiplicity-weighted mean per-game loss of fixed ratings on a dataset.
pub fn heldout_loss(
    likelihood: &LikelihoodModel,
    params: &RatingParameters,
    dataset: &Dataset,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(RatingError::InvalidData("held-out set is empty".into()));
    }
    let mut total = 0.0;
    for game in &dataset.games {
        total += game_loss(likelihood, params, game)?;
    }
    Ok(total / dataset.total_games() as f64)
}

/// Root-mean-square error between two rating vectors after centering each at
/// mean zero, matched by position.
pub fn centered_rmse(fitted: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(fitted.len(), truth.len());
    let n = fitted.len() as f64;
    let mf = fitted.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let ss: f64 = fitted
        .iter()
        .zip(truth)
        .map(|(f, t)| ((f - mf) - (t - mt)).powi(2))
        .sum();
    (ss / n).sqrt()
}

// ---------------------------------------------------------------------------
// Sample-efficiency experiment
// ---------------------------------------------------------------------------

/// Strategies for rating models on a new task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficiencyVariant {
    /// Univariate fit on the new-task games alone.
    ColdStart,
    /// Joint fit on auxiliary-task plus new-task games, with a task modifier
    /// for the new task; the auxiliary data informs the base ratings that the
    /// modifier's prior pulls toward.
    PriorInformed,
    /// Like `PriorInformed`, but the auxiliary data is a converted benchmark
    /// with its win-rate rescaling tuned on the budgeted games.
    BenchmarkAugmented,
}

impl EfficiencyVariant {
    pub fn label(self) -> &'static str {
        match self {
            EfficiencyVariant::ColdStart => "cold_start",
            EfficiencyVariant::PriorInformed => "prior_informed",
            EfficiencyVariant::BenchmarkAugmented => "benchmark_augmented",
        }
    }
}

/// One budget level of an efficiency curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub games_used: u64,
    pub heldout_loss: f64,
    pub rmse: f64,
}

/// Held-out loss and rating error per budget, for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCurve {
    pub variant: EfficiencyVariant,
    pub points: Vec<EfficiencyPoint>,
    /// Smallest budget whose held-out loss reaches the target, if any.
    pub games_to_target: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub target_loss: f64,
    pub curves: Vec<EfficiencyCurve>,
}

impl EfficiencyReport {
    pub fn curve(&self, variant: EfficiencyVariant) -> Option<&EfficiencyCurve> {
        self.curves.iter().find(|c| c.variant == variant)
    }

    /// Fractional games-to-target reduction of `variant` versus cold start;
    /// `None` when either side never reaches the target.
    pub fn reduction_vs_cold_start(&self, variant: EfficiencyVariant) -> Option<f64> {
        let cold = self.curve(EfficiencyVariant::ColdStart)?.games_to_target?;
        let ours = self.curve(variant)?.games_to_target?;
        Some(1.0 - ours as f64 / cold as f64)
    }

    /// CSV with columns `variant,budget,heldout_loss,rmse,games_to_target`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,budget,heldout_loss,rmse,games_to_target\n");
        for curve in &self.curves {
            let target = curve
                .games_to_target
                .map(|g| g.to_string())
                .unwrap_or_default();
            for p in &curve.points {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    curve.variant.label(),
                    p.games_used,
                    p.heldout_loss,
                    p.rmse,
                    target
                ));
            }
        }
        out
    }
}

/// Configuration of the new-task efficiency study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyScenario {
    /// Truth whose `specific_specs` must include a modifier for `new_task`.
    /// Its `task_mix` is ignored; the experiment controls the task streams.
    pub truth: GroundTruth,
    pub new_task: String,
    pub auxiliary_task: String,
    pub auxiliary_games: u64,
    pub heldout_games: u64,
    /// Prior scale on the new-task modifier for the joint variants.
    pub sigma_task: f64,
    /// Question count of the synthetic benchmark for the augmented variant.
    pub benchmark_questions: u64,
    /// Held-out loss to reach; `None` uses the midpoint of cold start's
    /// first-budget and best achieved losses.
    pub target_loss: Option<f64>,
    pub fit_config: FitConfig,
}

impl EfficiencyScenario {
    /// 20 models with spread base ratings, new-task offsets drawn N(0, 50),
    /// 100k auxiliary games.
    pub fn default_synthetic(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<ModelId> = (0..20).map(|i| ModelId(format!("m{i:02}"))).collect();
        let mut params = RatingParameters::zeros(
            models,
            vec![],
            vec![FeatureSpec::task_modifier("new")],
            1000.0,
        );
        for b in &mut params.base {
            *b += 80.0 * gaussian(&mut rng);
        }
        for row in &mut params.beta {
            row[0] = 50.0 * gaussian(&mut rng);
        }
        let truth = GroundTruth {
            params,
            likelihood: LikelihoodModel::bradley_terry(),
            feature_ranges: BTreeMap::new(),
            task_mix: vec![("aux".into(), 1.0)],
            draw_rate: 0.1,
        };
        EfficiencyScenario {
            truth,
            new_task: "new".into(),
            auxiliary_task: "aux".into(),
            auxiliary_games: 100_000,
            heldout_games: 20_000,
            sigma_task: 50.0,
            benchmark_questions: 2_000,
            target_loss: None,
            fit_config: FitConfig::default(),
        }
    }

    fn stream(&self, task: &str) -> GroundTruth {
        let mut truth = self.truth.clone();
        truth.task_mix = vec![(task.to_string(), 1.0)];
        truth
    }

    fn true_task_ratings(&self) -> Vec<f64> {
        let idx = self
            .truth
            .params
            .specific_specs
            .iter()
            .position(|s| matches!(&s.source, FeatureSource::TaskIndicator(t) if *t == self.new_task));
        self.truth
            .params
            .base
            .iter()
            .enumerate()
            .map(|(m, &b)| b + idx.map_or(0.0, |j| self.truth.params.beta[m][j]))
            .collect()
    }
}

fn prefix_dataset(pool: &Dataset, n: usize) -> Dataset {
    Dataset {
        games: pool.games[..n].to_vec(),
        model_registry: pool.model_registry.clone(),
        task_registry: pool.task_registry.clone(),
        feature_registry: pool.feature_registry.clone(),
    }
}

fn merge_datasets(a: &Dataset, b: &Dataset, tasks: Vec<String>) -> Dataset {
    let mut games = a.games.clone();
    games.extend(b.games.iter().cloned());
    Dataset {
        games,
        model_registry: a.model_registry.clone(),
        task_registry: tasks,
        feature_registry: a.feature_registry.clone(),
    }
}

/// New-task ratings per model for one fitted variant: the base rating plus
/// the new-task modifier when the fit carried one.
fn variant_task_ratings(params: &RatingParameters, task: &str) -> Vec<f64> {
    let idx = params
        .specific_specs
        .iter()
        .position(|s| matches!(&s.source, FeatureSource::TaskIndicator(t) if t == task));
    params
        .base
        .iter()
        .enumerate()
        .map(|(m, &b)| b + idx.map_or(0.0, |j| params.beta[m][j]))
        .collect()
}

/// Run each variant at each budget of fresh new-task games and report
/// held-out loss, rating RMSE to truth, and games-to-target.
pub fn sample_efficiency_experiment(
    scenario: &EfficiencyScenario,
    budgets: &[u64],
    variants: &[EfficiencyVariant],
    seed: u64,
) -> Result<EfficiencyReport> {
    scenario.truth.validate()?;
    if budgets.is_empty() || !budgets.windows(2).all(|w| w[0] < w[1]) {
        return Err(RatingError::InvalidConfig(
            "budgets must be non-empty and strictly increasing".into(),
        ));
    }
    if variants.is_empty() {
        return Err(RatingError::InvalidConfig("no variants selected".into()));
    }
    if scenario.target_loss.is_none() && !variants.contains(&EfficiencyVariant::ColdStart) {
        return Err(RatingError::InvalidConfig(
            "an explicit target_loss is required without the cold-start variant".into(),
        ));
    }
    if !(scenario.sigma_task > 0.0) {
        return Err(RatingError::InvalidConfig("sigma_task must be > 0".into()));
    }

    let truth_aux = scenario.stream(&scenario.auxiliary_task);
    let truth_new = scenario.stream(&scenario.new_task);
    let aux = aggregate(&generate(&truth_aux, scenario.auxiliary_games, seed.wrapping_add(1))?);
    let heldout = generate(&truth_new, scenario.heldout_games, seed.wrapping_add(2))?;
    let pool = generate(&truth_new, *budgets.last().unwrap(), seed.wrapping_add(3))?;
    let likelihood = &scenario.truth.likelihood;
    let anchor_value = 1000.0;
    let flat = PriorSpec::flat(anchor_value);
    let joint_priors = PriorSpec {
        sigma_shared: vec![],
        sigma_specific: vec![scenario.sigma_task],
        sigma_base: None,
        anchor_value,
    };
    let modifier = FeatureSpec::task_modifier(scenario.new_task.clone());
    let truth_ratings = scenario.true_task_ratings();

    // synthetic benchmark: accuracies are a monotone map of the true
    // new-task ratings
    let spread = truth_ratings
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - truth_ratings.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let mean = truth_ratings.iter().sum::<f64>() / truth_ratings.len() as f64;
    let accuracies: Vec<f64> = truth_ratings
        .iter()
        .map(|&r| (0.5 + 0.45 * (r - mean) / (spread / 2.0).max(1.0)).clamp(0.02, 0.98))
        .collect();
    let benchmark = BenchmarkResults::Accuracies {
        models: scenario.truth.params.models.clone(),
        accuracy: accuracies.clone(),
        question_count: scenario.benchmark_questions,
    };

    let mut raw: Vec<(EfficiencyVariant, Vec<EfficiencyPoint>)> = Vec::new();
    for &variant in variants {
        let mut points = Vec::new();
        for &budget in budgets {
            let budget_ds = aggregate(&prefix_dataset(&pool, budget as usize));
            let fitted = match variant {
                EfficiencyVariant::ColdStart => {
                    if budget == 0 {
                        anchor(
                            &RatingParameters::zeros(
                                scenario.truth.params.models.clone(),
                                vec![],
                                vec![],
                                anchor_value,
                            ),
                            anchor_value,
                        )
                    } else {
                        fit_univariate(&budget_ds, likelihood, &flat, &scenario.fit_config)?.params
                    }
                }
                EfficiencyVariant::PriorInformed => {
                    let joint = merge_datasets(
                        &aux,
                        &budget_ds,
                        vec![scenario.auxiliary_task.clone(), scenario.new_task.clone()],
                    );
                    fit(
                        &joint,
                        std::slice::from_ref(&modifier),
                        likelihood,
                        &joint_priors,
                        &scenario.fit_config,
                        None,
                    )?
                    .params
                }
                EfficiencyVariant::BenchmarkAugmented => {
                    let w = if budget == 0 {
                        1.0
                    } else {
                        tune_w(
                            &benchmark,
                            &budget_ds,
                            likelihood,
                            &flat,
                            &scenario.fit_config,
                            &default_grid(),
                        )?
                    };
                    let bench_games = accuracies_to_games(
                        &scenario.truth.params.models,
                        &accuracies,
                        scenario.benchmark_questions,
                        w,
                    )?;
                    let joint = merge_datasets(
                        &bench_games,
                        &budget_ds,
                        vec![scenario.new_task.clone()],
                    );
                    fit(
                        &joint,
                        std::slice::from_ref(&modifier),
                        likelihood,
                        &joint_priors,
                        &scenario.fit_config,
                        None,
                    )?
                    .params
                }
            };
            let ratings = variant_task_ratings(&fitted, &scenario.new_task);
            let eval = RatingParameters {
                base: ratings.clone(),
                ..RatingParameters::zeros(scenario.truth.params.models.clone(), vec![], vec![], 0.0)
            };
            points.push(EfficiencyPoint {
                games_used: budget,
                heldout_loss: heldout_loss(likelihood, &eval, &heldout)?,
                rmse: centered_rmse(&ratings, &truth_ratings),
            });
        }
        raw.push((variant, points));
    }

    let target_loss = match scenario.target_loss {
        Some(t) => t,
        None => {
            // halfway between cold start's first-budget loss and its best:
            // a level every variant eventually reaches but at different cost
            let cold = &raw
                .iter()
                .find(|(v, _)| *v == EfficiencyVariant::ColdStart)
                .expect("cold start present")
                .1;
            let first = cold.first().expect("non-empty budgets").heldout_loss;
            let best = cold
                .iter()
                .map(|p| p.heldout_loss)
                .fold(f64::INFINITY, f64::min);
            0.5 * (first + best)
        }
    };
    let curves = raw
        .into_iter()
        .map(|(variant, points)| {
            let games_to_target = points
                .iter()
                .find(|p| p.heldout_loss <= target_loss)
                .map(|p| p.games_used);
            EfficiencyCurve {
                variant,
                points,
                games_to_target,
            }
        })
        .collect();
    Ok(EfficiencyReport {
        target_loss,
        curves,
    })
}

// ---------------------------------------------------------------------------
// Joint-versus-separate convergence experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalencePoint {
    pub size: u64,
    /// Max over models of the anchored task-rating gap between the joint fit
    /// with a task modifier and the univariate fit on the task games alone.
    pub max_discrepancy: f64,
}

/// CSV with columns `size,max_discrepancy`.
pub fn equivalence_csv(points: &[EquivalencePoint]) -> String {
    let mut out = String::from("size,max_discrepancy\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.size, p.max_discrepancy));
    }
    out
}

/// At each dataset size, compare the task ratings of a joint fit (all games,
/// task modifier with prior scale `sigma_task`) against a univariate fit on
/// the task's games alone, after aligning both to the first shared model.
pub fn equivalence_experiment(
    truth: &GroundTruth,
    task: &str,
    sizes: &[u64],
    sigma_task: f64,
    config: &FitConfig,
    seed: u64,
) -> Result<Vec<EquivalencePoint>> {
    truth.validate()?;
    if sizes.is_empty() || !sizes.windows(2).all(|w| w[0] < w[1]) {
        return Err(RatingError::InvalidConfig(
            "sizes must be non-empty and strictly increasing".into(),
        ));
    }
    if !truth.task_mix.iter().any(|(t, _)| t == task) {
        return Err(RatingError::InvalidConfig(format!(
            "task '{task}' is not in the generator's task mix"
        )));
    }
    let pool = generate(truth, *sizes.last().unwrap(), seed)?;
    let modifier = FeatureSpec::task_modifier(task.to_string());
    let joint_priors = PriorSpec {
        sigma_shared: vec![],
        sigma_specific: vec![sigma_task],
        sigma_base: None,
        anchor_value: 1000.0,
    };
    let flat = PriorSpec::flat(1000.0);

    let mut out = Vec::new();
    for &size in sizes {
        let ds = aggregate(&prefix_dataset(&pool, size as usize));
        let joint = fit(
            &ds,
            std::slice::from_ref(&modifier),
            &truth.likelihood,
            &joint_priors,
            config,
            None,
        )?;
        let task_games: Vec<Game> = ds
            .games
            .iter()
            .filter(|g| g.tags.contains(task))
            .cloned()
            .collect();
        let separate_ds = Dataset::new(task_games)?;
        if separate_ds.model_registry.len() < 2 {
            return Err(RatingError::InvalidData(format!(
                "fewer than 2 models have '{task}' games at size {size}"
            )));
        }
        let separate = fit_univariate(&separate_ds, &truth.likelihood, &flat, config)?;

        let pivot = &separate_ds.model_registry[0];
        let j_pivot = joint_task_rating(&joint.params, pivot, task)?;
        let s_pivot = separate.params.base[0];
        let mut max_disc = 0.0_f64;
        for (m, model) in separate_ds.model_registry.iter().enumerate() {
            let joint_r = joint_task_rating(&joint.params, model, task)? - j_pivot;
            let sep_r = separate.params.base[m] - s_pivot;
            max_disc = max_disc.max((joint_r - sep_r).abs());
        }
        out.push(EquivalencePoint {
            size,
            max_discrepancy: max_disc,
        });
    }
    Ok(out)
}

fn joint_task_rating(params: &RatingParameters, model: &ModelId, task: &str) -> Result<f64> {
    crate::model::task_rating(params, model, task)
}

// ---------------------------------------------------------------------------
// Likelihood-model comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPoint {
    pub train_size: u64,
    pub heldout_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCurve {
    pub likelihood: String,
    pub points: Vec<ComparisonPoint>,
}

pub fn likelihood_label(model: &LikelihoodModel) -> String {
    match model.kind {
        LikelihoodKind::BradleyTerry => "bradley_terry".into(),
        LikelihoodKind::RaoKupper { theta } => format!("rao_kupper(theta={theta})"),
        LikelihoodKind::Davidson { theta } => format!("davidson(theta={theta})"),
        LikelihoodKind::AccuracyBased => "accuracy_based".into(),
    }
}

/// CSV with columns `likelihood,train_size,heldout_loss`.
pub fn comparison_csv(curves: &[ComparisonCurve]) -> String {
    let mut out = String::from("likelihood,train_size,heldout_loss\n");
    for curve in curves {
        for p in &curve.points {
            out.push_str(&format!(
                "{},{},{}\n",
                curve.likelihood, p.train_size, p.heldout_loss
            ));
        }
    }
    out
}

/// Fit each likelihood at each train size on a shared shuffled split and
/// report its own collapsed logistic loss on the fixed held-out games.
pub fn model_comparison_experiment(
    dataset: &Dataset,
    likelihoods: &[LikelihoodModel],
    train_sizes: &[u64],
    heldout_fraction: f64,
    priors: &PriorSpec,
    config: &FitConfig,
    seed: u64,
) -> Result<Vec<ComparisonCurve>> {
    if likelihoods.is_empty() || train_sizes.is_empty() {
        return Err(RatingError::InvalidConfig(
            "need at least one likelihood and one train size".into(),
        ));
    }
    if !train_sizes.windows(2).all(|w| w[0] < w[1]) {
        return Err(RatingError::InvalidConfig("train sizes must be strictly increasing".into()));
    }
    if !(0.0 < heldout_fraction && heldout_fraction < 1.0) {
        return Err(RatingError::InvalidConfig("heldout_fraction must be in (0, 1)".into()));
    }
    let n = dataset.games.len();
    let n_held = ((n as f64 * heldout_fraction).ceil() as usize).max(1);
    let max_train = *train_sizes.last().unwrap() as usize;
    if max_train + n_held > n {
        return Err(RatingError::InvalidData(format!(
            "dataset has {n} games; needs {} train + {n_held} held-out",
            max_train
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| Dataset {
        games: idx.iter().map(|&i| dataset.games[i].clone()).collect(),
        model_registry: dataset.model_registry.clone(),
        task_registry: dataset.task_registry.clone(),
        feature_registry: dataset.feature_registry.clone(),
    };
    let heldout = pick(&order[n - n_held..]);

    let mut curves = Vec::new();
    for likelihood in likelihoods {
        let mut points = Vec::new();
        for &size in train_sizes {
            let train = aggregate(&pick(&order[..size as usize]));
            let fitted = fit_univariate(&train, likelihood, priors, config)?;
            points.push(ComparisonPoint {
                train_size: size,
                heldout_loss: heldout_loss(likelihood, &fitted.params, &heldout)?,
            });
        }
        curves.push(ComparisonCurve {
            likelihood: likelihood_label(likelihood),
            points,
        });
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn plain_truth(bases: &[f64], draw_rate: f64) -> GroundTruth {
        let models = (0..bases.len()).map(|i| ModelId(format!("m{i}"))).collect();
        let mut params = RatingParameters::zeros(models, vec![], vec![], 0.0);
        params.base = bases.to_vec();
        GroundTruth {
            params,
            likelihood: LikelihoodModel::bradley_terry(),
            feature_ranges: BTreeMap::new(),
            task_mix: vec![],
            draw_rate,
        }
    }

    #[test]
    fn equal_truth_win_rate_near_half() {
        let truth = plain_truth(&[1000.0, 1000.0], 0.0);
        let ds = generate(&truth, 10_000, 7).unwrap();
        let wins: f64 = ds.games.iter().map(|g| g.outcome.weight_for_first).sum();
        let rate = wins / 10_000.0;
        // 3 sigma of a Bernoulli(0.5) mean over 10k draws
        assert!((rate - 0.5).abs() < 3.0 * 0.005, "rate {rate}");
    }

    #[test]
    fn decade_gap_win_rate() {
        let truth = plain_truth(&[1400.0, 1000.0], 0.0);
        let ds = generate(&truth, 10_000, 11).unwrap();
        // the stronger model can appear on either side
        let wins: f64 = ds
            .games
            .iter()
            .map(|g| {
                if g.model_a.as_str() == "m0" {
                    g.outcome.weight_for_first
                } else {
                    1.0 - g.outcome.weight_for_first
                }
            })
            .sum();
        let p = 10.0 / 11.0;
        let sigma = (p * (1.0 - p) / 10_000.0_f64).sqrt();
        assert!((wins / 10_000.0 - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn generation_is_deterministic() {
        let truth = plain_truth(&[1100.0, 1000.0, 900.0], 0.2);
        let a = generate(&truth, 500, 42).unwrap();
        let b = generate(&truth, 500, 42).unwrap();
        assert_eq!(a.games, b.games);
        assert_ne!(a.games, generate(&truth, 500, 43).unwrap().games);
        assert_eq!(a.model_registry, truth.params.models);
    }

    #[test]
    fn pairing_is_uniform() {
        let truth = plain_truth(&[1000.0; 4], 0.0);
        let n = 12_000;
        let ds = generate(&truth, n, 3).unwrap();
        let mut counts = BTreeMap::new();
        for g in &ds.games {
            *counts.entry((g.model_a.0.clone(), g.model_b.0.clone())).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 12);
        let expect = n as f64 / 12.0;
        let sigma = (n as f64 * (1.0 / 12.0) * (11.0 / 12.0)).sqrt();
        for (pair, &c) in &counts {
            assert!(
                (c as f64 - expect).abs() < 3.0 * sigma,
                "pair {pair:?}: {c}"
            );
        }
    }

    #[test]
    fn draw_rate_respected() {
        let truth = plain_truth(&[1000.0, 1000.0], 0.3);
        let ds = generate(&truth, 10_000, 5).unwrap();
        let draws = ds
            .games
            .iter()
            .filter(|g| g.outcome.weight_for_first == 0.5)
            .count() as f64;
        let sigma = (10_000.0_f64 * 0.3 * 0.7).sqrt();
        assert!((draws - 3000.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn aggregate_preserves_totals_and_fits() {
        let truth = plain_truth(&[1100.0, 1000.0, 900.0], 0.1);
        let ds = generate(&truth, 3_000, 9).unwrap();
        let agg = aggregate(&ds);
        assert!(agg.games.len() <= 18); // 6 ordered pairs x 3 outcomes
        assert_eq!(agg.total_games(), ds.total_games());
        let cfg = FitConfig::default();
        let flat = PriorSpec::flat(1000.0);
        let lik = LikelihoodModel::bradley_terry();
        let a = fit_univariate(&ds, &lik, &flat, &cfg).unwrap();
        let b = fit_univariate(&agg, &lik, &flat, &cfg).unwrap();
        for (x, y) in a.params.base.iter().zip(&b.params.base) {
            assert_relative_eq!(x, y, epsilon = 1e-6);
        }
    }

    #[test]
    fn centered_rmse_ignores_shift() {
        assert_relative_eq!(
            centered_rmse(&[1010.0, 990.0], &[10.0, -10.0]),
            0.0,
            epsilon = 1e-9
        );
        assert_relative_eq!(centered_rmse(&[5.0, -5.0], &[0.0, 0.0]), 5.0);
    }

    #[test]
    fn efficiency_prior_informed_dominates_cold_start() {
        let mut scenario = EfficiencyScenario::default_synthetic(21);
        scenario.truth.params.models.truncate(6);
        scenario.truth.params.base.truncate(6);
        scenario.truth.params.beta.truncate(6);
        scenario.auxiliary_games = 8_000;
        scenario.heldout_games = 4_000;
        let report = sample_efficiency_experiment(
            &scenario,
            &[100, 400, 1600],
            &[EfficiencyVariant::ColdStart, EfficiencyVariant::PriorInformed],
            77,
        )
        .unwrap();
        let cold = report.curve(EfficiencyVariant::ColdStart).unwrap();
        let prior = report.curve(EfficiencyVariant::PriorInformed).unwrap();
        assert_eq!(cold.points.len(), 3);
        let cold_target = cold.games_to_target.expect("cold start reaches its own best");
        let prior_target = prior.games_to_target.expect("prior-informed reaches target");
        assert!(prior_target <= cold_target);
        let csv = report.to_csv();
        assert!(csv.starts_with("variant,budget,heldout_loss,rmse,games_to_target\n"));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn efficiency_budget_zero_is_prior_only() {
        let mut scenario = EfficiencyScenario::default_synthetic(4);
        scenario.truth.params.models.truncate(4);
        scenario.truth.params.base.truncate(4);
        scenario.truth.params.beta.truncate(4);
        scenario.auxiliary_games = 2_000;
        scenario.heldout_games = 1_000;
        let report = sample_efficiency_experiment(
            &scenario,
            &[0, 200],
            &[EfficiencyVariant::ColdStart],
            5,
        )
        .unwrap();
        let cold = report.curve(EfficiencyVariant::ColdStart).unwrap();
        // at budget 0 every model sits at the anchor, so the rating RMSE is
        // exactly the spread of the truth
        let truth_r = scenario.true_task_ratings();
        assert_relative_eq!(
            cold.points[0].rmse,
            centered_rmse(&[0.0; 4], &truth_r),
            epsilon = 1e-9
        );
        assert!(cold.points[1].rmse < cold.points[0].rmse);
    }

    #[test]
    fn equivalence_discrepancy_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let models: Vec<ModelId> = (0..5).map(|i| ModelId(format!("m{i}"))).collect();
        let mut params = RatingParameters::zeros(
            models,
            vec![],
            vec![FeatureSpec::task_modifier("t")],
            1000.0,
        );
        for b in &mut params.base {
            *b += 70.0 * gaussian(&mut rng);
        }
        for row in &mut params.beta {
            row[0] = 40.0 * gaussian(&mut rng);
        }
        let truth = GroundTruth {
            params,
            likelihood: LikelihoodModel::bradley_terry(),
            feature_ranges: BTreeMap::new(),
            task_mix: vec![("base".into(), 0.5), ("t".into(), 0.5)],
            draw_rate: 0.15,
        };
        let points = equivalence_experiment(
            &truth,
            "t",
            &[400, 20_000],
            400.0,
            &FitConfig::default(),
            13,
        )
        .unwrap();
        assert!(points[1].max_discrepancy < points[0].max_discrepancy);
        assert!(points[1].max_discrepancy < 20.0);
        let csv = equivalence_csv(&points);
        assert!(csv.starts_with("size,max_discrepancy\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn comparison_davidson_zero_matches_bradley_terry() {
        let truth = plain_truth(&[1080.0, 1000.0, 920.0], 0.2);
        let ds = generate(&truth, 4_000, 17).unwrap();
        let likelihoods = [
            LikelihoodModel::bradley_terry(),
            LikelihoodModel::new(LikelihoodKind::Davidson { theta: 0.0 }, 400.0).unwrap(),
            LikelihoodModel::new(LikelihoodKind::RaoKupper { theta: 1.5 }, 400.0).unwrap(),
        ];
        let curves = model_comparison_experiment(
            &ds,
            &likelihoods,
            &[200, 800, 3000],
            0.2,
            &PriorSpec::flat(1000.0),
            &FitConfig::default(),
            23,
        )
        .unwrap();
        assert_eq!(curves.len(), 3);
        for (a, b) in curves[0].points.iter().zip(&curves[1].points) {
            assert_eq!(a.heldout_loss.to_bits(), b.heldout_loss.to_bits());
        }
        for curve in &curves {
            assert!(curve.points.iter().all(|p| p.heldout_loss.is_finite()));
        }
        let csv = comparison_csv(&curves);
        assert!(csv.starts_with("likelihood,train_size,heldout_loss\n"));
        assert_eq!(csv.lines().count(), 10);
    }

    #[test]
    fn invalid_configs_rejected() {
        let truth = plain_truth(&[1000.0, 1000.0], 0.0);
        assert!(equivalence_experiment(
            &truth,
            "t",
            &[10, 5],
            400.0,
            &FitConfig::default(),
            0
        )
        .is_err());
        let mut bad = truth.clone();
        bad.draw_rate = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = truth.clone();
        bad.task_mix = vec![("a".into(), 0.7), ("b".into(), 0.7)];
        assert!(bad.validate().is_err());
    }
}
