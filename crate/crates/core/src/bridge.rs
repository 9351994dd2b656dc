//! Reinterpret accuracy benchmarks as preference data.
//!
//! A benchmark question is a game: a model that answers correctly defeats one
//! that does not, and equal correctness is a draw. Aggregate accuracies can
//! also be turned into fractional-outcome games, with a rescaling parameter W
//! that widens or narrows the implied win rates so benchmark-derived ratings
//! align with a human-preference rating spread.

use serde::{Deserialize, Serialize};

use crate::error::{RatingError, Result};
use crate::likelihood::LikelihoodModel;
use crate::model::{Dataset, Game, ModelId, Outcome, PriorSpec};
use crate::optimizer::{fit_univariate, FitConfig};

/// Benchmark results: either per-question correctness or per-model accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkResults {
    /// `correct[question][model]`.
    Matrix {
        models: Vec<ModelId>,
        correct: Vec<Vec<bool>>,
    },
    Accuracies {
        models: Vec<ModelId>,
        accuracy: Vec<f64>,
        question_count: u64,
    },
}

impl BenchmarkResults {
    pub fn validate(&self) -> Result<()> {
        match self {
            BenchmarkResults::Matrix { models, correct } => {
                if models.len() < 2 {
                    return Err(RatingError::InvalidData("benchmark needs >= 2 models".into()));
                }
                for row in correct {
                    if row.len() != models.len() {
                        return Err(RatingError::InvalidData(
                            "correctness row width does not match model count".into(),
                        ));
                    }
                }
                Ok(())
            }
            BenchmarkResults::Accuracies {
                models,
                accuracy,
                question_count,
            } => {
                if models.len() < 2 {
                    return Err(RatingError::InvalidData("benchmark needs >= 2 models".into()));
                }
                if accuracy.len() != models.len() {
                    return Err(RatingError::InvalidData("accuracy count mismatch".into()));
                }
                if accuracy.iter().any(|a| !(0.0..=1.0).contains(a)) {
                    return Err(RatingError::InvalidData("accuracy outside [0, 1]".into()));
                }
                if *question_count == 0 {
                    return Err(RatingError::InvalidData("question count must be >= 1".into()));
                }
                Ok(())
            }
        }
    }

    /// Per-model accuracies and the question count, derived when needed.
    pub fn accuracies(&self) -> (Vec<ModelId>, Vec<f64>, u64) {
        match self {
            BenchmarkResults::Matrix { models, correct } => {
                let q = correct.len() as u64;
                let accs = (0..models.len())
                    .map(|m| {
                        correct.iter().filter(|row| row[m]).count() as f64 / q.max(1) as f64
                    })
                    .collect();
                (models.clone(), accs, q)
            }
            BenchmarkResults::Accuracies {
                models,
                accuracy,
                question_count,
            } => (models.clone(), accuracy.clone(), *question_count),
        }
    }
}

/// Candidate grid for the win-rate rescaling parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleConfig {
    pub w: f64,
    pub grid: Vec<f64>,
}

impl Default for RescaleConfig {
    fn default() -> Self {
        RescaleConfig {
            w: 1.0,
            grid: default_grid(),
        }
    }
}

/// 20 log-spaced candidates in [0.25, 16].
pub fn default_grid() -> Vec<f64> {
    let (lo, hi) = (0.25_f64.ln(), 16.0_f64.ln());
    (0..20)
        .map(|i| (lo + (hi - lo) * i as f64 / 19.0).exp())
        .collect()
}

/// Per-question conversion: exactly one correct answer is a win, equal
/// correctness is a draw. Games are aggregated per unordered model pair via
/// multiplicity.
pub fn matrix_to_games(benchmark: &BenchmarkResults) -> Result<Dataset> {
    benchmark.validate()?;
    let BenchmarkResults::Matrix { models, correct } = benchmark else {
        return Err(RatingError::InvalidData(
            "matrix_to_games requires per-question correctness".into(),
        ));
    };
    let mut games = Vec::new();
    for i in 0..models.len() {
        for j in (i + 1)..models.len() {
            let (mut wins_i, mut wins_j, mut draws) = (0u64, 0u64, 0u64);
            for row in correct {
                match (row[i], row[j]) {
                    (true, false) => wins_i += 1,
                    (false, true) => wins_j += 1,
                    _ => draws += 1,
                }
            }
            for (weight, count) in [(1.0, wins_i), (0.0, wins_j), (0.5, draws)] {
                if count > 0 {
                    games.push(
                        Game::new(models[i].clone(), models[j].clone(), Outcome::new(weight)?)?
                            .with_multiplicity(count),
                    );
                }
            }
        }
    }
    Dataset::from_parts(games, models.clone(), vec![], vec![])
}

/// `min(1, (W/2)(1 + acc_i - acc_j))`; the complementary side gets `1 - p`.
pub fn rescaled_win_rate(acc_i: f64, acc_j: f64, w: f64) -> f64 {
    (w / 2.0 * (1.0 + acc_i - acc_j)).min(1.0)
}

/// One fractional-outcome game per unordered model pair, with the rescaled
/// win rate as the weight and the question count as multiplicity.
pub fn accuracies_to_games(
    models: &[ModelId],
    accuracies: &[f64],
    question_count: u64,
    w: f64,
) -> Result<Dataset> {
    if models.len() != accuracies.len() {
        return Err(RatingError::InvalidData("accuracy count mismatch".into()));
    }
    if !(w > 0.0) {
        return Err(RatingError::InvalidConfig("W must be > 0".into()));
    }
    let mut games = Vec::new();
    for i in 0..models.len() {
        for j in (i + 1)..models.len() {
            // the second side's probability is defined as 1 - p, so the
            // single fractional weight captures the full pair
            let weight = rescaled_win_rate(accuracies[i], accuracies[j], w);
            games.push(
                Game::new(models[i].clone(), models[j].clone(), Outcome::new(weight)?)?
                    .with_multiplicity(question_count),
            );
        }
    }
    Dataset::from_parts(games, models.to_vec(), vec![], vec![])
}

/// Convert a benchmark to games at the given W.
pub fn benchmark_to_games(benchmark: &BenchmarkResults, w: f64) -> Result<Dataset> {
    benchmark.validate()?;
    let (models, accs, q) = benchmark.accuracies();
    accuracies_to_games(&models, &accs, q, w)
}

/// Pick the W whose benchmark-fitted univariate ratings give the lowest
/// logistic loss on the human training data. Ties break toward smaller W.
/// Only training data enters the objective.
pub fn tune_w(
    benchmark: &BenchmarkResults,
    human_train: &Dataset,
    likelihood: &LikelihoodModel,
    priors: &PriorSpec,
    config: &FitConfig,
    grid: &[f64],
) -> Result<f64> {
    benchmark.validate()?;
    if grid.is_empty() {
        return Err(RatingError::InvalidConfig("empty W grid".into()));
    }
    let (bench_models, accs, q) = benchmark.accuracies();
    let shared: Vec<&ModelId> = human_train
        .model_registry
        .iter()
        .filter(|m| bench_models.contains(m))
        .collect();
    if shared.len() < 2 {
        return Err(RatingError::InvalidData(
            "benchmark and human data share fewer than 2 models".into(),
        ));
    }

    let mut best: Option<(f64, f64)> = None;
    for &w in grid {
        let games = accuracies_to_games(&bench_models, &accs, q, w)?;
        let fitted = fit_univariate(&games, likelihood, priors, config)?;
        // evaluate the data-term loss of the benchmark ratings on the human
        // games whose models the benchmark covers
        let mut loss = 0.0;
        for game in &human_train.games {
            let (Ok(i), Ok(j)) = (
                fitted.params.model_index(&game.model_a),
                fitted.params.model_index(&game.model_b),
            ) else {
                continue;
            };
            let p = likelihood
                .win_probability(fitted.params.base[i], fitted.params.base[j])?
                .clamp(crate::likelihood::PROB_EPS, 1.0 - crate::likelihood::PROB_EPS);
            let w_g = game.outcome.weight_for_first;
            loss -= (w_g * p.ln() + (1.0 - w_g) * (1.0 - p).ln()) * game.multiplicity as f64;
        }
        match best {
            Some((best_loss, _)) if loss >= best_loss => {}
            _ => best = Some((loss, w)),
        }
    }
    Ok(best.expect("non-empty grid").1)
}
