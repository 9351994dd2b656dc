//! Built-in answer-text feature extractors, the bias-influence statistic and
//! the bias report.
//!
//! The extractors are scaled so their outputs stay within the same order of
//! magnitude: length <= ~5 for answers up to 100k characters, repetitiveness
//! in [0, 5], readability in [0, 1], position in {0, 1}.

use serde::{Deserialize, Serialize};

use crate::error::{RatingError, Result};
use crate::model::{Dataset, FeatureSpec, Game, MissingPolicy, Side};
use crate::optimizer::FitResult;
use crate::uncertainty::{pivotal_interval, sigma_interval, BootstrapSamples};

/// Names of the answer-derived extractors materialized at ingestion time.
pub const BUILTIN_ANSWER_FEATURES: [&str; 3] = ["length", "repetitiveness", "readability"];

/// log10 of the character count; empty text maps to 0.
pub fn length_feature(answer: &str) -> f64 {
    let n = answer.chars().count();
    if n == 0 {
        0.0
    } else {
        (n as f64).log10()
    }
}

/// 1 for the second side, 0 for the first.
pub fn position_feature(_game: &Game, side: Side) -> f64 {
    if side == Side::Second {
        1.0
    } else {
        0.0
    }
}

/// 5 times the fraction of non-unique words; empty text maps to 0.
pub fn repetitiveness_feature(answer: &str) -> f64 {
    let words = tokenize(answer);
    if words.is_empty() {
        return 0.0;
    }
    let total = words.len();
    let unique: std::collections::BTreeSet<&String> = words.iter().collect();
    5.0 * (total - unique.len()) as f64 / total as f64
}

/// Flesch Reading Ease, normalized by 100 and clamped to [0, 1].
pub fn readability_feature(answer: &str) -> f64 {
    let words = tokenize(answer);
    if words.is_empty() {
        return 0.0;
    }
    let sentences = sentence_count(answer).max(1) as f64;
    let syllables: usize = words.iter().map(|w| syllable_count(w)).sum();
    let n_words = words.len() as f64;
    let flesch = 206.835 - 1.015 * (n_words / sentences) - 84.6 * (syllables as f64 / n_words);
    (flesch / 100.0).clamp(0.0, 1.0)
}

/// Case-folded whitespace split with punctuation stripped at token edges.
fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|tok| {
            tok.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|tok| !tok.is_empty())
        .collect()
}

fn sentence_count(text: &str) -> usize {
    text.split(['.', '!', '?'])
        .filter(|segment| segment.chars().any(|c| c.is_alphanumeric()))
        .count()
}

/// Maximal vowel-group count with a silent-e adjustment, minimum 1.
fn syllable_count(word: &str) -> usize {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() {
        return 1;
    }
    let is_vowel = |c: char| "aeiouy".contains(c);
    let mut groups = 0;
    let mut in_group = false;
    for &c in &chars {
        if is_vowel(c) {
            if !in_group {
                groups += 1;
            }
            in_group = true;
        } else {
            in_group = false;
        }
    }
    if groups > 1 && chars.ends_with(&['e']) && !word.ends_with("le") {
        groups -= 1;
    }
    groups.max(1)
}

/// Look up a stored feature column value for one side of a game.
pub fn precomputed_feature(
    game: &Game,
    column_name: &str,
    side: Side,
    policy: MissingPolicy,
) -> Result<f64> {
    match game.features.get(column_name) {
        Some(&(a, b)) => Ok(if side == Side::First { a } else { b }),
        None => match policy {
            MissingPolicy::Lenient => Ok(0.0),
            MissingPolicy::Strict => Err(RatingError::MissingFeature(column_name.to_string())),
        },
    }
}

/// Average rating-point influence of a bias: the multiplicity-weighted mean
/// of `alpha * |f(g, first) - f(g, second)|` over the dataset.
pub fn influence(dataset: &Dataset, spec: &FeatureSpec, alpha: f64) -> Result<f64> {
    if dataset.is_empty() {
        return Err(RatingError::InvalidData("influence of an empty dataset".into()));
    }
    let mut weighted = 0.0;
    let mut total = 0.0;
    for game in &dataset.games {
        let fa = spec.value(game, Side::First, MissingPolicy::Lenient)?;
        let fb = spec.value(game, Side::Second, MissingPolicy::Lenient)?;
        let mult = game.multiplicity as f64;
        weighted += mult * (fa - fb).abs();
        total += mult;
    }
    Ok(alpha * weighted / total)
}

/// One row of the bias report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasEntry {
    pub name: String,
    pub coefficient: f64,
    pub influence: f64,
    /// Pivotal bootstrap interval for the coefficient.
    pub coefficient_pivotal: (f64, f64),
    /// 2-sigma bootstrap interval for the coefficient.
    pub coefficient_sigma: (f64, f64),
    pub influence_pivotal: (f64, f64),
    pub influence_sigma: (f64, f64),
}

/// Fitted coefficients and influences for every shared feature, in feature
/// registry order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub entries: Vec<BiasEntry>,
    pub confidence: f64,
}

pub fn bias_report(
    fit: &FitResult,
    dataset: &Dataset,
    bootstrap: &BootstrapSamples,
    confidence: f64,
) -> Result<BiasReport> {
    let mut entries = Vec::new();
    for (j, spec) in fit.params.shared_specs.iter().enumerate() {
        let coefficient = fit.params.alpha[j];
        let mean_abs_diff = influence(dataset, spec, 1.0)?;
        let alpha_samples: Vec<f64> =
            bootstrap.replicates.iter().map(|p| p.alpha[j]).collect();
        let influence_samples: Vec<f64> =
            alpha_samples.iter().map(|a| a * mean_abs_diff).collect();
        entries.push(BiasEntry {
            name: spec.name.clone(),
            coefficient,
            influence: coefficient * mean_abs_diff,
            coefficient_pivotal: pivotal_interval(coefficient, &alpha_samples, confidence),
            coefficient_sigma: sigma_interval(&alpha_samples, 2.0),
            influence_pivotal: pivotal_interval(
                coefficient * mean_abs_diff,
                &influence_samples,
                confidence,
            ),
            influence_sigma: sigma_interval(&influence_samples, 2.0),
        });
    }
    Ok(BiasReport {
        entries,
        confidence,
    })
}
