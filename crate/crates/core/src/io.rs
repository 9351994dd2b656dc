//! Game ingestion and serialization, benchmark CSV parsing, run
//! configuration, and leaderboard rendering.
//!
//! Games travel as JSONL: one object per line with `model_a`, `model_b`,
//! exactly one of `winner` / `weight_a`, and optional `tags`, `features`,
//! `answer_a`/`answer_b` (which trigger the built-in text extractors), and
//! `count`. Unknown keys are ignored with a warning; a malformed line rejects
//! the whole file with its line number.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridge::BenchmarkResults;
use crate::error::{RatingError, Result};
use crate::features::{
    length_feature, readability_feature, repetitiveness_feature, influence,
};
use crate::likelihood::{LikelihoodKind, LikelihoodModel};
use crate::model::{
    Dataset, FeatureSource, FeatureSpec, Game, ModelId, Outcome, PriorSpec,
};
use crate::optimizer::{FitConfig, FitResult};
use crate::uncertainty::BootstrapSamples;

// ---------------------------------------------------------------------------
// Game JSONL
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct RawGame {
    model_a: String,
    model_b: String,
    winner: Option<String>,
    weight_a: Option<f64>,
    #[serde(default)]
    tags: Vec<String>,
    answer_a: Option<String>,
    answer_b: Option<String>,
    #[serde(default)]
    features: BTreeMap<String, [f64; 2]>,
    count: Option<u64>,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

fn parse_line(line_no: usize, line: &str, warnings: &mut Vec<String>) -> Result<Game> {
    let err = |message: String| RatingError::Parse {
        line: line_no,
        message,
    };
    let raw: RawGame =
        serde_json::from_str(line).map_err(|e| err(format!("invalid record: {e}")))?;
    for key in raw.extra.keys() {
        warnings.push(format!("line {line_no}: ignoring unknown key '{key}'"));
    }
    let weight = match (&raw.winner, raw.weight_a) {
        (Some(_), Some(_)) => {
            return Err(err("both 'winner' and 'weight_a' present".into()));
        }
        (None, None) => {
            return Err(err("one of 'winner' or 'weight_a' is required".into()));
        }
        (Some(winner), None) => match winner.as_str() {
            "model_a" => 1.0,
            "model_b" => 0.0,
            "tie" => 0.5,
            other => return Err(err(format!("unknown winner '{other}'"))),
        },
        (None, Some(w)) => w,
    };
    let outcome = Outcome::new(weight).map_err(|e| err(e.to_string()))?;
    let mut game = Game::new(
        ModelId::new(raw.model_a).map_err(|e| err(e.to_string()))?,
        ModelId::new(raw.model_b).map_err(|e| err(e.to_string()))?,
        outcome,
    )
    .map_err(|e| err(e.to_string()))?;
    for tag in raw.tags {
        game = game.with_tag(tag);
    }
    for (name, [a, b]) in raw.features {
        game = game.with_feature(name, a, b);
    }
    match (&raw.answer_a, &raw.answer_b) {
        (Some(a), Some(b)) => {
            for (name, f) in [
                ("length", length_feature as fn(&str) -> f64),
                ("repetitiveness", repetitiveness_feature),
                ("readability", readability_feature),
            ] {
                if game.features.contains_key(name) {
                    return Err(err(format!(
                        "feature '{name}' conflicts with the answer-derived value"
                    )));
                }
                game = game.with_feature(name, f(a), f(b));
            }
        }
        (None, None) => {}
        _ => return Err(err("answer_a and answer_b must appear together".into())),
    }
    if let Some(count) = raw.count {
        if count == 0 {
            return Err(err("count must be >= 1".into()));
        }
        game = game.with_multiplicity(count);
    }
    Ok(game)
}

/// Parse a JSONL reader into a dataset plus unknown-key warnings. Blank
/// lines are skipped; any malformed line rejects the input.
pub fn parse_games_reader<R: Read>(reader: R) -> Result<(Dataset, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut games = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        games.push(parse_line(idx + 1, &line, &mut warnings)?);
    }
    Ok((Dataset::new(games)?, warnings))
}

pub fn parse_games(path: impl AsRef<Path>) -> Result<(Dataset, Vec<String>)> {
    parse_games_reader(std::fs::File::open(path)?)
}

fn game_to_json(game: &Game) -> serde_json::Value {
    let mut obj = serde_json::Map::new();
    obj.insert("model_a".into(), game.model_a.0.clone().into());
    obj.insert("model_b".into(), game.model_b.0.clone().into());
    let w = game.outcome.weight_for_first;
    if w == 1.0 {
        obj.insert("winner".into(), "model_a".into());
    } else if w == 0.0 {
        obj.insert("winner".into(), "model_b".into());
    } else if w == 0.5 {
        obj.insert("winner".into(), "tie".into());
    } else {
        obj.insert("weight_a".into(), w.into());
    }
    if !game.tags.is_empty() {
        obj.insert(
            "tags".into(),
            game.tags.iter().cloned().collect::<Vec<String>>().into(),
        );
    }
    if !game.features.is_empty() {
        let feats: serde_json::Map<String, serde_json::Value> = game
            .features
            .iter()
            .map(|(k, &(a, b))| (k.clone(), serde_json::json!([a, b])))
            .collect();
        obj.insert("features".into(), feats.into());
    }
    if game.multiplicity != 1 {
        obj.insert("count".into(), game.multiplicity.into());
    }
    serde_json::Value::Object(obj)
}

/// Serialize games as JSONL; `parse_games` on the output reconstructs the
/// same registries, outcomes, and features.
pub fn write_games<W: Write>(dataset: &Dataset, writer: &mut W) -> Result<()> {
    for game in &dataset.games {
        writeln!(writer, "{}", game_to_json(game))?;
    }
    Ok(())
}

pub fn games_to_string(dataset: &Dataset) -> String {
    let mut out = Vec::new();
    write_games(dataset, &mut out).expect("writing to a vec cannot fail");
    String::from_utf8(out).expect("serialized games are UTF-8")
}

// ---------------------------------------------------------------------------
// Benchmark CSV
// ---------------------------------------------------------------------------

/// Parse a benchmark CSV in either schema:
/// `model,question_id,correct` (per-question matrix) or
/// `model,accuracy,n_questions` (aggregate).
pub fn parse_benchmark_reader<R: Read>(reader: R) -> Result<BenchmarkResults> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| RatingError::Parse {
            line: 1,
            message: "empty benchmark file".into(),
        })??;
    let fields: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let rows: Vec<(usize, String)> = lines
        .enumerate()
        .map(|(i, l)| Ok((i + 2, l?)))
        .collect::<Result<Vec<_>>>()?;
    let parse_err = |line: usize, message: String| RatingError::Parse { line, message };

    match fields.as_slice() {
        ["model", "question_id", "correct"] => {
            let mut models: Vec<ModelId> = Vec::new();
            let mut questions: Vec<String> = Vec::new();
            let mut cells: BTreeMap<(usize, usize), bool> = BTreeMap::new();
            for (line_no, line) in &rows {
                if line.trim().is_empty() {
                    continue;
                }
                let cols: Vec<&str> = line.trim().split(',').map(str::trim).collect();
                let [model, qid, correct] = cols.as_slice() else {
                    return Err(parse_err(*line_no, "expected 3 columns".into()));
                };
                let correct = match correct.to_ascii_lowercase().as_str() {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    other => {
                        return Err(parse_err(*line_no, format!("bad correct value '{other}'")))
                    }
                };
                let m = match models.iter().position(|id| id.as_str() == *model) {
                    Some(m) => m,
                    None => {
                        models.push(ModelId::new(*model).map_err(|e| {
                            parse_err(*line_no, e.to_string())
                        })?);
                        models.len() - 1
                    }
                };
                let q = match questions.iter().position(|x| x == qid) {
                    Some(q) => q,
                    None => {
                        questions.push(qid.to_string());
                        questions.len() - 1
                    }
                };
                if cells.insert((q, m), correct).is_some() {
                    return Err(parse_err(
                        *line_no,
                        format!("duplicate cell for model '{model}' question '{qid}'"),
                    ));
                }
            }
            let correct = (0..questions.len())
                .map(|q| {
                    (0..models.len())
                        .map(|m| {
                            cells.get(&(q, m)).copied().ok_or_else(|| {
                                RatingError::InvalidData(format!(
                                    "missing cell: model '{}' question '{}'",
                                    models[m], questions[q]
                                ))
                            })
                        })
                        .collect::<Result<Vec<bool>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let result = BenchmarkResults::Matrix { models, correct };
            result.validate()?;
            Ok(result)
        }
        ["model", "accuracy", "n_questions"] => {
            let mut models = Vec::new();
            let mut accuracy = Vec::new();
            let mut question_count: Option<u64> = None;
            for (line_no, line) in &rows {
                if line.trim().is_empty() {
                    continue;
                }
                let cols: Vec<&str> = line.trim().split(',').map(str::trim).collect();
                let [model, acc, n] = cols.as_slice() else {
                    return Err(parse_err(*line_no, "expected 3 columns".into()));
                };
                models.push(ModelId::new(*model).map_err(|e| parse_err(*line_no, e.to_string()))?);
                accuracy.push(
                    acc.parse::<f64>()
                        .map_err(|e| parse_err(*line_no, format!("bad accuracy: {e}")))?,
                );
                let n = n
                    .parse::<u64>()
                    .map_err(|e| parse_err(*line_no, format!("bad n_questions: {e}")))?;
                match question_count {
                    None => question_count = Some(n),
                    Some(prev) if prev != n => {
                        return Err(parse_err(*line_no, "inconsistent n_questions".into()))
                    }
                    Some(_) => {}
                }
            }
            let result = BenchmarkResults::Accuracies {
                models,
                accuracy,
                question_count: question_count.unwrap_or(0),
            };
            result.validate()?;
            Ok(result)
        }
        _ => Err(parse_err(1, format!("unrecognized header '{header}'"))),
    }
}

pub fn parse_benchmark(path: impl AsRef<Path>) -> Result<BenchmarkResults> {
    parse_benchmark_reader(std::fs::File::open(path)?)
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// TOML run configuration. Every section is optional; CLI flags override
/// config values, which override the built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub fit: FitSection,
    pub likelihood: LikelihoodSection,
    pub priors: PriorSection,
    pub features: Vec<FeatureSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub max_outer_iterations: Option<usize>,
    pub param_tolerance: Option<f64>,
    pub loss_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LikelihoodSection {
    /// `bradley_terry`, `rao_kupper`, `davidson`, or `accuracy_based`.
    pub kind: Option<String>,
    pub theta: Option<f64>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    /// One prior scale applied to every shared feature.
    pub sigma_shared: Option<f64>,
    /// One prior scale applied to every model-specific feature.
    pub sigma_specific: Option<f64>,
    /// Prior scale on base ratings; omitted means flat plus anchoring.
    pub sigma_base: Option<f64>,
    pub anchor: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    /// `column`, `position`, or `task`.
    pub kind: String,
    pub name: Option<String>,
    pub tag: Option<String>,
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<AppConfig> {
        toml::from_str(text).map_err(|e| RatingError::Parse {
            line: 0,
            message: format!("config: {e}"),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<AppConfig> {
        AppConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        let mut config = FitConfig::default();
        if let Some(v) = self.fit.max_outer_iterations {
            config.max_outer_iterations = v;
        }
        if let Some(v) = self.fit.param_tolerance {
            config.param_tolerance = v;
        }
        if let Some(v) = self.fit.loss_tolerance {
            config.loss_tolerance = v;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn likelihood(&self) -> Result<LikelihoodModel> {
        let scale = self.likelihood.scale.unwrap_or(400.0);
        let kind = match self.likelihood.kind.as_deref() {
            None | Some("bradley_terry") => LikelihoodKind::BradleyTerry,
            Some("rao_kupper") => LikelihoodKind::RaoKupper {
                theta: self.likelihood.theta.unwrap_or(1.0),
            },
            Some("davidson") => LikelihoodKind::Davidson {
                theta: self.likelihood.theta.unwrap_or(0.0),
            },
            Some("accuracy_based") => LikelihoodKind::AccuracyBased,
            Some(other) => {
                return Err(RatingError::InvalidConfig(format!(
                    "unknown likelihood '{other}'"
                )))
            }
        };
        LikelihoodModel::new(kind, scale)
    }

    pub fn feature_specs(&self) -> Result<Vec<FeatureSpec>> {
        self.features
            .iter()
            .map(|f| match f.kind.as_str() {
                "column" => {
                    let name = f.name.as_ref().ok_or_else(|| {
                        RatingError::InvalidConfig("column feature needs a name".into())
                    })?;
                    Ok(FeatureSpec::shared_column(name.clone()))
                }
                "position" => Ok(FeatureSpec::shared_position()),
                "task" => {
                    let tag = f.tag.as_ref().ok_or_else(|| {
                        RatingError::InvalidConfig("task feature needs a tag".into())
                    })?;
                    Ok(FeatureSpec::task_modifier(tag.clone()))
                }
                other => Err(RatingError::InvalidConfig(format!(
                    "unknown feature kind '{other}'"
                ))),
            })
            .collect()
    }

    pub fn priors(&self, specs: &[FeatureSpec]) -> Result<PriorSpec> {
        let n_shared = specs
            .iter()
            .filter(|s| s.kind == crate::model::FeatureKind::Shared)
            .count();
        let n_specific = specs.len() - n_shared;
        let priors = PriorSpec {
            sigma_shared: vec![self.priors.sigma_shared.unwrap_or(400.0); n_shared],
            sigma_specific: vec![self.priors.sigma_specific.unwrap_or(400.0); n_specific],
            sigma_base: self.priors.sigma_base,
            anchor_value: self.priors.anchor.unwrap_or(1000.0),
        };
        priors.validate(n_shared, n_specific)?;
        Ok(priors)
    }
}

// ---------------------------------------------------------------------------
// Leaderboard
// ---------------------------------------------------------------------------

/// A reported number with its interval; without bootstrap samples the
/// interval degenerates to the point value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedValue {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl RatedValue {
    fn point(value: f64) -> RatedValue {
        RatedValue {
            value,
            lower: value,
            upper: value,
        }
    }

    fn from_samples(value: f64, samples: &[f64], confidence: f64) -> RatedValue {
        if samples.is_empty() {
            return RatedValue::point(value);
        }
        let (lower, upper) = crate::uncertainty::pivotal_interval(value, samples, confidence);
        RatedValue {
            value,
            lower,
            upper,
        }
    }

    /// `1050.0 +7.9/-7.3` offset notation.
    fn render(&self) -> String {
        format!(
            "{:.1} +{:.1}/-{:.1}",
            self.value,
            self.upper - self.value,
            self.value - self.lower
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub base: RatedValue,
    /// Task rating per task tag; always exactly base + the task modifier.
    pub tasks: BTreeMap<String, RatedValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub name: String,
    pub coefficient: RatedValue,
    pub influence: RatedValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardDoc {
    /// Sorted by base rating, descending.
    pub models: Vec<ModelRow>,
    pub biases: Vec<BiasRow>,
    pub confidence: f64,
    pub converged: bool,
    pub config_digest: String,
    pub dataset_digest: String,
    pub seed: u64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Digest of the run configuration (likelihood, priors, fit settings).
pub fn config_digest(
    likelihood: &LikelihoodModel,
    priors: &PriorSpec,
    config: &FitConfig,
) -> String {
    let doc = serde_json::json!({
        "likelihood": likelihood,
        "priors": priors,
        "fit": config,
    });
    sha256_hex(doc.to_string().as_bytes())
}

/// Digest of the dataset's canonical JSONL serialization.
pub fn dataset_digest(dataset: &Dataset) -> String {
    sha256_hex(games_to_string(dataset).as_bytes())
}

#[allow(clippy::too_many_arguments)]
pub fn build_leaderboard(
    fit: &FitResult,
    dataset: &Dataset,
    bootstrap: Option<&BootstrapSamples>,
    confidence: f64,
    seed: u64,
    likelihood: &LikelihoodModel,
    priors: &PriorSpec,
    config: &FitConfig,
) -> Result<LeaderboardDoc> {
    let params = &fit.params;
    let tasks: Vec<(usize, String)> = params
        .specific_specs
        .iter()
        .enumerate()
        .filter_map(|(j, s)| match &s.source {
            FeatureSource::TaskIndicator(tag) => Some((j, tag.clone())),
            _ => None,
        })
        .collect();

    let mut models = Vec::new();
    for (m, model) in params.models.iter().enumerate() {
        let base_samples = bootstrap.map(|b| b.base_samples(m)).unwrap_or_default();
        let base = RatedValue::from_samples(params.base[m], &base_samples, confidence);
        let mut task_values = BTreeMap::new();
        for (j, tag) in &tasks {
            let value = params.base[m] + params.beta[m][*j];
            let samples = bootstrap
                .map(|b| b.task_rating_samples(m, *j))
                .unwrap_or_default();
            task_values.insert(tag.clone(), RatedValue::from_samples(value, &samples, confidence));
        }
        models.push(ModelRow {
            model: model.0.clone(),
            base,
            tasks: task_values,
        });
    }
    models.sort_by(|a, b| {
        b.base
            .value
            .partial_cmp(&a.base.value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.model.cmp(&b.model))
    });

    let mut biases = Vec::new();
    for (j, spec) in params.shared_specs.iter().enumerate() {
        let mean_abs_diff = influence(dataset, spec, 1.0)?;
        let alpha_samples = bootstrap.map(|b| b.alpha_samples(j)).unwrap_or_default();
        let influence_samples: Vec<f64> =
            alpha_samples.iter().map(|a| a * mean_abs_diff).collect();
        biases.push(BiasRow {
            name: spec.name.clone(),
            coefficient: RatedValue::from_samples(params.alpha[j], &alpha_samples, confidence),
            influence: RatedValue::from_samples(
                params.alpha[j] * mean_abs_diff,
                &influence_samples,
                confidence,
            ),
        });
    }

    Ok(LeaderboardDoc {
        models,
        biases,
        confidence,
        converged: fit.converged,
        config_digest: config_digest(likelihood, priors, config),
        dataset_digest: dataset_digest(dataset),
        seed,
    })
}

impl LeaderboardDoc {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("leaderboard serializes")
    }

    pub fn from_json(text: &str) -> Result<LeaderboardDoc> {
        serde_json::from_str(text).map_err(|e| RatingError::Parse {
            line: 0,
            message: format!("leaderboard: {e}"),
        })
    }

    pub fn to_markdown(&self) -> String {
        let mut tasks: Vec<&String> = self
            .models
            .first()
            .map(|m| m.tasks.keys().collect())
            .unwrap_or_default();
        tasks.sort();
        let mut out = String::from("| Model | Rating |");
        for task in &tasks {
            out.push_str(&format!(" {task} |"));
        }
        out.push('\n');
        out.push_str("|---|---|");
        out.push_str(&"---|".repeat(tasks.len()));
        out.push('\n');
        for row in &self.models {
            out.push_str(&format!("| {} | {} |", row.model, row.base.render()));
            for task in &tasks {
                out.push_str(&format!(" {} |", row.tasks[*task].render()));
            }
            out.push('\n');
        }
        if !self.biases.is_empty() {
            out.push_str("\n| Bias | Coefficient | Influence |\n|---|---|---|\n");
            for bias in &self.biases {
                out.push_str(&format!(
                    "| {} | {} | {} |\n",
                    bias.name,
                    bias.coefficient.render(),
                    bias.influence.render()
                ));
            }
        }
        out.push_str(&format!(
            "\nconfidence: {} | converged: {} | seed: {}\nconfig: {}\ndataset: {}\n",
            self.confidence, self.converged, self.seed, self.config_digest, self.dataset_digest
        ));
        out
    }
}
