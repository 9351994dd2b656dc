//! Bootstrap resampling over games and interval construction.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RatingError, Result};
use crate::likelihood::LikelihoodModel;
use crate::model::{Dataset, FeatureSpec, PriorSpec, RatingParameters};
use crate::optimizer::{fit, FitConfig};

/// Refitted parameters over resampled datasets.
///
/// Replicate i is generated from an RNG seeded with `seed + i`, so a fixed
/// seed reproduces the whole set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSamples {
    /// Requested replicate count.
    pub n: usize,
    pub seed: u64,
    /// Anchored parameters of each converged replicate, in replicate order.
    pub replicates: Vec<RatingParameters>,
    /// Replicates dropped because their fit did not converge.
    pub failed: usize,
}

impl BootstrapSamples {
    pub fn base_samples(&self, model_index: usize) -> Vec<f64> {
        self.replicates.iter().map(|p| p.base[model_index]).collect()
    }

    pub fn alpha_samples(&self, j: usize) -> Vec<f64> {
        self.replicates.iter().map(|p| p.alpha[j]).collect()
    }

    pub fn task_rating_samples(&self, model_index: usize, spec_index: usize) -> Vec<f64> {
        self.replicates
            .iter()
            .map(|p| p.base[model_index] + p.beta[model_index][spec_index])
            .collect()
    }
}

/// Nonparametric resample: draw the same number of comparisons (counting
/// multiplicity) i.i.d. with replacement, weighted by multiplicity.
/// Registries are preserved; drawn counts become the new multiplicities.
pub fn resample<R: Rng>(dataset: &Dataset, rng: &mut R) -> Dataset {
    let total = dataset.total_games();
    let mut counts = vec![0u64; dataset.games.len()];
    if dataset.games.len() == 1 {
        counts[0] = total;
    } else if !dataset.games.is_empty() {
        let weights: Vec<u64> = dataset.games.iter().map(|g| g.multiplicity).collect();
        let index = WeightedIndex::new(&weights).expect("positive multiplicities");
        for _ in 0..total {
            counts[index.sample(rng)] += 1;
        }
    }
    let games = dataset
        .games
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(g, &c)| {
            let mut g = g.clone();
            g.multiplicity = c;
            g
        })
        .collect();
    Dataset::from_parts(
        games,
        dataset.model_registry.clone(),
        dataset.task_registry.clone(),
        dataset.feature_registry.clone(),
    )
    .expect("resample preserves registries")
}

/// Fit `n` bootstrap replicates, warm-starting each from the full-data
/// optimum (the objective is convex, so this only changes speed).
pub fn bootstrap_fit(
    dataset: &Dataset,
    feature_specs: &[FeatureSpec],
    likelihood: &LikelihoodModel,
    priors: &PriorSpec,
    config: &FitConfig,
    n: usize,
    seed: u64,
) -> Result<BootstrapSamples> {
    if n < 2 {
        return Err(RatingError::InvalidConfig("need at least 2 bootstrap replicates".into()));
    }
    let full = fit(dataset, feature_specs, likelihood, priors, config, None)?;
    bootstrap_fit_warm(dataset, feature_specs, likelihood, priors, config, n, seed, &full.params)
}

/// Like [`bootstrap_fit`] but with an explicit warm start, for callers that
/// already fitted the full dataset.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_fit_warm(
    dataset: &Dataset,
    feature_specs: &[FeatureSpec],
    likelihood: &LikelihoodModel,
    priors: &PriorSpec,
    config: &FitConfig,
    n: usize,
    seed: u64,
    warm: &RatingParameters,
) -> Result<BootstrapSamples> {
    let mut replicates = Vec::with_capacity(n);
    let mut failed = 0;
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let sample = resample(dataset, &mut rng);
        if sample.is_empty() {
            failed += 1;
            continue;
        }
        // a resample can drop a model entirely; fall back to a cold start fit
        // of the same shape, which tolerates unplayed models
        let result = fit(&sample, feature_specs, likelihood, priors, config, Some(warm))?;
        if result.converged {
            replicates.push(result.params);
        } else {
            failed += 1;
        }
    }
    Ok(BootstrapSamples {
        n,
        seed,
        replicates,
        failed,
    })
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sorted_samples(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s
}

/// Standard pivotal bootstrap interval `[2e - q_hi, 2e - q_lo]`.
pub fn pivotal_interval(estimate: f64, samples: &[f64], confidence: f64) -> (f64, f64) {
    if samples.is_empty() {
        return (estimate, estimate);
    }
    let s = sorted_samples(samples);
    let a = 1.0 - confidence;
    let q_lo = quantile(&s, a / 2.0);
    let q_hi = quantile(&s, 1.0 - a / 2.0);
    (2.0 * estimate - q_hi, 2.0 * estimate - q_lo)
}

/// Literal offset form `[e - q_hi, e - q_lo]`; kept as a variant because some
/// reports state the pivotal interval as offsets from the estimate.
pub fn offset_interval(estimate: f64, samples: &[f64], confidence: f64) -> (f64, f64) {
    if samples.is_empty() {
        return (estimate, estimate);
    }
    let s = sorted_samples(samples);
    let a = 1.0 - confidence;
    (
        estimate - quantile(&s, 1.0 - a / 2.0),
        estimate - quantile(&s, a / 2.0),
    )
}

/// `(mean - k sd, mean + k sd)` with the n-1 sample standard deviation.
pub fn sigma_interval(samples: &[f64], k: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = if samples.len() < 2 {
        0.0
    } else {
        (samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean - k * sd, mean + k * sd)
}
