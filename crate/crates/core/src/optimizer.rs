//! MAP fitting by block coordinate descent.
//!
//! Each outer iteration takes one damped Newton step on every model's
//! `(base, beta)` block in registry order, then solves the shared weights
//! with L-BFGS. The objective is convex, so the block order only affects the
//! path, not the limit. For the accuracy likelihood (no Hessian) the model
//! blocks fall back to L-BFGS as well.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{RatingError, Result};
use crate::lbfgs::{self, LbfgsOptions};
use crate::likelihood::{
    design_gradient, Design, LikelihoodKind, LikelihoodModel, LossBreakdown,
};
use crate::model::{anchor, Dataset, FeatureSpec, PriorSpec, RatingParameters};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_outer_iterations: usize,
    /// Convergence threshold on the max parameter change per outer iteration.
    pub param_tolerance: f64,
    /// Convergence threshold on the relative loss change per outer iteration.
    pub loss_tolerance: f64,
    /// Initial Newton step scale; halved until the loss does not increase.
    pub newton_damping: f64,
    pub lbfgs_memory: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_outer_iterations: 200,
            param_tolerance: 1e-6,
            loss_tolerance: 1e-9,
            newton_damping: 1.0,
            lbfgs_memory: 10,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iterations < 1 {
            return Err(RatingError::InvalidConfig("max_outer_iterations must be >= 1".into()));
        }
        if !(self.param_tolerance > 0.0) || !(self.loss_tolerance > 0.0) {
            return Err(RatingError::InvalidConfig("tolerances must be > 0".into()));
        }
        if !(self.newton_damping > 0.0 && self.newton_damping <= 1.0) {
            return Err(RatingError::InvalidConfig("newton_damping must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub total_loss: f64,
    /// Max absolute parameter change over the iteration; infinite for the
    /// initial entry.
    pub max_param_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: RatingParameters,
    pub loss: LossBreakdown,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub iterations_used: usize,
}

/// True iff the last outer iteration met both the relative-loss and the
/// parameter-change criteria.
pub fn converged(trace: &[TraceEntry], config: &FitConfig) -> bool {
    if trace.len() < 2 {
        return false;
    }
    let prev = trace[trace.len() - 2];
    let last = trace[trace.len() - 1];
    let rel = (prev.total_loss - last.total_loss).abs() / prev.total_loss.abs().max(1.0);
    rel < config.loss_tolerance && last.max_param_change < config.param_tolerance
}

const MAX_HALVINGS: usize = 30;

struct FitState<'a> {
    design: &'a Design,
    lik: &'a LikelihoodModel,
    priors: &'a PriorSpec,
    base: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<Vec<f64>>,
    /// Cached rating difference per game.
    diff: Vec<f64>,
    /// Cached per-game loss (multiplicity included).
    loss: Vec<f64>,
    data_loss: f64,
}

impl<'a> FitState<'a> {
    fn new(
        design: &'a Design,
        lik: &'a LikelihoodModel,
        priors: &'a PriorSpec,
        init: &RatingParameters,
    ) -> FitState<'a> {
        let mut state = FitState {
            design,
            lik,
            priors,
            base: init.base.clone(),
            alpha: init.alpha.clone(),
            beta: init.beta.clone(),
            diff: vec![0.0; design.games.len()],
            loss: vec![0.0; design.games.len()],
            data_loss: 0.0,
        };
        state.refresh_all();
        state
    }

    fn refresh_all(&mut self) {
        self.data_loss = 0.0;
        for (i, pg) in self.design.games.iter().enumerate() {
            let d = self.design.diff(pg, &self.base, &self.alpha, &self.beta);
            let l = self.design.game_loss(self.lik, pg, d);
            self.diff[i] = d;
            self.loss[i] = l;
            self.data_loss += l;
        }
    }

    /// Prior penalty of model m's block at the given candidate values.
    fn block_prior(&self, base_m: f64, beta_m: &[f64]) -> f64 {
        let mut penalty = 0.0;
        if let Some(s) = self.priors.sigma_base {
            penalty += base_m * base_m / (2.0 * s * s);
        }
        for (j, b) in beta_m.iter().enumerate() {
            let s = self.priors.sigma_specific[j];
            penalty += b * b / (2.0 * s * s);
        }
        penalty
    }

    fn alpha_prior(&self, alpha: &[f64]) -> f64 {
        alpha
            .iter()
            .zip(&self.priors.sigma_shared)
            .map(|(a, s)| a * a / (2.0 * s * s))
            .sum()
    }

    fn full_prior(&self) -> f64 {
        let mut penalty = self.alpha_prior(&self.alpha);
        for m in 0..self.base.len() {
            penalty += self.block_prior(self.base[m], &self.beta[m]);
        }
        penalty
    }

    fn total(&self) -> f64 {
        self.data_loss + self.full_prior()
    }

    /// Per-game coefficient of model m's block in the rating difference:
    /// `d(diff)/d(base_m, beta_m)`. Zero-filled into `coeff`.
    fn block_coeff(&self, gi: usize, m: usize, coeff: &mut [f64]) {
        let pg = &self.design.games[gi];
        let dp = pg.spec_first.len();
        if pg.a == m {
            coeff[0] = 1.0;
            coeff[1..1 + dp].copy_from_slice(&pg.spec_first);
        } else {
            coeff[0] = -1.0;
            for j in 0..dp {
                coeff[1 + j] = -pg.spec_second[j];
            }
        }
    }

    /// Gradient and Hessian of the objective restricted to model m's block.
    fn block_grad_hess(&self, m: usize) -> (DVector<f64>, DMatrix<f64>) {
        let dp = self.beta[m].len();
        let dim = 1 + dp;
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        let mut coeff = vec![0.0; dim];
        for &gi in &self.design.by_model[m] {
            let pg = &self.design.games[gi];
            let (p, dp1, dp2) = self.lik.prob_derivs(self.diff[gi]);
            let (l1, l2) = crate::likelihood::loss_derivs(p, dp1, dp2, pg.weight);
            let (l1, l2) = (l1 * pg.mult, l2 * pg.mult);
            self.block_coeff(gi, m, &mut coeff);
            for r in 0..dim {
                g[r] += l1 * coeff[r];
                for c in 0..dim {
                    h[(r, c)] += l2 * coeff[r] * coeff[c];
                }
            }
        }
        if let Some(s) = self.priors.sigma_base {
            g[0] += self.base[m] / (s * s);
            h[(0, 0)] += 1.0 / (s * s);
        }
        for j in 0..dp {
            let s = self.priors.sigma_specific[j];
            g[1 + j] += self.beta[m][j] / (s * s);
            h[(1 + j, 1 + j)] += 1.0 / (s * s);
        }
        (g, h)
    }

    /// Change in (data + block prior) loss if model m's block moves by
    /// `t * delta`, without committing anything.
    fn block_step_delta(&self, m: usize, delta: &[f64], t: f64) -> f64 {
        let dp = self.beta[m].len();
        let dim = 1 + dp;
        let mut coeff = vec![0.0; dim];
        let mut change = 0.0;
        for &gi in &self.design.by_model[m] {
            let pg = &self.design.games[gi];
            self.block_coeff(gi, m, &mut coeff);
            let dd: f64 = (0..dim).map(|r| t * delta[r] * coeff[r]).sum();
            let new_loss = self.design.game_loss(self.lik, pg, self.diff[gi] + dd);
            change += new_loss - self.loss[gi];
        }
        let new_base = self.base[m] + t * delta[0];
        let new_beta: Vec<f64> = (0..dp).map(|j| self.beta[m][j] + t * delta[1 + j]).collect();
        change += self.block_prior(new_base, &new_beta) - self.block_prior(self.base[m], &self.beta[m]);
        change
    }

    /// Commit a block move of `t * delta`, updating caches incrementally.
    fn apply_block_step(&mut self, m: usize, delta: &[f64], t: f64) {
        let dp = self.beta[m].len();
        let dim = 1 + dp;
        let mut coeff = vec![0.0; dim];
        // caches first, while the old parameters are still in place
        for idx in 0..self.design.by_model[m].len() {
            let gi = self.design.by_model[m][idx];
            self.block_coeff(gi, m, &mut coeff);
            let dd: f64 = (0..dim).map(|r| t * delta[r] * coeff[r]).sum();
            let pg = &self.design.games[gi];
            let new_d = self.diff[gi] + dd;
            let new_loss = self.design.game_loss(self.lik, pg, new_d);
            self.data_loss += new_loss - self.loss[gi];
            self.diff[gi] = new_d;
            self.loss[gi] = new_loss;
        }
        self.base[m] += t * delta[0];
        for j in 0..dp {
            self.beta[m][j] += t * delta[1 + j];
        }
    }

    /// One damped Newton step on model m's block with step-halving.
    fn newton_block_step(&mut self, m: usize, config: &FitConfig) {
        let (g, h) = self.block_grad_hess(m);
        let dim = g.len();
        // Levenberg damping: retry with an increasingly ridged Hessian until
        // the solve succeeds.
        let scale = 1.0 + (0..dim).map(|i| h[(i, i)]).fold(0.0_f64, f64::max);
        let mut delta: Option<Vec<f64>> = None;
        for lambda in [0.0, 1e-6, 1e-3, 1.0, 1e3] {
            let mut hd = h.clone();
            for i in 0..dim {
                hd[(i, i)] += lambda * scale;
            }
            if let Some(chol) = hd.cholesky() {
                let step = chol.solve(&g);
                let v: Vec<f64> = (-step).iter().copied().collect();
                if v.iter().all(|x| x.is_finite()) {
                    delta = Some(v);
                    break;
                }
            }
        }
        let Some(delta) = delta else { return };
        let mut t = config.newton_damping;
        for _ in 0..=MAX_HALVINGS {
            if self.block_step_delta(m, &delta, t) <= 0.0 {
                self.apply_block_step(m, &delta, t);
                return;
            }
            t *= 0.5;
        }
    }

    /// L-BFGS on model m's block; used when the likelihood has no Hessian.
    fn lbfgs_block_step(&mut self, m: usize, config: &FitConfig) {
        let dp = self.beta[m].len();
        let dim = 1 + dp;
        let mut x0 = vec![self.base[m]];
        x0.extend_from_slice(&self.beta[m]);
        let start = x0.clone();
        let f0 = self.block_step_delta(m, &vec![0.0; dim], 0.0);
        debug_assert!(f0.abs() < 1e-9);
        let opts = LbfgsOptions {
            memory: config.lbfgs_memory,
            max_iters: 30,
            grad_tol: 0.1 * config.param_tolerance,
            step_tol: 0.01 * config.param_tolerance,
        };
        let by_model = &self.design.by_model[m];
        let design = self.design;
        let lik = self.lik;
        let priors = self.priors;
        let diff = &self.diff;
        let base_m = self.base[m];
        let beta_m = self.beta[m].clone();
        let out = lbfgs::minimize(
            |x, grad| {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let mut fx = 0.0;
                let mut coeff = vec![0.0; dim];
                for &gi in by_model {
                    let pg = &design.games[gi];
                    if pg.a == m {
                        coeff[0] = 1.0;
                        coeff[1..1 + dp].copy_from_slice(&pg.spec_first);
                    } else {
                        coeff[0] = -1.0;
                        for j in 0..dp {
                            coeff[1 + j] = -pg.spec_second[j];
                        }
                    }
                    let mut dd = (x[0] - base_m) * coeff[0];
                    for j in 0..dp {
                        dd += (x[1 + j] - beta_m[j]) * coeff[1 + j];
                    }
                    let d = diff[gi] + dd;
                    let (p, dp1, dp2) = lik.prob_derivs(d);
                    fx += design.game_loss(lik, pg, d);
                    let (l1, _) = crate::likelihood::loss_derivs(p, dp1, dp2, pg.weight);
                    let l1 = l1 * pg.mult;
                    for r in 0..dim {
                        grad[r] += l1 * coeff[r];
                    }
                }
                if let Some(s) = priors.sigma_base {
                    fx += x[0] * x[0] / (2.0 * s * s);
                    grad[0] += x[0] / (s * s);
                }
                for j in 0..dp {
                    let s = priors.sigma_specific[j];
                    fx += x[1 + j] * x[1 + j] / (2.0 * s * s);
                    grad[1 + j] += x[1 + j] / (s * s);
                }
                fx
            },
            x0,
            &opts,
        );
        if out.x != start {
            let delta: Vec<f64> = out.x.iter().zip(&start).map(|(a, b)| a - b).collect();
            if self.block_step_delta(m, &delta, 1.0) <= 0.0 {
                self.apply_block_step(m, &delta, 1.0);
            }
        }
    }

    /// Inner L-BFGS solve on the shared weights.
    fn alpha_step(&mut self, config: &FitConfig) {
        let d = self.alpha.len();
        if d == 0 {
            return;
        }
        let opts = LbfgsOptions {
            memory: config.lbfgs_memory,
            max_iters: 40,
            grad_tol: 0.1 * config.param_tolerance,
            step_tol: 0.01 * config.param_tolerance,
        };
        let design = self.design;
        let lik = self.lik;
        let priors = self.priors;
        let diff = &self.diff;
        let alpha0 = self.alpha.clone();
        let before = self.data_loss + self.alpha_prior(&self.alpha);
        let out = lbfgs::minimize(
            |x, grad| {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let mut fx = 0.0;
                for (gi, pg) in design.games.iter().enumerate() {
                    let mut dd = 0.0;
                    for j in 0..d {
                        dd += (x[j] - alpha0[j]) * pg.shared_diff[j];
                    }
                    let dist = diff[gi] + dd;
                    let (p, dp1, dp2) = lik.prob_derivs(dist);
                    fx += design.game_loss(lik, pg, dist);
                    let (l1, _) = crate::likelihood::loss_derivs(p, dp1, dp2, pg.weight);
                    let l1 = l1 * pg.mult;
                    for (g, s) in grad.iter_mut().zip(&pg.shared_diff) {
                        *g += l1 * s;
                    }
                }
                for j in 0..d {
                    let s = priors.sigma_shared[j];
                    fx += x[j] * x[j] / (2.0 * s * s);
                    grad[j] += x[j] / (s * s);
                }
                fx
            },
            alpha0.clone(),
            &opts,
        );
        if out.fx <= before && out.x != alpha0 {
            self.alpha = out.x;
            self.refresh_all();
        }
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = self.base.clone();
        v.extend_from_slice(&self.alpha);
        for row in &self.beta {
            v.extend_from_slice(row);
        }
        v
    }
}

/// Fit the MAP objective on a dataset with the given feature specs.
///
/// Non-convergence is reported through `FitResult::converged`, not an error.
/// The result is mean-anchored when the base prior is flat.
pub fn fit(
    dataset: &Dataset,
    feature_specs: &[FeatureSpec],
    likelihood: &LikelihoodModel,
    priors: &PriorSpec,
    config: &FitConfig,
    warm_start: Option<&RatingParameters>,
) -> Result<FitResult> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(RatingError::InvalidData("cannot fit an empty dataset".into()));
    }
    if dataset.model_registry.len() < 2 {
        return Err(RatingError::InvalidData("need at least 2 models to fit".into()));
    }
    let shared: Vec<FeatureSpec> = feature_specs
        .iter()
        .filter(|s| s.kind == crate::model::FeatureKind::Shared)
        .cloned()
        .collect();
    let specific: Vec<FeatureSpec> = feature_specs
        .iter()
        .filter(|s| s.kind == crate::model::FeatureKind::ModelSpecific)
        .cloned()
        .collect();
    priors.validate(shared.len(), specific.len())?;

    let init = match warm_start {
        Some(p) => {
            p.validate()?;
            if p.models != dataset.model_registry
                || p.shared_specs != shared
                || p.specific_specs != specific
            {
                return Err(RatingError::InvalidConfig(
                    "warm start shape does not match dataset/features".into(),
                ));
            }
            p.clone()
        }
        None => {
            let base_init = if priors.sigma_base.is_some() { 0.0 } else { priors.anchor_value };
            RatingParameters::zeros(
                dataset.model_registry.clone(),
                shared.clone(),
                specific.clone(),
                base_init,
            )
        }
    };

    let design = Design::build(dataset, &init)?;
    let use_newton = !matches!(likelihood.kind, LikelihoodKind::AccuracyBased);
    let mut state = FitState::new(&design, likelihood, priors, &init);

    let mut trace = vec![TraceEntry {
        iteration: 0,
        total_loss: state.total(),
        max_param_change: f64::INFINITY,
    }];
    let mut iterations_used = 0;
    let mut is_converged = false;

    for iter in 1..=config.max_outer_iterations {
        let prev_flat = state.flat();
        for m in 0..design.n_models {
            if use_newton {
                state.newton_block_step(m, config);
            } else {
                state.lbfgs_block_step(m, config);
            }
        }
        state.alpha_step(config);
        let flat = state.flat();
        let max_change = prev_flat
            .iter()
            .zip(&flat)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        trace.push(TraceEntry {
            iteration: iter,
            total_loss: state.total(),
            max_param_change: max_change,
        });
        iterations_used = iter;
        if converged(&trace, config) {
            is_converged = true;
            break;
        }
    }

    let mut params = init;
    params.base = state.base.clone();
    params.alpha = state.alpha.clone();
    params.beta = state.beta.clone();
    if priors.sigma_base.is_none() {
        params = anchor(&params, priors.anchor_value);
    }
    let loss = crate::likelihood::total_loss(likelihood, &params, dataset, priors)?;
    Ok(FitResult {
        params,
        loss,
        trace,
        converged: is_converged,
        iterations_used,
    })
}

/// Fit with no features: base ratings only.
pub fn fit_univariate(
    dataset: &Dataset,
    likelihood: &LikelihoodModel,
    priors: &PriorSpec,
    config: &FitConfig,
) -> Result<FitResult> {
    fit(dataset, &[], likelihood, priors, config, None)
}

/// Max-norms of the per-block gradients at the given parameters; used to
/// check block optimality after a fit.
pub fn block_gradient_norms(
    likelihood: &LikelihoodModel,
    params: &RatingParameters,
    dataset: &Dataset,
    priors: &PriorSpec,
) -> Result<(Vec<f64>, f64)> {
    let design = Design::build(dataset, params)?;
    let g = design_gradient(&design, likelihood, params, priors);
    let mut per_model = Vec::with_capacity(params.models.len());
    for m in 0..params.models.len() {
        let mut norm = if priors.sigma_base.is_some() {
            g.base[m].abs()
        } else {
            // flat base prior leaves the gauge free: measure the block
            // gradient relative to the mean drift
            let mean: f64 = g.base.iter().sum::<f64>() / g.base.len() as f64;
            (g.base[m] - mean).abs()
        };
        for v in &g.beta[m] {
            norm = norm.max(v.abs());
        }
        per_model.push(norm);
    }
    let alpha_norm = g.alpha.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok((per_model, alpha_norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::total_loss;
    use crate::model::{Game, ModelId, Outcome};
    use approx::assert_relative_eq;

    fn mid(name: &str) -> ModelId {
        ModelId(name.to_string())
    }

    fn assert_monotone(trace: &[TraceEntry]) {
        for pair in trace.windows(2) {
            assert!(
                pair[1].total_loss <= pair[0].total_loss + 1e-9 * pair[0].total_loss.abs().max(1.0),
                "loss increased: {} -> {}",
                pair[0].total_loss,
                pair[1].total_loss
            );
        }
    }

    #[test]
    fn symmetric_two_models_anchor_at_1000() {
        let games = vec![
            Game::new(mid("a"), mid("b"), Outcome::win()).unwrap().with_multiplicity(10),
            Game::new(mid("a"), mid("b"), Outcome::loss()).unwrap().with_multiplicity(10),
        ];
        let ds = Dataset::new(games).unwrap();
        let result = fit_univariate(
            &ds,
            &LikelihoodModel::bradley_terry(),
            &PriorSpec::flat(1000.0),
            &FitConfig::default(),
        )
        .unwrap();
        assert!(result.converged);
        assert_monotone(&result.trace);
        assert_relative_eq!(result.params.base[0], 1000.0, epsilon = 1e-6);
        assert_relative_eq!(result.params.base[1], 1000.0, epsilon = 1e-6);
    }

    #[test]
    fn separable_data_flat_prior_gap_keeps_growing() {
        // one-sided data has no finite MLE under a flat prior; the rating
        // gap must not shrink as the iteration budget grows
        let games = vec![Game::new(mid("a"), mid("b"), Outcome::win())
            .unwrap()
            .with_multiplicity(20)];
        let ds = Dataset::new(games).unwrap();
        let gap_at = |iters: usize| {
            let config = FitConfig {
                max_outer_iterations: iters,
                ..FitConfig::default()
            };
            let result = fit_univariate(
                &ds,
                &LikelihoodModel::bradley_terry(),
                &PriorSpec::flat(1000.0),
                &config,
            )
            .unwrap();
            assert_monotone(&result.trace);
            result.params.base[0] - result.params.base[1]
        };
        let early = gap_at(5);
        let late = gap_at(60);
        assert!(late >= early, "gap shrank: {early} -> {late}");
        assert!(late > 1000.0, "gap {late}");
    }

    #[test]
    fn separable_data_with_base_prior_matches_grid_oracle() {
        let games = vec![Game::new(mid("a"), mid("b"), Outcome::win())
            .unwrap()
            .with_multiplicity(20)];
        let ds = Dataset::new(games).unwrap();
        let priors = PriorSpec::flat(0.0).with_sigma_base(200.0);
        let result = fit_univariate(
            &ds,
            &LikelihoodModel::bradley_terry(),
            &priors,
            &FitConfig::default(),
        )
        .unwrap();
        assert!(result.converged);
        assert!(result.params.base.iter().all(|b| b.is_finite()));

        // 1-d grid oracle: by symmetry of the penalty the optimum satisfies
        // base_b = -base_a, so scan base_a on a fine lattice.
        let k = std::f64::consts::LN_10 / 400.0;
        let oracle = |r: f64| {
            let p = 1.0 / (1.0 + (-k * 2.0 * r).exp());
            -20.0 * p.ln() + 2.0 * r * r / (2.0 * 200.0 * 200.0)
        };
        let mut best = (f64::INFINITY, 0.0);
        let mut r = 0.0;
        while r <= 800.0 {
            let v = oracle(r);
            if v < best.0 {
                best = (v, r);
            }
            r += 0.05;
        }
        assert_relative_eq!(result.params.base[0], best.1, epsilon = 0.1);
        assert_relative_eq!(result.params.base[1], -best.1, epsilon = 0.1);
    }

    #[test]
    fn converged_examples() {
        let config = FitConfig::default();
        let entry = |i, l, c| TraceEntry {
            iteration: i,
            total_loss: l,
            max_param_change: c,
        };
        assert!(!converged(&[entry(0, 5.0, f64::INFINITY)], &config));
        assert!(converged(&[entry(0, 5.0, f64::INFINITY), entry(1, 5.0, 0.0)], &config));
        // relative loss change 1e-8 with tolerance 1e-9: not converged
        assert!(!converged(
            &[entry(0, 1.0, f64::INFINITY), entry(1, 1.0 - 1e-8, 0.0)],
            &config
        ));
    }

    fn three_model_dataset(seed: u64, n: usize) -> Dataset {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = [1000.0, 1100.0, 900.0];
        let names = [mid("a"), mid("b"), mid("c")];
        let k = std::f64::consts::LN_10 / 400.0;
        let mut games = Vec::new();
        for _ in 0..n {
            let i = rng.gen_range(0..3usize);
            let j = (i + rng.gen_range(1..3usize)) % 3;
            let p = 1.0 / (1.0 + (-k * (truth[i] - truth[j])).exp());
            let w = if rng.gen_bool(p) { 1.0 } else { 0.0 };
            games.push(
                Game::new(names[i].clone(), names[j].clone(), Outcome::new(w).unwrap()).unwrap(),
            );
        }
        Dataset::new(games).unwrap()
    }

    #[test]
    fn three_models_recover_truth_roughly() {
        let ds = three_model_dataset(3, 2000);
        let result = fit_univariate(
            &ds,
            &LikelihoodModel::bradley_terry(),
            &PriorSpec::flat(1000.0),
            &FitConfig::default(),
        )
        .unwrap();
        assert!(result.converged);
        assert_monotone(&result.trace);
        let by_name = |n: &str| {
            let i = result.params.models.iter().position(|m| m.as_str() == n).unwrap();
            result.params.base[i]
        };
        assert!((by_name("a") - 1000.0).abs() < 30.0);
        assert!((by_name("b") - 1100.0).abs() < 30.0);
        assert!((by_name("c") - 900.0).abs() < 30.0);
    }

    #[test]
    fn univariate_equals_fit_with_no_features() {
        let ds = three_model_dataset(5, 300);
        let lik = LikelihoodModel::bradley_terry();
        let priors = PriorSpec::flat(1000.0);
        let config = FitConfig::default();
        let a = fit(&ds, &[], &lik, &priors, &config, None).unwrap();
        let b = fit_univariate(&ds, &lik, &priors, &config).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trace.len(), b.trace.len());
        assert_eq!(a.loss.total.to_bits(), b.loss.total.to_bits());
    }

    #[test]
    fn warm_start_converges_within_two_iterations() {
        let ds = three_model_dataset(7, 500);
        let lik = LikelihoodModel::bradley_terry();
        let priors = PriorSpec::flat(1000.0);
        let config = FitConfig::default();
        let first = fit_univariate(&ds, &lik, &priors, &config).unwrap();
        let again = fit(&ds, &[], &lik, &priors, &config, Some(&first.params)).unwrap();
        assert!(again.converged);
        assert!(again.iterations_used <= 2, "used {}", again.iterations_used);
    }

    #[test]
    fn permutation_invariance() {
        let ds = three_model_dataset(9, 400);
        let mut reversed_games = ds.games.clone();
        reversed_games.reverse();
        let ds_rev = Dataset::from_parts(
            reversed_games,
            ds.model_registry.clone(),
            ds.task_registry.clone(),
            ds.feature_registry.clone(),
        )
        .unwrap();
        let lik = LikelihoodModel::bradley_terry();
        let priors = PriorSpec::flat(1000.0);
        let config = FitConfig::default();
        let a = fit_univariate(&ds, &lik, &priors, &config).unwrap();
        let b = fit_univariate(&ds_rev, &lik, &priors, &config).unwrap();
        // both runs stop within param_tolerance of the shared optimum, so
        // game order can move the result by no more than a few tolerances
        for (x, y) in a.params.base.iter().zip(&b.params.base) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
    }

    #[test]
    fn block_gradients_small_at_convergence() {
        let ds = three_model_dataset(11, 800);
        let lik = LikelihoodModel::bradley_terry();
        let priors = PriorSpec::flat(1000.0);
        let config = FitConfig::default();
        let result = fit_univariate(&ds, &lik, &priors, &config).unwrap();
        assert!(result.converged);
        let (per_model, alpha_norm) =
            block_gradient_norms(&lik, &result.params, &ds, &priors).unwrap();
        for norm in per_model {
            assert!(norm < 10.0 * config.param_tolerance, "block gradient {norm}");
        }
        assert!(alpha_norm < 10.0 * config.param_tolerance);
    }

    #[test]
    fn accuracy_likelihood_fits_via_lbfgs() {
        // two models with accuracy-scale ratings; weight implies r_a - r_b = 0.2
        let games = vec![Game::new(mid("a"), mid("b"), Outcome::new(0.6).unwrap())
            .unwrap()
            .with_multiplicity(50)];
        let ds = Dataset::new(games).unwrap();
        let lik = LikelihoodModel::new(LikelihoodKind::AccuracyBased, 400.0).unwrap();
        let priors = PriorSpec::flat(0.0);
        let result = fit_univariate(&ds, &lik, &priors, &FitConfig::default()).unwrap();
        assert!(result.converged);
        let gap = result.params.base[0] - result.params.base[1];
        assert_relative_eq!(gap, 0.2, epsilon = 1e-6);
    }

    #[test]
    fn anchored_loss_matches_reported_loss() {
        let ds = three_model_dataset(13, 200);
        let lik = LikelihoodModel::bradley_terry();
        let priors = PriorSpec::flat(1000.0);
        let result = fit_univariate(&ds, &lik, &priors, &FitConfig::default()).unwrap();
        let recomputed = total_loss(&lik, &result.params, &ds, &priors).unwrap();
        assert_relative_eq!(result.loss.total, recomputed.total, epsilon = 1e-12);
        let mean: f64 =
            result.params.base.iter().sum::<f64>() / result.params.base.len() as f64;
        assert_relative_eq!(mean, 1000.0, epsilon = 1e-9);
    }
}
