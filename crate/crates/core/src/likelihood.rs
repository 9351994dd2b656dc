//! Win-probability models and the MAP objective with analytic derivatives.
//!
//! The default is the Bradley-Terry model on the Elo-compatible scale where a
//! 400-point gap means 10:1 win odds. The Rao-Kupper and Davidson extensions
//! model draws explicitly; for loss evaluation they are collapsed to a binary
//! probability by crediting half the draw probability to each side. The
//! accuracy-based model keeps ratings directly comparable to benchmark
//! accuracies.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{RatingError, Result};
use crate::model::{
    Dataset, Game, MissingPolicy, ModelId, PriorSpec, RatingParameters, Side,
};

/// Probability clamp applied before logarithms.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LikelihoodKind {
    BradleyTerry,
    /// Draw model with theta >= 1; theta = 1 reduces to Bradley-Terry.
    RaoKupper { theta: f64 },
    /// Draw model with theta >= 0; theta = 0 reduces to Bradley-Terry.
    Davidson { theta: f64 },
    /// Ratings on the accuracy scale; win probability is a clamped affine map.
    AccuracyBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodModel {
    pub kind: LikelihoodKind,
    /// Rating points per log-odds decade (ignored by the accuracy model).
    pub scale: f64,
}

impl Default for LikelihoodModel {
    fn default() -> Self {
        LikelihoodModel::bradley_terry()
    }
}

impl LikelihoodModel {
    pub fn bradley_terry() -> Self {
        LikelihoodModel {
            kind: LikelihoodKind::BradleyTerry,
            scale: 400.0,
        }
    }

    pub fn new(kind: LikelihoodKind, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(RatingError::InvalidConfig("scale must be > 0".into()));
        }
        match kind {
            LikelihoodKind::RaoKupper { theta } if !(theta >= 1.0) => {
                return Err(RatingError::InvalidConfig("rao_kupper requires theta >= 1".into()))
            }
            LikelihoodKind::Davidson { theta } if !(theta >= 0.0) => {
                return Err(RatingError::InvalidConfig("davidson requires theta >= 0".into()))
            }
            _ => {}
        }
        Ok(LikelihoodModel { kind, scale })
    }

    /// Natural-log slope of the Bradley-Terry logistic at rating scale.
    fn slope(&self) -> f64 {
        std::f64::consts::LN_10 / self.scale
    }

    /// Draw-collapsed win probability plus first and second derivatives with
    /// respect to the rating difference `d = r_i - r_j`.
    ///
    /// Davidson theta = 0 and Rao-Kupper theta = 1 delegate to the
    /// Bradley-Terry branch so that they are bit-identical to it.
    pub(crate) fn prob_derivs(&self, d: f64) -> (f64, f64, f64) {
        let k = self.slope();
        match self.kind {
            LikelihoodKind::BradleyTerry => bt_derivs(k, d),
            LikelihoodKind::RaoKupper { theta } => {
                if theta == 1.0 {
                    return bt_derivs(k, d);
                }
                // u = 10^(d/scale); p = 1/2 (1 + u/(u+theta) - 1/(1+theta u))
                let u = (k * d).exp();
                let a = u + theta;
                let b = 1.0 + theta * u;
                let p = 0.5 * (1.0 + u / a - 1.0 / b);
                let p_u = 0.5 * theta * (1.0 / (a * a) + 1.0 / (b * b));
                let p_uu = 0.5 * theta * (-2.0 / (a * a * a) - 2.0 * theta / (b * b * b));
                let du = k * u;
                (p, p_u * du, p_uu * du * du + p_u * k * k * u)
            }
            LikelihoodKind::Davidson { theta } => {
                if theta == 0.0 {
                    return bt_derivs(k, d);
                }
                // p = 1/2 (1 + (u-1)/S), S = u + 1 + theta sqrt(u)
                let u = (k * d).exp();
                let sq = u.sqrt();
                let s = u + 1.0 + theta * sq;
                let s1 = 1.0 + theta / (2.0 * sq);
                let s2 = -theta / (4.0 * u * sq);
                let n = u - 1.0;
                let q1 = (s - n * s1) / (s * s);
                let q2 = (-n * s2 * s - 2.0 * s1 * (s - n * s1)) / (s * s * s);
                let p = 0.5 * (1.0 + n / s);
                let p_u = 0.5 * q1;
                let p_uu = 0.5 * q2;
                let du = k * u;
                (p, p_u * du, p_uu * du * du + p_u * k * k * u)
            }
            LikelihoodKind::AccuracyBased => {
                let raw = 0.5 * (1.0 + d);
                if raw <= 0.0 {
                    (0.0, 0.0, 0.0)
                } else if raw >= 1.0 {
                    (1.0, 0.0, 0.0)
                } else {
                    (raw, 0.5, 0.0)
                }
            }
        }
    }

    /// Draw-collapsed probability that the rating `r_i` side wins.
    pub fn win_probability(&self, r_i: f64, r_j: f64) -> Result<f64> {
        if !r_i.is_finite() || !r_j.is_finite() {
            return Err(RatingError::NonFinite("rating".into()));
        }
        Ok(self.prob_derivs(r_i - r_j).0)
    }

    /// Full three-outcome probabilities (win, draw, loss) for the first side.
    ///
    /// Bradley-Terry and the accuracy model have no draw mass.
    pub fn outcome_probabilities(&self, r_i: f64, r_j: f64) -> Result<(f64, f64, f64)> {
        if !r_i.is_finite() || !r_j.is_finite() {
            return Err(RatingError::NonFinite("rating".into()));
        }
        let k = self.slope();
        let d = r_i - r_j;
        match self.kind {
            LikelihoodKind::BradleyTerry => {
                let p = sigmoid(k * d);
                Ok((p, 0.0, 1.0 - p))
            }
            LikelihoodKind::AccuracyBased => {
                let p = (0.5 * (1.0 + d)).clamp(0.0, 1.0);
                Ok((p, 0.0, 1.0 - p))
            }
            LikelihoodKind::RaoKupper { theta } => {
                let u = (k * d).exp();
                let win = u / (u + theta);
                let loss = 1.0 / (1.0 + theta * u);
                Ok((win, 1.0 - win - loss, loss))
            }
            LikelihoodKind::Davidson { theta } => {
                let u = (k * d).exp();
                let s = u + 1.0 + theta * u.sqrt();
                Ok((u / s, theta * u.sqrt() / s, 1.0 / s))
            }
        }
    }
}

fn bt_derivs(k: f64, d: f64) -> (f64, f64, f64) {
    let p = sigmoid(k * d);
    let p1 = k * p * (1.0 - p);
    (p, p1, k * p1 * (1.0 - 2.0 * p))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Data term and prior penalty of the MAP objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub data_loss: f64,
    pub prior_penalty: f64,
    pub total: f64,
}

/// Cross-entropy of the clamped win probability against the game weight.
fn binary_loss(p: f64, w: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(w * p.ln() + (1.0 - w) * (1.0 - p).ln())
}

/// First and second derivatives of the per-game loss with respect to the
/// rating difference, given the collapsed probability and its derivatives.
pub(crate) fn loss_derivs(p: f64, dp: f64, d2p: f64, w: f64) -> (f64, f64) {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let denom = p * (1.0 - p);
    let a = (p - w) / denom;
    // dA/dp
    let da = (denom - (p - w) * (1.0 - 2.0 * p)) / (denom * denom);
    (a * dp, da * dp * dp + a * d2p)
}

/// Loss of a single game, multiplied by its multiplicity.
pub fn game_loss(model: &LikelihoodModel, params: &RatingParameters, game: &Game) -> Result<f64> {
    let r_i = crate::model::game_rating(params, game, Side::First)?;
    let r_j = crate::model::game_rating(params, game, Side::Second)?;
    let p = model.win_probability(r_i, r_j)?;
    Ok(binary_loss(p, game.outcome.weight_for_first) * game.multiplicity as f64)
}

// ---------------------------------------------------------------------------
// Prepared design: per-game feature values resolved once.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub(crate) struct PreparedGame {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
    pub mult: f64,
    /// f_j(g, first) - f_j(g, second) per shared feature.
    pub shared_diff: Vec<f64>,
    /// f'_j(g, first) per model-specific feature.
    pub spec_first: Vec<f64>,
    /// f'_j(g, second) per model-specific feature.
    pub spec_second: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub games: Vec<PreparedGame>,
    pub by_model: Vec<Vec<usize>>,
    pub n_models: usize,
}

impl Design {
    pub fn build(dataset: &Dataset, params: &RatingParameters) -> Result<Design> {
        params.validate()?;
        let n_models = params.models.len();
        let mut games = Vec::with_capacity(dataset.games.len());
        let mut by_model = vec![Vec::new(); n_models];
        for (idx, game) in dataset.games.iter().enumerate() {
            let a = params.model_index(&game.model_a)?;
            let b = params.model_index(&game.model_b)?;
            let mut shared_diff = Vec::with_capacity(params.shared_specs.len());
            for spec in &params.shared_specs {
                let fa = spec.value(game, Side::First, MissingPolicy::Lenient)?;
                let fb = spec.value(game, Side::Second, MissingPolicy::Lenient)?;
                shared_diff.push(fa - fb);
            }
            let mut spec_first = Vec::with_capacity(params.specific_specs.len());
            let mut spec_second = Vec::with_capacity(params.specific_specs.len());
            for spec in &params.specific_specs {
                spec_first.push(spec.value(game, Side::First, MissingPolicy::Lenient)?);
                spec_second.push(spec.value(game, Side::Second, MissingPolicy::Lenient)?);
            }
            games.push(PreparedGame {
                a,
                b,
                weight: game.outcome.weight_for_first,
                mult: game.multiplicity as f64,
                shared_diff,
                spec_first,
                spec_second,
            });
            by_model[a].push(idx);
            by_model[b].push(idx);
        }
        Ok(Design {
            games,
            by_model,
            n_models,
        })
    }

    /// Rating difference (first minus second side) for a prepared game.
    pub fn diff(
        &self,
        pg: &PreparedGame,
        base: &[f64],
        alpha: &[f64],
        beta: &[Vec<f64>],
    ) -> f64 {
        let mut d = base[pg.a] - base[pg.b];
        for (j, fd) in pg.shared_diff.iter().enumerate() {
            d += alpha[j] * fd;
        }
        let (ba, bb) = (&beta[pg.a], &beta[pg.b]);
        for j in 0..pg.spec_first.len() {
            d += ba[j] * pg.spec_first[j] - bb[j] * pg.spec_second[j];
        }
        d
    }

    pub fn game_loss(&self, model: &LikelihoodModel, pg: &PreparedGame, d: f64) -> f64 {
        let (p, _, _) = model.prob_derivs(d);
        binary_loss(p, pg.weight) * pg.mult
    }

    pub fn data_loss(
        &self,
        model: &LikelihoodModel,
        base: &[f64],
        alpha: &[f64],
        beta: &[Vec<f64>],
    ) -> f64 {
        self.games
            .iter()
            .map(|pg| self.game_loss(model, pg, self.diff(pg, base, alpha, beta)))
            .sum()
    }
}

pub(crate) fn prior_penalty(params: &RatingParameters, priors: &PriorSpec) -> f64 {
    let mut penalty = 0.0;
    for (j, a) in params.alpha.iter().enumerate() {
        let s = priors.sigma_shared[j];
        penalty += a * a / (2.0 * s * s);
    }
    for row in &params.beta {
        for (j, b) in row.iter().enumerate() {
            let s = priors.sigma_specific[j];
            penalty += b * b / (2.0 * s * s);
        }
    }
    if let Some(s) = priors.sigma_base {
        for b in &params.base {
            penalty += b * b / (2.0 * s * s);
        }
    }
    penalty
}

/// The full MAP objective: data loss over all games plus Gaussian penalties.
pub fn total_loss(
    model: &LikelihoodModel,
    params: &RatingParameters,
    dataset: &Dataset,
    priors: &PriorSpec,
) -> Result<LossBreakdown> {
    priors.validate(params.shared_specs.len(), params.specific_specs.len())?;
    let design = Design::build(dataset, params)?;
    let data_loss = design.data_loss(model, &params.base, &params.alpha, &params.beta);
    let prior = prior_penalty(params, priors);
    Ok(LossBreakdown {
        data_loss,
        prior_penalty: prior,
        total: data_loss + prior,
    })
}

/// Gradient of the MAP objective, same shape as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub base: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn max_abs(&self) -> f64 {
        self.base
            .iter()
            .chain(self.alpha.iter())
            .chain(self.beta.iter().flatten())
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

pub fn gradient(
    model: &LikelihoodModel,
    params: &RatingParameters,
    dataset: &Dataset,
    priors: &PriorSpec,
) -> Result<Gradient> {
    priors.validate(params.shared_specs.len(), params.specific_specs.len())?;
    let design = Design::build(dataset, params)?;
    Ok(design_gradient(&design, model, params, priors))
}

pub(crate) fn design_gradient(
    design: &Design,
    model: &LikelihoodModel,
    params: &RatingParameters,
    priors: &PriorSpec,
) -> Gradient {
    let mut g = Gradient {
        base: vec![0.0; params.base.len()],
        alpha: vec![0.0; params.alpha.len()],
        beta: params.beta.iter().map(|r| vec![0.0; r.len()]).collect(),
    };
    for pg in &design.games {
        let d = design.diff(pg, &params.base, &params.alpha, &params.beta);
        let (p, dp, d2p) = model.prob_derivs(d);
        let (l1, _) = loss_derivs(p, dp, d2p, pg.weight);
        let l1 = l1 * pg.mult;
        g.base[pg.a] += l1;
        g.base[pg.b] -= l1;
        for (j, fd) in pg.shared_diff.iter().enumerate() {
            g.alpha[j] += l1 * fd;
        }
        for j in 0..pg.spec_first.len() {
            g.beta[pg.a][j] += l1 * pg.spec_first[j];
            g.beta[pg.b][j] -= l1 * pg.spec_second[j];
        }
    }
    for (j, a) in params.alpha.iter().enumerate() {
        let s = priors.sigma_shared[j];
        g.alpha[j] += a / (s * s);
    }
    for (m, row) in params.beta.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            let s = priors.sigma_specific[j];
            g.beta[m][j] += b / (s * s);
        }
    }
    if let Some(s) = priors.sigma_base {
        for (m, b) in params.base.iter().enumerate() {
            g.base[m] += b / (s * s);
        }
    }
    g
}

/// Exact Hessian of the MAP objective restricted to one model's parameter
/// block `(base_m, beta_m)`, all other parameters held fixed.
///
/// Unsupported for the accuracy model (piecewise linear).
pub fn hessian_block(
    model: &LikelihoodModel,
    params: &RatingParameters,
    dataset: &Dataset,
    priors: &PriorSpec,
    m: &ModelId,
) -> Result<DMatrix<f64>> {
    priors.validate(params.shared_specs.len(), params.specific_specs.len())?;
    let design = Design::build(dataset, params)?;
    let idx = params.model_index(m)?;
    design_hessian_block(&design, model, params, priors, idx)
}

pub(crate) fn design_hessian_block(
    design: &Design,
    model: &LikelihoodModel,
    params: &RatingParameters,
    priors: &PriorSpec,
    m: usize,
) -> Result<DMatrix<f64>> {
    if matches!(model.kind, LikelihoodKind::AccuracyBased) {
        return Err(RatingError::Unsupported(
            "accuracy_based loss is piecewise linear; no Hessian".into(),
        ));
    }
    let dp_len = params.specific_specs.len();
    let dim = 1 + dp_len;
    let mut h = DMatrix::zeros(dim, dim);
    let mut coeff = vec![0.0; dim];
    for &gi in &design.by_model[m] {
        let pg = &design.games[gi];
        let d = design.diff(pg, &params.base, &params.alpha, &params.beta);
        let (p, dp, d2p) = model.prob_derivs(d);
        let (_, l2) = loss_derivs(p, dp, d2p, pg.weight);
        let l2 = l2 * pg.mult;
        // dd/d(theta_m): sign depends on which side m played
        if pg.a == m {
            coeff[0] = 1.0;
            coeff[1..1 + dp_len].copy_from_slice(&pg.spec_first);
        } else {
            coeff[0] = -1.0;
            for j in 0..dp_len {
                coeff[1 + j] = -pg.spec_second[j];
            }
        }
        for r in 0..dim {
            for c in 0..dim {
                h[(r, c)] += l2 * coeff[r] * coeff[c];
            }
        }
    }
    if let Some(s) = priors.sigma_base {
        h[(0, 0)] += 1.0 / (s * s);
    }
    for j in 0..dp_len {
        let s = priors.sigma_specific[j];
        h[(1 + j, 1 + j)] += 1.0 / (s * s);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeatureSpec, Game, Outcome};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn mid(name: &str) -> ModelId {
        ModelId(name.to_string())
    }

    #[test]
    fn bradley_terry_probabilities() {
        let bt = LikelihoodModel::bradley_terry();
        assert_relative_eq!(bt.win_probability(1000.0, 1000.0).unwrap(), 0.5);
        assert_relative_eq!(
            bt.win_probability(1400.0, 1000.0).unwrap(),
            10.0 / 11.0,
            epsilon = 1e-12
        );
        assert!(bt.win_probability(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn draw_models_reduce_to_bradley_terry() {
        let bt = LikelihoodModel::bradley_terry();
        let rk = LikelihoodModel::new(LikelihoodKind::RaoKupper { theta: 1.0 }, 400.0).unwrap();
        let dv = LikelihoodModel::new(LikelihoodKind::Davidson { theta: 0.0 }, 400.0).unwrap();
        for d in [-800.0, -123.4, 0.0, 55.5, 400.0] {
            let p = bt.win_probability(d, 0.0).unwrap();
            assert_eq!(rk.win_probability(d, 0.0).unwrap(), p);
            assert_eq!(dv.win_probability(d, 0.0).unwrap(), p);
        }
        // theta = 1 means zero draw mass for rao-kupper
        let (_, draw, _) = rk.outcome_probabilities(123.0, 45.0).unwrap();
        assert_relative_eq!(draw, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn accuracy_based_probability() {
        let acc = LikelihoodModel::new(LikelihoodKind::AccuracyBased, 400.0).unwrap();
        assert_relative_eq!(acc.win_probability(0.8, 0.6).unwrap(), 0.6, epsilon = 1e-12);
        assert_relative_eq!(acc.win_probability(2.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let theta_rk = 1.0 + rng.gen::<f64>() * 3.0;
            let theta_dv = rng.gen::<f64>() * 3.0;
            let r_i = rng.gen_range(-500.0..500.0);
            let r_j = rng.gen_range(-500.0..500.0);
            for model in [
                LikelihoodModel::new(LikelihoodKind::RaoKupper { theta: theta_rk }, 400.0).unwrap(),
                LikelihoodModel::new(LikelihoodKind::Davidson { theta: theta_dv }, 400.0).unwrap(),
            ] {
                let (w, d, l) = model.outcome_probabilities(r_i, r_j).unwrap();
                assert_relative_eq!(w + d + l, 1.0, epsilon = 1e-12);
                // collapsed probability matches win + draw/2
                assert_relative_eq!(
                    model.win_probability(r_i, r_j).unwrap(),
                    w + 0.5 * d,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn collapsed_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let r_i = rng.gen_range(-600.0..600.0);
            let r_j = rng.gen_range(-600.0..600.0);
            for model in [
                LikelihoodModel::bradley_terry(),
                LikelihoodModel::new(LikelihoodKind::RaoKupper { theta: 1.7 }, 400.0).unwrap(),
                LikelihoodModel::new(LikelihoodKind::Davidson { theta: 0.8 }, 400.0).unwrap(),
            ] {
                let p = model.win_probability(r_i, r_j).unwrap();
                let q = model.win_probability(r_j, r_i).unwrap();
                assert_relative_eq!(p + q, 1.0, epsilon = 1e-12);
            }
            let acc = LikelihoodModel::new(LikelihoodKind::AccuracyBased, 400.0).unwrap();
            let (x, y) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let p = acc.win_probability(x, y).unwrap();
            let q = acc.win_probability(y, x).unwrap();
            assert_relative_eq!(p + q, 1.0, epsilon = 1e-12);
        }
    }

    fn two_model_dataset(n_draws: u64) -> Dataset {
        let game = Game::new(mid("a"), mid("b"), Outcome::draw())
            .unwrap()
            .with_multiplicity(n_draws);
        Dataset::new(vec![game]).unwrap()
    }

    #[test]
    fn game_loss_examples() {
        let bt = LikelihoodModel::bradley_terry();
        let params = RatingParameters::zeros(vec![mid("a"), mid("b")], vec![], vec![], 1000.0);
        let draw = Game::new(mid("a"), mid("b"), Outcome::draw()).unwrap();
        assert_relative_eq!(
            game_loss(&bt, &params, &draw).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        let win = Game::new(mid("a"), mid("b"), Outcome::win()).unwrap();
        assert_relative_eq!(
            game_loss(&bt, &params, &win).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        let mut shifted = params.clone();
        shifted.base[0] = 1400.0;
        assert_relative_eq!(
            game_loss(&bt, &shifted, &win).unwrap(),
            -(10.0_f64 / 11.0).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn total_loss_examples() {
        let bt = LikelihoodModel::bradley_terry();
        let params = RatingParameters::zeros(vec![mid("a"), mid("b")], vec![], vec![], 1000.0);
        let ds = two_model_dataset(40);
        let priors = PriorSpec::flat(1000.0);
        let loss = total_loss(&bt, &params, &ds, &priors).unwrap();
        assert_relative_eq!(loss.data_loss, 40.0 * std::f64::consts::LN_2, epsilon = 1e-9);
        assert_relative_eq!(loss.prior_penalty, 0.0);
        assert_relative_eq!(loss.total, loss.data_loss + loss.prior_penalty);

        // penalty arithmetic on an empty-data fit context
        let mut params = RatingParameters::zeros(
            vec![mid("a"), mid("b")],
            vec![FeatureSpec::shared_column("len")],
            vec![],
            0.0,
        );
        params.alpha[0] = 10.0;
        let empty = Dataset::from_parts(
            vec![],
            vec![mid("a"), mid("b")],
            vec![],
            vec!["len".into()],
        )
        .unwrap();
        let priors = PriorSpec::uniform(1, 100.0, 0, 1.0);
        let loss = total_loss(&bt, &params, &empty, &priors).unwrap();
        assert_relative_eq!(loss.total, 0.005, epsilon = 1e-15);
        // penalty derivative
        let g = gradient(&bt, &params, &empty, &priors).unwrap();
        assert_relative_eq!(g.alpha[0], 1e-3, epsilon = 1e-15);
    }

    #[test]
    fn zero_sigma_is_config_error() {
        let bt = LikelihoodModel::bradley_terry();
        let params = RatingParameters::zeros(
            vec![mid("a"), mid("b")],
            vec![FeatureSpec::shared_column("len")],
            vec![],
            0.0,
        );
        let ds = two_model_dataset(1);
        let priors = PriorSpec::uniform(1, 0.0, 0, 1.0);
        assert!(total_loss(&bt, &params, &ds, &priors).is_err());
    }

    fn random_instance(
        rng: &mut ChaCha8Rng,
        n_games: usize,
    ) -> (Dataset, RatingParameters, PriorSpec) {
        let models = vec![mid("a"), mid("b"), mid("c")];
        let shared = vec![
            FeatureSpec::shared_column("len"),
            FeatureSpec::shared_position(),
        ];
        let specific = vec![FeatureSpec::task_modifier("code")];
        let mut games = Vec::new();
        for _ in 0..n_games {
            let i = rng.gen_range(0..3usize);
            let j = (i + rng.gen_range(1..3usize)) % 3;
            let w = [0.0, 0.5, 1.0][rng.gen_range(0..3usize)];
            let mut g = Game::new(models[i].clone(), models[j].clone(), Outcome::new(w).unwrap())
                .unwrap()
                .with_feature("len", rng.gen_range(1.0..4.0), rng.gen_range(1.0..4.0));
            if rng.gen_bool(0.5) {
                g = g.with_tag("code");
            }
            games.push(g.with_multiplicity(rng.gen_range(1..4)));
        }
        let ds = Dataset::from_parts(
            games,
            models.clone(),
            vec!["code".into()],
            vec!["len".into()],
        )
        .unwrap();
        let mut params = RatingParameters::zeros(models, shared, specific, 1000.0);
        for b in &mut params.base {
            *b += rng.gen_range(-200.0..200.0);
        }
        for a in &mut params.alpha {
            *a = rng.gen_range(-100.0..100.0);
        }
        for row in &mut params.beta {
            for b in row {
                *b = rng.gen_range(-80.0..80.0);
            }
        }
        let priors = PriorSpec::uniform(2, 150.0, 1, 120.0);
        (ds, params, priors)
    }

    fn perturb(params: &RatingParameters, which: usize, h: f64) -> RatingParameters {
        let mut out = params.clone();
        let n = out.base.len();
        let d = out.alpha.len();
        if which < n {
            out.base[which] += h;
        } else if which < n + d {
            out.alpha[which - n] += h;
        } else {
            let k = which - n - d;
            let dp = out.specific_specs.len();
            out.beta[k / dp][k % dp] += h;
        }
        out
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for model in [
            LikelihoodModel::bradley_terry(),
            LikelihoodModel::new(LikelihoodKind::RaoKupper { theta: 1.6 }, 400.0).unwrap(),
            LikelihoodModel::new(LikelihoodKind::Davidson { theta: 0.7 }, 400.0).unwrap(),
        ] {
            let (ds, params, priors) = random_instance(&mut rng, 50);
            let g = gradient(&model, &params, &ds, &priors).unwrap();
            let n_params = 3 + 2 + 3;
            let flatten = |g: &Gradient| {
                let mut v = g.base.clone();
                v.extend_from_slice(&g.alpha);
                for row in &g.beta {
                    v.extend_from_slice(row);
                }
                v
            };
            let gv = flatten(&g);
            let h = 1e-4;
            assert_eq!(gv.len(), n_params);
            for (which, &analytic) in gv.iter().enumerate() {
                let lp = total_loss(&model, &perturb(&params, which, h), &ds, &priors)
                    .unwrap()
                    .total;
                let lm = total_loss(&model, &perturb(&params, which, -h), &ds, &priors)
                    .unwrap()
                    .total;
                let fd = (lp - lm) / (2.0 * h);
                let denom = fd.abs().max(1e-6);
                assert!(
                    ((analytic - fd) / denom).abs() < 1e-5,
                    "entry {which}: analytic {analytic} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn hessian_block_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for model in [
            LikelihoodModel::bradley_terry(),
            LikelihoodModel::new(LikelihoodKind::RaoKupper { theta: 1.4 }, 400.0).unwrap(),
            LikelihoodModel::new(LikelihoodKind::Davidson { theta: 0.9 }, 400.0).unwrap(),
        ] {
            let (ds, params, priors) = random_instance(&mut rng, 40);
            let m = mid("b");
            let h_mat = hessian_block(&model, &params, &ds, &priors, &m).unwrap();
            // block coordinates: base[1], beta[1][0]
            let coords = [1usize, 3 + 2 + 1];
            let h = 1e-3;
            for (r, &pr) in coords.iter().enumerate() {
                for (c, &pc) in coords.iter().enumerate() {
                    let f = |dr: f64, dc: f64| {
                        let p = perturb(&perturb(&params, pr, dr), pc, dc);
                        total_loss(&model, &p, &ds, &priors).unwrap().total
                    };
                    let fd = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
                    let denom = fd.abs().max(1e-8);
                    assert!(
                        ((h_mat[(r, c)] - fd) / denom).abs() < 1e-4,
                        "H[{r},{c}] analytic {} vs fd {fd}",
                        h_mat[(r, c)]
                    );
                }
            }
        }
    }

    #[test]
    fn hessian_block_no_games_is_prior_diagonal() {
        let bt = LikelihoodModel::bradley_terry();
        let params = RatingParameters::zeros(
            vec![mid("a"), mid("b"), mid("c")],
            vec![],
            vec![FeatureSpec::task_modifier("t")],
            1000.0,
        );
        // c plays no games
        let games = vec![Game::new(mid("a"), mid("b"), Outcome::win()).unwrap()];
        let ds = Dataset::from_parts(
            games,
            vec![mid("a"), mid("b"), mid("c")],
            vec!["t".into()],
            vec![],
        )
        .unwrap();
        let priors = PriorSpec::uniform(0, 1.0, 1, 50.0).with_sigma_base(200.0);
        let h = hessian_block(&bt, &params, &ds, &priors, &mid("c")).unwrap();
        assert_relative_eq!(h[(0, 0)], 1.0 / (200.0 * 200.0), epsilon = 1e-15);
        assert_relative_eq!(h[(1, 1)], 1.0 / (50.0 * 50.0), epsilon = 1e-15);
        assert_relative_eq!(h[(0, 1)], 0.0);
    }

    #[test]
    fn hessian_scalar_head_to_head() {
        // n equal-rating head-to-head games: curvature n (ln10/400)^2 / 4
        let bt = LikelihoodModel::bradley_terry();
        let n = 12u64;
        let ds = two_model_dataset(n);
        let params = RatingParameters::zeros(vec![mid("a"), mid("b")], vec![], vec![], 1000.0);
        let priors = PriorSpec::flat(1000.0);
        let h = hessian_block(&bt, &params, &ds, &priors, &mid("a")).unwrap();
        let k = std::f64::consts::LN_10 / 400.0;
        assert_relative_eq!(h[(0, 0)], n as f64 * k * k * 0.25, epsilon = 1e-12);
    }

    #[test]
    fn accuracy_hessian_unsupported() {
        let acc = LikelihoodModel::new(LikelihoodKind::AccuracyBased, 400.0).unwrap();
        let params = RatingParameters::zeros(vec![mid("a"), mid("b")], vec![], vec![], 0.0);
        let ds = two_model_dataset(1);
        let priors = PriorSpec::flat(0.0);
        assert!(hessian_block(&acc, &params, &ds, &priors, &mid("a")).is_err());
    }

    #[test]
    fn data_term_shift_invariance_and_prior_shift_sensitivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (ds, params, priors) = random_instance(&mut rng, 200);
        let bt = LikelihoodModel::bradley_terry();
        let before = total_loss(&bt, &params, &ds, &priors).unwrap();
        let mut shifted = params.clone();
        for b in &mut shifted.base {
            *b += 137.0;
        }
        let after = total_loss(&bt, &shifted, &ds, &priors).unwrap();
        assert!(((before.data_loss - after.data_loss) / before.data_loss).abs() < 1e-12);

        // shifting a beta column changes the total when its prior is finite
        let mut beta_shift = params.clone();
        for row in &mut beta_shift.beta {
            row[0] += 30.0;
        }
        let shifted_loss = total_loss(&bt, &beta_shift, &ds, &priors).unwrap();
        assert!((shifted_loss.total - before.total).abs() > 1e-6);
    }

    #[test]
    fn midpoint_convexity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let bt = LikelihoodModel::bradley_terry();
        let (ds, p1, priors) = random_instance(&mut rng, 60);
        for _ in 0..200 {
            let (_, p2, _) = random_instance(&mut rng, 0);
            let lambda: f64 = rng.gen();
            let mut mix = p1.clone();
            for (i, b) in mix.base.iter_mut().enumerate() {
                *b = lambda * p1.base[i] + (1.0 - lambda) * p2.base[i];
            }
            for (i, a) in mix.alpha.iter_mut().enumerate() {
                *a = lambda * p1.alpha[i] + (1.0 - lambda) * p2.alpha[i];
            }
            for (m, row) in mix.beta.iter_mut().enumerate() {
                for (j, b) in row.iter_mut().enumerate() {
                    *b = lambda * p1.beta[m][j] + (1.0 - lambda) * p2.beta[m][j];
                }
            }
            let lm = total_loss(&bt, &mix, &ds, &priors).unwrap().total;
            let l1 = total_loss(&bt, &p1, &ds, &priors).unwrap().total;
            let l2 = total_loss(&bt, &p2, &ds, &priors).unwrap().total;
            assert!(lm <= lambda * l1 + (1.0 - lambda) * l2 + 1e-9);
        }
    }
}
