//! Analytic score models with closed-form noised densities.
//!
//! Every model knows its own density pushed through the variance-preserving
//! forward process: a component `N(mu, s^2 I)` observed at cumulative product
//! `bar_alpha` becomes `N(sqrt(bar_alpha) mu, bar_alpha s^2 + 1 - bar_alpha)`.
//! Passing `bar_alpha = 1` queries the un-noised data distribution.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::schedule::DiffusionSchedule;

const LOG_2PI: f64 = 1.837877066409345483560659472811_f64;

/// A score model whose gradient of the noised log-density is available in
/// closed form at every noise level.
#[derive(Debug, Clone)]
pub enum ScoreModel {
    /// Isotropic Gaussian `N(mean, var I)`.
    Gaussian { mean: Array1<f64>, var: f64 },
    /// Mixture of isotropic Gaussians.
    Mixture {
        weights: Vec<f64>,
        means: Vec<Array1<f64>>,
        vars: Vec<f64>,
    },
    /// Independent Gaussian around a nominal 2-D path: waypoint `h` is
    /// `N(nominal[h], var[h] I_2)`. The flat layout is `(x_1, y_1, ..., x_H, y_H)`.
    NominalPath { nominal: Array2<f64>, var: Array1<f64> },
}

impl ScoreModel {
    pub fn gaussian(mean: Array1<f64>, var: f64) -> Result<Self> {
        if var <= 0.0 {
            return Err(Error::Config("gaussian variance must be positive".into()));
        }
        Ok(ScoreModel::Gaussian { mean, var })
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<(Array1<f64>, f64)>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::Config("mixture needs one weight per component".into()));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Config("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture weights sum to {total}, expected 1")));
        }
        let dim = components[0].0.len();
        if components.iter().any(|(m, _)| m.len() != dim) {
            return Err(Error::Config("mixture components must share a dimension".into()));
        }
        if components.iter().any(|(_, v)| *v <= 0.0) {
            return Err(Error::Config("component variances must be positive".into()));
        }
        let (means, vars) = components.into_iter().unzip();
        Ok(ScoreModel::Mixture { weights, means, vars })
    }

    pub fn nominal_path(nominal: Array2<f64>, var: Array1<f64>) -> Result<Self> {
        if nominal.ncols() != 2 {
            return Err(Error::Config("nominal path must be H x 2".into()));
        }
        if nominal.nrows() == 0 || nominal.nrows() != var.len() {
            return Err(Error::Config("need one variance per waypoint".into()));
        }
        if var.iter().any(|&v| v <= 0.0) {
            return Err(Error::Config("waypoint variances must be positive".into()));
        }
        Ok(ScoreModel::NominalPath { nominal, var })
    }

    /// Dimensionality of the variable this model scores.
    pub fn dim(&self) -> usize {
        match self {
            ScoreModel::Gaussian { mean, .. } => mean.len(),
            ScoreModel::Mixture { means, .. } => means[0].len(),
            ScoreModel::NominalPath { nominal, .. } => 2 * nominal.nrows(),
        }
    }

    fn check_input(&self, x: ArrayView1<'_, f64>, bar_alpha: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if !(bar_alpha > 0.0 && bar_alpha <= 1.0) {
            return Err(Error::Config(format!("bar_alpha {bar_alpha} outside (0, 1]")));
        }
        Ok(())
    }

    /// Gradient of the noised log-density at `x`.
    pub fn score(&self, x: ArrayView1<'_, f64>, bar_alpha: f64) -> Result<Array1<f64>> {
        self.check_input(x, bar_alpha)?;
        Ok(match self {
            ScoreModel::Gaussian { mean, var } => {
                gaussian_score(x, mean.view(), noised_var(*var, bar_alpha), bar_alpha)
            }
            ScoreModel::Mixture { weights, means, vars } => {
                let resp = responsibilities(x, weights, means, vars, bar_alpha);
                let mut score = Array1::zeros(x.len());
                for ((r, mean), var) in resp.iter().zip(means).zip(vars) {
                    let g = gaussian_score(x, mean.view(), noised_var(*var, bar_alpha), bar_alpha);
                    score.scaled_add(*r, &g);
                }
                score
            }
            ScoreModel::NominalPath { nominal, var } => {
                let root = bar_alpha.sqrt();
                let mut score = Array1::zeros(x.len());
                for h in 0..nominal.nrows() {
                    let s2 = noised_var(var[h], bar_alpha);
                    for c in 0..2 {
                        let j = 2 * h + c;
                        score[j] = -(x[j] - root * nominal[(h, c)]) / s2;
                    }
                }
                score
            }
        })
    }

    /// Fully normalized log of the noised density at `x`.
    pub fn log_density(&self, x: ArrayView1<'_, f64>, bar_alpha: f64) -> Result<f64> {
        self.check_input(x, bar_alpha)?;
        Ok(match self {
            ScoreModel::Gaussian { mean, var } => {
                gaussian_log_density(x, mean.view(), noised_var(*var, bar_alpha), bar_alpha)
            }
            ScoreModel::Mixture { weights, means, vars } => {
                log_sum_exp(&component_log_terms(x, weights, means, vars, bar_alpha))
            }
            ScoreModel::NominalPath { nominal, var } => {
                let root = bar_alpha.sqrt();
                let mut total = 0.0;
                for h in 0..nominal.nrows() {
                    let s2 = noised_var(var[h], bar_alpha);
                    for c in 0..2 {
                        let d = x[2 * h + c] - root * nominal[(h, c)];
                        total += -0.5 * (LOG_2PI + s2.ln()) - d * d / (2.0 * s2);
                    }
                }
                total
            }
        })
    }

    /// Hessian-vector product of the noised log-density: `H(x) v`.
    ///
    /// Used by the posterior-sampling cost wrapper to chain gradients through
    /// the denoiser.
    pub fn score_hvp(
        &self,
        x: ArrayView1<'_, f64>,
        bar_alpha: f64,
        v: ArrayView1<'_, f64>,
    ) -> Result<Array1<f64>> {
        self.check_input(x, bar_alpha)?;
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(match self {
            ScoreModel::Gaussian { var, .. } => {
                let s2 = noised_var(*var, bar_alpha);
                v.mapv(|vj| -vj / s2)
            }
            ScoreModel::Mixture { weights, means, vars } => {
                let resp = responsibilities(x, weights, means, vars, bar_alpha);
                let score = self.score(x, bar_alpha)?;
                let mut out = Array1::zeros(x.len());
                for ((r, mean), var) in resp.iter().zip(means).zip(vars) {
                    let s2 = noised_var(*var, bar_alpha);
                    let g = gaussian_score(x, mean.view(), s2, bar_alpha);
                    let gv = g.dot(&v);
                    // r * (-v / s2 + g (g . v))
                    out.scaled_add(-r / s2, &v.to_owned());
                    out.scaled_add(r * gv, &g);
                }
                let sv = score.dot(&v);
                out.scaled_add(-sv, &score);
                out
            }
            ScoreModel::NominalPath { nominal, var } => {
                let mut out = Array1::zeros(x.len());
                for h in 0..nominal.nrows() {
                    let s2 = noised_var(var[h], bar_alpha);
                    for c in 0..2 {
                        let j = 2 * h + c;
                        out[j] = -v[j] / s2;
                    }
                }
                out
            }
        })
    }
}

fn noised_var(var: f64, bar_alpha: f64) -> f64 {
    bar_alpha * var + (1.0 - bar_alpha)
}

fn gaussian_score(
    x: ArrayView1<'_, f64>,
    mean: ArrayView1<'_, f64>,
    noised_var: f64,
    bar_alpha: f64,
) -> Array1<f64> {
    let root = bar_alpha.sqrt();
    let mut g = Array1::zeros(x.len());
    for j in 0..x.len() {
        g[j] = -(x[j] - root * mean[j]) / noised_var;
    }
    g
}

fn gaussian_log_density(
    x: ArrayView1<'_, f64>,
    mean: ArrayView1<'_, f64>,
    noised_var: f64,
    bar_alpha: f64,
) -> f64 {
    let root = bar_alpha.sqrt();
    let dim = x.len() as f64;
    let mut quad = 0.0;
    for j in 0..x.len() {
        let d = x[j] - root * mean[j];
        quad += d * d;
    }
    -0.5 * dim * (LOG_2PI + noised_var.ln()) - quad / (2.0 * noised_var)
}

fn component_log_terms(
    x: ArrayView1<'_, f64>,
    weights: &[f64],
    means: &[Array1<f64>],
    vars: &[f64],
    bar_alpha: f64,
) -> Vec<f64> {
    weights
        .iter()
        .zip(means)
        .zip(vars)
        .map(|((w, m), v)| {
            w.ln() + gaussian_log_density(x, m.view(), noised_var(*v, bar_alpha), bar_alpha)
        })
        .collect()
}

fn responsibilities(
    x: ArrayView1<'_, f64>,
    weights: &[f64],
    means: &[Array1<f64>],
    vars: &[f64],
    bar_alpha: f64,
) -> Vec<f64> {
    let terms = component_log_terms(x, weights, means, vars, bar_alpha);
    let lse = log_sum_exp(&terms);
    terms.iter().map(|t| (t - lse).exp()).collect()
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Tweedie posterior-mean denoiser: `(x + (1 - bar_alpha_t) * score) / sqrt(bar_alpha_t)`.
///
/// With `bar_alpha_t = 1` this is the identity, returned without touching the
/// score so zero-noise configurations reproduce their inputs bit for bit.
pub fn tweedie_denoise(
    schedule: &DiffusionSchedule,
    score: ArrayView1<'_, f64>,
    x: ArrayView1<'_, f64>,
    t: usize,
) -> Result<Array1<f64>> {
    let bar_alpha = schedule.bar_alpha(t)?;
    if x.len() != score.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: score.len() });
    }
    if bar_alpha == 1.0 {
        return Ok(x.to_owned());
    }
    let root = bar_alpha.sqrt();
    let residual_var = 1.0 - bar_alpha;
    Ok(Array1::from_iter(
        x.iter().zip(score.iter()).map(|(&xj, &sj)| (xj + residual_var * sj) / root),
    ))
}
