//! Differentiable coupling costs and their exact per-variable gradients.
//!
//! A coupling cost takes the current iterates of all coupled variables and
//! returns a scalar value together with one gradient per variable. Costs are
//! queried with the noise level of the current sampler step; plain costs
//! ignore it, while [`PsWrappedCost`] uses it to denoise its arguments first.

use std::sync::Arc;

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::schedule::{DiffusionSchedule, NoiseLevel};
use crate::score::{tweedie_denoise, ScoreModel};
use crate::sdf::SdfScene;

/// Value and per-variable gradients of a coupling cost.
#[derive(Debug, Clone)]
pub struct CostEval {
    pub value: f64,
    pub grads: Vec<Array1<f64>>,
}

/// A differentiable cost over N coupled variables.
pub trait CouplingCost: Send + Sync {
    fn evaluate(&self, vars: &[ArrayView1<'_, f64>], level: NoiseLevel) -> Result<CostEval>;
}

/// Shared handle to a coupling cost.
pub type DynCost = Arc<dyn CouplingCost>;

fn expect_pair<'a, 'b>(
    vars: &'b [ArrayView1<'a, f64>],
) -> Result<(&'b ArrayView1<'a, f64>, &'b ArrayView1<'a, f64>)> {
    if vars.len() != 2 {
        return Err(Error::Config(format!("pairwise cost got {} variables", vars.len())));
    }
    Ok((&vars[0], &vars[1]))
}

fn waypoint_count(len_a: usize, len_b: usize, point_dim: usize) -> Result<usize> {
    if len_a != len_b {
        return Err(Error::DimensionMismatch { expected: len_a, got: len_b });
    }
    if point_dim == 0 || len_a % point_dim != 0 || len_a == 0 {
        return Err(Error::Config(format!(
            "variable length {len_a} is not a positive multiple of point dimension {point_dim}"
        )));
    }
    Ok(len_a / point_dim)
}

/// `-sum_h log(|X_h - Y_h| + offset)`, a smooth repulsive barrier.
#[derive(Debug, Clone)]
pub struct LogBarrierCost {
    pub offset: f64,
    pub point_dim: usize,
}

impl LogBarrierCost {
    pub fn new(offset: f64, point_dim: usize) -> Result<Self> {
        if offset <= 0.0 {
            return Err(Error::Config("log-barrier offset must be positive".into()));
        }
        Ok(Self { offset, point_dim })
    }
}

impl CouplingCost for LogBarrierCost {
    fn evaluate(&self, vars: &[ArrayView1<'_, f64>], _level: NoiseLevel) -> Result<CostEval> {
        let (x, y) = expect_pair(vars)?;
        let horizon = waypoint_count(x.len(), y.len(), self.point_dim)?;
        let d = self.point_dim;
        let mut value = 0.0;
        let mut gx = Array1::zeros(x.len());
        let mut gy = Array1::zeros(y.len());
        for h in 0..horizon {
            let span = h * d..(h + 1) * d;
            let mut r2 = 0.0;
            for j in span.clone() {
                let diff = x[j] - y[j];
                r2 += diff * diff;
            }
            let r = r2.sqrt();
            value -= (r + self.offset).ln();
            // Subgradient 0 at coincident waypoints.
            if r > 0.0 {
                let scale = -1.0 / ((r + self.offset) * r);
                for j in span {
                    let diff = x[j] - y[j];
                    gx[j] = scale * diff;
                    gy[j] = -scale * diff;
                }
            }
        }
        Ok(CostEval { value, grads: vec![gx, gy] })
    }
}

/// Squared hinge on inter-waypoint distance: `sum_h 1[r_h <= range] (r_h - range)^2`.
#[derive(Debug, Clone)]
pub struct SquaredHingeCost {
    pub range: f64,
    pub point_dim: usize,
}

impl SquaredHingeCost {
    pub fn new(range: f64, point_dim: usize) -> Result<Self> {
        if range <= 0.0 {
            return Err(Error::Config("hinge range must be positive".into()));
        }
        Ok(Self { range, point_dim })
    }
}

impl CouplingCost for SquaredHingeCost {
    fn evaluate(&self, vars: &[ArrayView1<'_, f64>], _level: NoiseLevel) -> Result<CostEval> {
        let (x, y) = expect_pair(vars)?;
        let horizon = waypoint_count(x.len(), y.len(), self.point_dim)?;
        let d = self.point_dim;
        let mut value = 0.0;
        let mut gx = Array1::zeros(x.len());
        let mut gy = Array1::zeros(y.len());
        for h in 0..horizon {
            let span = h * d..(h + 1) * d;
            let mut r2 = 0.0;
            for j in span.clone() {
                let diff = x[j] - y[j];
                r2 += diff * diff;
            }
            let r = r2.sqrt();
            if r <= self.range {
                let gap = r - self.range;
                value += gap * gap;
                if r > 0.0 {
                    let scale = 2.0 * gap / r;
                    for j in span {
                        let diff = x[j] - y[j];
                        gx[j] = scale * diff;
                        gy[j] = -scale * diff;
                    }
                }
            }
        }
        Ok(CostEval { value, grads: vec![gx, gy] })
    }
}

/// `-log(cos angle(X, Y) + floor)` on flattened vectors; larger angles are
/// cheaper, which pushes a pair of samples apart in direction.
#[derive(Debug, Clone)]
pub struct DppCosineCost {
    pub floor: f64,
}

impl DppCosineCost {
    pub fn new(floor: f64) -> Result<Self> {
        if floor <= 0.0 {
            return Err(Error::Config("cosine floor must be positive".into()));
        }
        Ok(Self { floor })
    }
}

impl CouplingCost for DppCosineCost {
    fn evaluate(&self, vars: &[ArrayView1<'_, f64>], _level: NoiseLevel) -> Result<CostEval> {
        let (x, y) = expect_pair(vars)?;
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        let nx = x.dot(x).sqrt();
        let ny = y.dot(y).sqrt();
        if nx == 0.0 || ny == 0.0 {
            return Err(Error::DegenerateInput("cosine cost needs nonzero vectors".into()));
        }
        let inner = x.dot(y);
        let cos = inner / (nx * ny);
        let denom = cos + self.floor;
        if denom <= 0.0 {
            return Err(Error::DegenerateInput(format!(
                "cos + floor = {denom} is not positive; increase the floor"
            )));
        }
        let value = -denom.ln();
        let scale = -1.0 / denom;
        // d cos / dx = y / (|x||y|) - cos x / |x|^2, and symmetrically for y.
        let mut gx = Array1::zeros(x.len());
        let mut gy = Array1::zeros(y.len());
        for j in 0..x.len() {
            gx[j] = scale * (y[j] / (nx * ny) - cos * x[j] / (nx * nx));
            gy[j] = scale * (x[j] / (nx * ny) - cos * y[j] / (ny * ny));
        }
        Ok(CostEval { value, grads: vec![gx, gy] })
    }
}

/// A differentiable two-class probability map.
pub trait Classifier: Send + Sync {
    /// Probability of the first class and its gradient at `x`.
    fn prob_and_grad(&self, x: ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)>;
}

/// Logistic regression on the flattened sample: `p = sigmoid(w . x + b)`.
#[derive(Debug, Clone)]
pub struct AffineLogisticClassifier {
    pub weights: Array1<f64>,
    pub bias: f64,
}

impl Classifier for AffineLogisticClassifier {
    fn prob_and_grad(&self, x: ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch { expected: self.weights.len(), got: x.len() });
        }
        let z = self.weights.dot(&x) + self.bias;
        let p = 1.0 / (1.0 + (-z).exp());
        Ok((p, self.weights.mapv(|w| w * p * (1.0 - p))))
    }
}

/// Exclusive-or contrast between class assignments of a pair: with
/// `q = p(class | x)` and `r = p(class | y)`, the cost is
/// `-2 (q (1 - r) + r (1 - q))`, minimized when the pair is confidently
/// assigned to opposite classes.
#[derive(Clone)]
pub struct XorCost {
    pub classifier: Arc<dyn Classifier>,
}

impl CouplingCost for XorCost {
    fn evaluate(&self, vars: &[ArrayView1<'_, f64>], _level: NoiseLevel) -> Result<CostEval> {
        let (x, y) = expect_pair(vars)?;
        let (q, dq) = self.classifier.prob_and_grad(*x)?;
        let (r, dr) = self.classifier.prob_and_grad(*y)?;
        // Both classes contribute the same term, hence the factor 2.
        let value = -2.0 * (q * (1.0 - r) + r * (1.0 - q));
        let gx = dq.mapv(|g| -2.0 * (1.0 - 2.0 * r) * g);
        let gy = dr.mapv(|g| -2.0 * (1.0 - 2.0 * q) * g);
        Ok(CostEval { value, grads: vec![gx, gy] })
    }
}

/// Hinge on signed distance to static obstacles, summed over every waypoint
/// of every variable: `sum_h sum_i 1[phi <= margin] (margin - phi)`.
#[derive(Debug, Clone)]
pub struct ObstacleCost {
    pub scene: SdfScene,
    pub margin: f64,
}

impl ObstacleCost {
    pub fn new(scene: SdfScene, margin: f64) -> Result<Self> {
        if margin <= 0.0 {
            return Err(Error::Config("obstacle margin must be positive".into()));
        }
        Ok(Self { scene, margin })
    }
}

impl CouplingCost for ObstacleCost {
    fn evaluate(&self, vars: &[ArrayView1<'_, f64>], _level: NoiseLevel) -> Result<CostEval> {
        let mut value = 0.0;
        let mut grads = Vec::with_capacity(vars.len());
        for x in vars {
            if x.len() % 2 != 0 || x.is_empty() {
                return Err(Error::Config("obstacle cost expects flattened H x 2 points".into()));
            }
            let mut g = Array1::zeros(x.len());
            for h in 0..x.len() / 2 {
                let p = [x[2 * h], x[2 * h + 1]];
                let (phi, dphi) = self.scene.distance_and_gradient(p);
                if phi <= self.margin {
                    value += self.margin - phi;
                    g[2 * h] -= dphi[0];
                    g[2 * h + 1] -= dphi[1];
                }
            }
            grads.push(g);
        }
        Ok(CostEval { value, grads })
    }
}

/// Negative log-likelihood of a Gaussian observation model `y ~ N(x, var I)`
/// viewed as a two-variable cost. With the second variable pinned to an
/// observation, its gradient steers the first toward the Bayesian posterior.
#[derive(Debug, Clone)]
pub struct GaussianLikelihoodCost {
    pub observation_var: f64,
}

impl CouplingCost for GaussianLikelihoodCost {
    fn evaluate(&self, vars: &[ArrayView1<'_, f64>], _level: NoiseLevel) -> Result<CostEval> {
        let (x, y) = expect_pair(vars)?;
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        let var = self.observation_var;
        let dim = x.len() as f64;
        let mut quad = 0.0;
        let mut gx = Array1::zeros(x.len());
        let mut gy = Array1::zeros(y.len());
        for j in 0..x.len() {
            let d = x[j] - y[j];
            quad += d * d;
            gx[j] = d / var;
            gy[j] = -d / var;
        }
        let value = 0.5 * dim * (LOG_2PI_LIKELIHOOD + var.ln()) + quad / (2.0 * var);
        Ok(CostEval { value, grads: vec![gx, gy] })
    }
}

const LOG_2PI_LIKELIHOOD: f64 = 1.837877066409345483560659472811_f64;

/// Linear combination of costs sharing the same variables.
#[derive(Clone)]
pub struct WeightedSumCost {
    pub terms: Vec<(f64, DynCost)>,
}

impl CouplingCost for WeightedSumCost {
    fn evaluate(&self, vars: &[ArrayView1<'_, f64>], level: NoiseLevel) -> Result<CostEval> {
        let mut value = 0.0;
        let mut grads: Vec<Array1<f64>> =
            vars.iter().map(|v| Array1::zeros(v.len())).collect();
        for (weight, term) in &self.terms {
            let eval = term.evaluate(vars, level)?;
            value += weight * eval.value;
            for (acc, g) in grads.iter_mut().zip(eval.grads) {
                acc.scaled_add(*weight, &g);
            }
        }
        Ok(CostEval { value, grads })
    }
}

/// Extends a pairwise cost to N variables by summing over all pairs `i < j`.
#[derive(Clone)]
pub struct PairwiseSumCost {
    pub base: DynCost,
}

impl CouplingCost for PairwiseSumCost {
    fn evaluate(&self, vars: &[ArrayView1<'_, f64>], level: NoiseLevel) -> Result<CostEval> {
        if vars.len() < 2 {
            return Err(Error::Config("pairwise sum needs at least two variables".into()));
        }
        let mut value = 0.0;
        let mut grads: Vec<Array1<f64>> =
            vars.iter().map(|v| Array1::zeros(v.len())).collect();
        for i in 0..vars.len() {
            for j in i + 1..vars.len() {
                let eval = self.base.evaluate(&[vars[i], vars[j]], level)?;
                value += eval.value;
                let mut it = eval.grads.into_iter();
                let gi = it.next().expect("pair gradient");
                let gj = it.next().expect("pair gradient");
                grads[i] += &gi;
                grads[j] += &gj;
            }
        }
        Ok(CostEval { value, grads })
    }
}

/// Posterior-sampling variant of a base cost: arguments are first denoised
/// with Tweedie's formula at the queried step, and gradients chain back
/// through the denoiser via the analytic score Jacobian.
#[derive(Clone)]
pub struct PsWrappedCost {
    base: DynCost,
    models: Vec<ScoreModel>,
    schedule: DiffusionSchedule,
    chain_rule: bool,
}

impl PsWrappedCost {
    /// Wraps `base`; `models` must follow the sampler's variable order.
    pub fn new(base: DynCost, models: Vec<ScoreModel>, schedule: DiffusionSchedule) -> Self {
        Self { base, models, schedule, chain_rule: true }
    }

    /// Treats the denoised points as constants when differentiating, instead
    /// of chaining through the denoiser.
    pub fn with_stopped_gradient(mut self) -> Self {
        self.chain_rule = false;
        self
    }
}

impl CouplingCost for PsWrappedCost {
    fn evaluate(&self, vars: &[ArrayView1<'_, f64>], level: NoiseLevel) -> Result<CostEval> {
        if vars.len() != self.models.len() {
            return Err(Error::Config(format!(
                "posterior-sampling wrapper built for {} variables, got {}",
                self.models.len(),
                vars.len()
            )));
        }
        let t = match level {
            NoiseLevel::Data => return self.base.evaluate(vars, NoiseLevel::Data),
            NoiseLevel::Step(t) => t,
        };
        let bar_alpha = self.schedule.bar_alpha(t)?;
        if bar_alpha == 1.0 {
            return self.base.evaluate(vars, NoiseLevel::Data);
        }
        let mut scores = Vec::with_capacity(vars.len());
        let mut denoised = Vec::with_capacity(vars.len());
        for (x, model) in vars.iter().zip(&self.models) {
            let s = model.score(*x, bar_alpha)?;
            denoised.push(tweedie_denoise(&self.schedule, s.view(), *x, t)?);
            scores.push(s);
        }
        let denoised_views: Vec<ArrayView1<'_, f64>> = denoised.iter().map(|d| d.view()).collect();
        let base_eval = self.base.evaluate(&denoised_views, NoiseLevel::Data)?;
        if !self.chain_rule {
            return Ok(base_eval);
        }
        let root = bar_alpha.sqrt();
        let residual_var = 1.0 - bar_alpha;
        let mut grads = Vec::with_capacity(vars.len());
        for ((x, model), g) in vars.iter().zip(&self.models).zip(base_eval.grads) {
            // d x0_hat / d x_t = (I + (1 - bar_alpha) H) / sqrt(bar_alpha).
            let hv = model.score_hvp(*x, bar_alpha, g.view())?;
            let mut chained = g;
            chained.scaled_add(residual_var, &hv);
            chained.mapv_inplace(|v| v / root);
            grads.push(chained);
        }
        Ok(CostEval { value: base_eval.value, grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;
    use crate::sdf::Circle;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn views<'a>(vars: &'a [Array1<f64>]) -> Vec<ArrayView1<'a, f64>> {
        vars.iter().map(|v| v.view()).collect()
    }

    /// Finite-difference check of every per-variable gradient.
    fn check_pair_gradients(cost: &dyn CouplingCost, x: Array1<f64>, y: Array1<f64>, tol: f64) {
        let eval = cost.evaluate(&[x.view(), y.view()], NoiseLevel::Data).unwrap();
        for (idx, point) in [x.clone(), y.clone()].into_iter().enumerate() {
            let other = if idx == 0 { y.clone() } else { x.clone() };
            let f = |p: ArrayView1<'_, f64>| {
                let pair = if idx == 0 {
                    vec![p.to_owned(), other.clone()]
                } else {
                    vec![other.clone(), p.to_owned()]
                };
                cost.evaluate(&views(&pair), NoiseLevel::Data).unwrap().value
            };
            let err =
                gradcheck::max_relative_error(f, point.view(), eval.grads[idx].view(), 1e-6);
            assert!(err < tol, "variable {idx}: relative error {err}");
        }
    }

    #[test]
    fn log_barrier_direct_value() {
        let cost = LogBarrierCost::new(0.5, 2).unwrap();
        let eval = cost
            .evaluate(&[array![0.0, 0.0].view(), array![1.0, 0.0].view()], NoiseLevel::Data)
            .unwrap();
        assert_abs_diff_eq!(eval.value, -(1.5_f64.ln()), epsilon = 1e-15);
    }

    #[test]
    fn log_barrier_coincident_waypoints() {
        let cost = LogBarrierCost::new(1.0, 2).unwrap();
        let x = array![0.3, -0.2, 1.0, 2.0];
        let eval = cost.evaluate(&[x.view(), x.view()], NoiseLevel::Data).unwrap();
        assert_eq!(eval.value, 0.0);
        assert!(eval.grads.iter().all(|g| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn log_barrier_gradients_match_finite_differences() {
        let cost = LogBarrierCost::new(0.7, 2).unwrap();
        check_pair_gradients(
            &cost,
            array![0.1, -0.4, 1.2, 0.8, -0.6, 0.0],
            array![1.0, 0.3, -0.5, 0.2, 0.4, -1.1],
            1e-5,
        );
    }

    #[test]
    fn squared_hinge_values_and_inactivity() {
        let cost = SquaredHingeCost::new(2.0, 2).unwrap();
        let eval = cost
            .evaluate(&[array![0.0, 0.0].view(), array![1.0, 0.0].view()], NoiseLevel::Data)
            .unwrap();
        assert_abs_diff_eq!(eval.value, 1.0, epsilon = 1e-15);

        // Far apart: hinge inactive everywhere.
        let eval = cost
            .evaluate(&[array![0.0, 0.0].view(), array![10.0, 0.0].view()], NoiseLevel::Data)
            .unwrap();
        assert_eq!(eval.value, 0.0);
        assert!(eval.grads[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn squared_hinge_gradient_inside_the_active_range() {
        let cost = SquaredHingeCost::new(2.0, 2).unwrap();
        check_pair_gradients(&cost, array![0.0, 0.1], array![1.2, -0.3], 1e-5);
    }

    #[test]
    fn scalar_point_dimension_for_corridor_blocks() {
        let cost = SquaredHingeCost::new(4.0, 1).unwrap();
        let eval =
            cost.evaluate(&[array![3.0].view(), array![6.0].view()], NoiseLevel::Data).unwrap();
        assert_abs_diff_eq!(eval.value, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn dpp_cosine_values() {
        let cost = DppCosineCost::new(1e-6).unwrap();
        let x = array![1.0, 2.0];
        let eval = cost.evaluate(&[x.view(), x.view()], NoiseLevel::Data).unwrap();
        assert_abs_diff_eq!(eval.value, -(1.0 + 1e-6_f64).ln(), epsilon = 1e-12);

        let eval = cost
            .evaluate(&[array![1.0, 0.0].view(), array![0.0, 1.0].view()], NoiseLevel::Data)
            .unwrap();
        assert_abs_diff_eq!(eval.value, -(1e-6_f64.ln()), epsilon = 1e-9);

        assert!(cost
            .evaluate(&[array![0.0, 0.0].view(), array![0.0, 1.0].view()], NoiseLevel::Data)
            .is_err());
    }

    #[test]
    fn dpp_gradients_and_scale_invariance() {
        let cost = DppCosineCost::new(1e-3).unwrap();
        let x = array![0.8, -0.3, 1.1];
        let y = array![0.9, 0.1, 0.7];
        check_pair_gradients(&cost, x.clone(), y.clone(), 1e-5);
        let a = cost.evaluate(&[x.view(), y.view()], NoiseLevel::Data).unwrap().value;
        let xs = x.mapv(|v| 3.0 * v);
        let ys = y.mapv(|v| 0.25 * v);
        let b = cost.evaluate(&[xs.view(), ys.view()], NoiseLevel::Data).unwrap().value;
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn xor_cost_hand_values() {
        // A steep logistic makes near-deterministic assignments.
        let clf = Arc::new(AffineLogisticClassifier { weights: array![60.0], bias: 0.0 });
        let cost = XorCost { classifier: clf.clone() };
        // Complementary classes.
        let eval =
            cost.evaluate(&[array![1.0].view(), array![-1.0].view()], NoiseLevel::Data).unwrap();
        assert_abs_diff_eq!(eval.value, -2.0, epsilon = 1e-9);
        // Both maximally uncertain.
        let eval =
            cost.evaluate(&[array![0.0].view(), array![0.0].view()], NoiseLevel::Data).unwrap();
        assert_abs_diff_eq!(eval.value, -1.0, epsilon = 1e-12);
        // Identical confident assignments: the maximum, zero.
        let eval =
            cost.evaluate(&[array![1.0].view(), array![1.0].view()], NoiseLevel::Data).unwrap();
        assert_abs_diff_eq!(eval.value, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn xor_gradients_match_finite_differences() {
        let clf = Arc::new(AffineLogisticClassifier { weights: array![1.3, -0.8], bias: 0.2 });
        let cost = XorCost { classifier: clf };
        check_pair_gradients(&cost, array![0.4, -0.1], array![-0.6, 0.9], 1e-5);
    }

    #[test]
    fn obstacle_cost_values() {
        let scene = SdfScene::new(vec![Circle { center: [0.0, 0.0], radius: 1.0 }]);
        let cost = ObstacleCost::new(scene, 1.0).unwrap();
        // Far away: inactive.
        let eval = cost.evaluate(&[array![5.0, 5.0].view()], NoiseLevel::Data).unwrap();
        assert_eq!(eval.value, 0.0);
        // phi = 0.5 inside the margin.
        let eval = cost.evaluate(&[array![1.5, 0.0].view()], NoiseLevel::Data).unwrap();
        assert_abs_diff_eq!(eval.value, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn obstacle_gradients_match_finite_differences() {
        let scene = SdfScene::new(vec![Circle { center: [0.0, 0.0], radius: 1.0 }]);
        let cost = ObstacleCost::new(scene, 1.0).unwrap();
        let x = array![1.4, 0.3, 0.1, 1.6];
        let eval = cost.evaluate(&[x.view()], NoiseLevel::Data).unwrap();
        let f = |p: ArrayView1<'_, f64>| {
            cost.evaluate(&[p], NoiseLevel::Data).unwrap().value
        };
        let err = gradcheck::max_relative_error(f, x.view(), eval.grads[0].view(), 1e-6);
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn pairwise_sum_reduces_to_base_and_matches_enumeration() {
        let base: DynCost = Arc::new(SquaredHingeCost::new(2.0, 2).unwrap());
        let pairwise = PairwiseSumCost { base: base.clone() };
        let x = array![0.0, 0.0];
        let y = array![1.0, 0.5];
        let z = array![-0.4, 0.8];

        let direct = base.evaluate(&[x.view(), y.view()], NoiseLevel::Data).unwrap();
        let viasum = pairwise.evaluate(&[x.view(), y.view()], NoiseLevel::Data).unwrap();
        assert_eq!(direct.value, viasum.value);
        assert_eq!(direct.grads[0], viasum.grads[0]);

        // Three variables: explicit three-term sum.
        let total = pairwise
            .evaluate(&[x.view(), y.view(), z.view()], NoiseLevel::Data)
            .unwrap();
        let mut expected = 0.0;
        for (a, b) in [(&x, &y), (&x, &z), (&y, &z)] {
            expected += base.evaluate(&[a.view(), b.view()], NoiseLevel::Data).unwrap().value;
        }
        assert_abs_diff_eq!(total.value, expected, epsilon = 1e-15);

        assert!(pairwise.evaluate(&[x.view()], NoiseLevel::Data).is_err());
    }

    #[test]
    fn pairwise_sum_inactive_for_distant_triples() {
        let base: DynCost = Arc::new(SquaredHingeCost::new(1.0, 2).unwrap());
        let pairwise = PairwiseSumCost { base };
        let a = array![0.0, 0.0];
        let b = array![10.0, 0.0];
        let c = array![0.0, 10.0];
        let eval = pairwise.evaluate(&[a.view(), b.view(), c.view()], NoiseLevel::Data).unwrap();
        assert_eq!(eval.value, 0.0);
    }

    /// Squared Euclidean distance between a pair, used to exercise the
    /// posterior-sampling wrapper against the conjugate-Gaussian identity.
    struct SquaredDistanceCost;

    impl CouplingCost for SquaredDistanceCost {
        fn evaluate(&self, vars: &[ArrayView1<'_, f64>], _level: NoiseLevel) -> Result<CostEval> {
            let (x, y) = expect_pair(vars)?;
            let mut value = 0.0;
            let mut gx = Array1::zeros(x.len());
            let mut gy = Array1::zeros(y.len());
            for j in 0..x.len() {
                let d = x[j] - y[j];
                value += d * d;
                gx[j] = 2.0 * d;
                gy[j] = -2.0 * d;
            }
            Ok(CostEval { value, grads: vec![gx, gy] })
        }
    }

    #[test]
    fn ps_wrapper_is_identity_at_zero_noise() {
        let base: DynCost = Arc::new(SquaredDistanceCost);
        let models = vec![
            ScoreModel::gaussian(array![0.0], 1.0).unwrap(),
            ScoreModel::gaussian(array![0.0], 1.0).unwrap(),
        ];
        let schedule = DiffusionSchedule::nearly_noiseless(4);
        let ps = PsWrappedCost::new(base.clone(), models, schedule);
        let x = array![0.7];
        let y = array![-0.4];
        let plain = base.evaluate(&[x.view(), y.view()], NoiseLevel::Data).unwrap();
        let wrapped = ps.evaluate(&[x.view(), y.view()], NoiseLevel::Step(2)).unwrap();
        assert_eq!(plain.value, wrapped.value);
        assert_eq!(plain.grads[0], wrapped.grads[0]);
    }

    #[test]
    fn ps_wrapper_value_equals_base_at_posterior_means() {
        let base: DynCost = Arc::new(SquaredDistanceCost);
        let mx = ScoreModel::gaussian(array![2.0], 0.5).unwrap();
        let my = ScoreModel::gaussian(array![-1.0], 2.0).unwrap();
        let schedule = DiffusionSchedule::from_betas(vec![0.3, 0.4]).unwrap();
        let t = 2;
        let bar_alpha = schedule.bar_alpha(t).unwrap();
        let ps = PsWrappedCost::new(base.clone(), vec![mx.clone(), my.clone()], schedule.clone());
        let x = array![0.9];
        let y = array![0.2];
        let wrapped = ps.evaluate(&[x.view(), y.view()], NoiseLevel::Step(t)).unwrap();

        let posterior_mean = |mu: f64, var: f64, xt: f64| {
            let noised = bar_alpha * var + 1.0 - bar_alpha;
            (bar_alpha.sqrt() * var * xt + (1.0 - bar_alpha) * mu) / noised
        };
        let x0 = posterior_mean(2.0, 0.5, x[0]);
        let y0 = posterior_mean(-1.0, 2.0, y[0]);
        let expected = (x0 - y0) * (x0 - y0);
        assert_abs_diff_eq!(wrapped.value, expected, epsilon = 1e-12);
    }

    #[test]
    fn ps_wrapper_gradient_matches_finite_differences_of_composition() {
        let base: DynCost = Arc::new(SquaredDistanceCost);
        let models = vec![
            ScoreModel::mixture(
                vec![0.4, 0.6],
                vec![(array![-1.0, 0.2], 0.8), (array![1.5, -0.7], 1.3)],
            )
            .unwrap(),
            ScoreModel::gaussian(array![0.5, 0.5], 0.9).unwrap(),
        ];
        let schedule = DiffusionSchedule::linear(5, 0.05, 0.4).unwrap();
        let ps = PsWrappedCost::new(base, models, schedule);
        let x = array![0.3, -0.8];
        let y = array![-0.2, 0.6];
        let level = NoiseLevel::Step(3);
        let eval = ps.evaluate(&[x.view(), y.view()], level).unwrap();

        let fx = |p: ArrayView1<'_, f64>| {
            let p = p.to_owned();
            ps.evaluate(&[p.view(), y.view()], level).unwrap().value
        };
        let err = gradcheck::max_relative_error(fx, x.view(), eval.grads[0].view(), 1e-6);
        assert!(err < 1e-5, "x gradient error {err}");

        let fy = |p: ArrayView1<'_, f64>| {
            let p = p.to_owned();
            ps.evaluate(&[x.view(), p.view()], level).unwrap().value
        };
        let err = gradcheck::max_relative_error(fy, y.view(), eval.grads[1].view(), 1e-6);
        assert!(err < 1e-5, "y gradient error {err}");
    }

    #[test]
    fn ps_wrapper_stop_gradient_mode_returns_base_gradients() {
        let base: DynCost = Arc::new(SquaredDistanceCost);
        let models = vec![
            ScoreModel::gaussian(array![1.0], 0.5).unwrap(),
            ScoreModel::gaussian(array![-1.0], 0.5).unwrap(),
        ];
        let schedule = DiffusionSchedule::from_betas(vec![0.4]).unwrap();
        let chained =
            PsWrappedCost::new(base.clone(), models.clone(), schedule.clone());
        let stopped = PsWrappedCost::new(base, models, schedule).with_stopped_gradient();
        let x = array![0.6];
        let y = array![-0.3];
        let a = chained.evaluate(&[x.view(), y.view()], NoiseLevel::Step(1)).unwrap();
        let b = stopped.evaluate(&[x.view(), y.view()], NoiseLevel::Step(1)).unwrap();
        assert_eq!(a.value, b.value);
        assert_ne!(a.grads[0], b.grads[0]);
    }
}
