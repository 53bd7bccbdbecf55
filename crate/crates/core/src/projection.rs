//! Hard-constraint projection operators applied at every diffusion step.
//!
//! Closed-form operators (identity, singleton, box, ball) project exactly.
//! The velocity-chain operator solves the trajectory projection QP with a
//! batched ADMM scheme; the convex-hull operator runs exponentiated-gradient
//! mirror descent over simplex weights.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Result of applying a projection operator.
#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub point: Array1<f64>,
    /// `false` only when an iterative solver hit its iteration cap before
    /// reaching its residual tolerance. The returned point is still the last
    /// iterate (and for the velocity chain, still hard-feasible).
    pub converged: bool,
}

impl ProjectionOutcome {
    fn exact(point: Array1<f64>) -> Self {
        Self { point, converged: true }
    }
}

/// A Euclidean projection operator onto a constraint set.
#[derive(Debug, Clone)]
pub enum Projection {
    Identity,
    Singleton(Array1<f64>),
    BoxBounds { lower: Array1<f64>, upper: Array1<f64> },
    Ball { center: Array1<f64>, radius: f64 },
    VelocityChain(VelocityChainProjection),
    ConvexHull(ConvexHullProjection),
}

impl Projection {
    pub fn box_bounds(lower: Array1<f64>, upper: Array1<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
            return Err(Error::Config("box lower bound exceeds upper bound".into()));
        }
        Ok(Projection::BoxBounds { lower, upper })
    }

    pub fn ball(center: Array1<f64>, radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::Config("ball radius must be positive".into()));
        }
        Ok(Projection::Ball { center, radius })
    }

    pub fn project(&self, x: ArrayView1<'_, f64>) -> Result<ProjectionOutcome> {
        match self {
            Projection::Identity => Ok(ProjectionOutcome::exact(x.to_owned())),
            Projection::Singleton(point) => {
                if point.len() != x.len() {
                    return Err(Error::DimensionMismatch { expected: point.len(), got: x.len() });
                }
                Ok(ProjectionOutcome::exact(point.clone()))
            }
            Projection::BoxBounds { lower, upper } => {
                if lower.len() != x.len() {
                    return Err(Error::DimensionMismatch { expected: lower.len(), got: x.len() });
                }
                let clamped = Array1::from_iter(
                    x.iter()
                        .zip(lower.iter().zip(upper.iter()))
                        .map(|(&v, (&l, &u))| v.clamp(l, u)),
                );
                Ok(ProjectionOutcome::exact(clamped))
            }
            Projection::Ball { center, radius } => {
                if center.len() != x.len() {
                    return Err(Error::DimensionMismatch { expected: center.len(), got: x.len() });
                }
                let offset = &x - center;
                let norm = offset.dot(&offset).sqrt();
                if norm <= *radius {
                    Ok(ProjectionOutcome::exact(x.to_owned()))
                } else {
                    let scale = radius / norm;
                    Ok(ProjectionOutcome::exact(center + &offset.mapv(|v| v * scale)))
                }
            }
            Projection::VelocityChain(op) => op.project_flat(x),
            Projection::ConvexHull(op) => {
                let (point, _) = op.project_with_weights(x)?;
                Ok(ProjectionOutcome::exact(point))
            }
        }
    }
}

/// ADMM parameters for the velocity-chain projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmParams {
    /// Penalty parameter.
    pub xi: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Residual tolerance (Frobenius norm, per trajectory).
    pub tolerance: f64,
}

impl AdmmParams {
    /// Defaults used by the navigation scenarios.
    pub fn navigation() -> Self {
        Self { xi: 10.0, max_iters: 700, tolerance: 2e-5 }
    }

    /// Defaults used by the manipulation-style setting.
    pub fn manipulation() -> Self {
        Self { xi: 6.0, max_iters: 250, tolerance: 2e-5 }
    }
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self::navigation()
    }
}

/// LDL^T factorization of the tridiagonal system matrix `2 I + xi A^T A`,
/// where `A` is the forward-difference chain matrix. Shared across ADMM
/// iterations and across a batch; cached per horizon since `xi` is fixed for
/// an operator.
#[derive(Debug)]
struct TridiagFactor {
    sub: Vec<f64>,
    diag: Vec<f64>,
}

impl TridiagFactor {
    fn build(horizon: usize, xi: f64) -> Self {
        // A^T A is tridiagonal with diagonal (2, ..., 2, 1) and off-diagonal -1.
        let mut diag = vec![0.0; horizon];
        let mut sub = vec![0.0; horizon];
        for h in 0..horizon {
            let ata = if h + 1 < horizon { 2.0 } else { 1.0 };
            diag[h] = 2.0 + xi * ata;
        }
        for h in 1..horizon {
            let e = -xi;
            sub[h] = e / diag[h - 1];
            diag[h] -= sub[h] * e;
        }
        Self { sub, diag }
    }

    fn solve_in_place(&self, col: &mut [f64]) {
        let n = self.diag.len();
        for i in 1..n {
            col[i] -= self.sub[i] * col[i - 1];
        }
        for i in 0..n {
            col[i] /= self.diag[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            col[i] -= self.sub[i + 1] * col[i + 1];
        }
    }
}

/// Projection onto the set of trajectories whose per-step displacement norms
/// (including the step from the fixed start position) stay within
/// `v_max * dt`.
///
/// Returned trajectories are rebuilt from the clipped displacement variables,
/// so they satisfy the constraint exactly even when the solver stops at its
/// iteration cap; `converged` reports whether the residual tolerance was met.
#[derive(Debug, Clone)]
pub struct VelocityChainProjection {
    pub start: [f64; 2],
    pub v_max: f64,
    pub dt: f64,
    pub params: AdmmParams,
    factors: Arc<Mutex<HashMap<usize, Arc<TridiagFactor>>>>,
}

impl VelocityChainProjection {
    pub fn new(start: [f64; 2], v_max: f64, dt: f64, params: AdmmParams) -> Result<Self> {
        if v_max <= 0.0 || dt <= 0.0 {
            return Err(Error::Config("v_max and dt must be positive".into()));
        }
        if params.xi <= 0.0 || params.max_iters == 0 || params.tolerance <= 0.0 {
            return Err(Error::Config("invalid ADMM parameters".into()));
        }
        Ok(Self { start, v_max, dt, params, factors: Arc::new(Mutex::new(HashMap::new())) })
    }

    pub fn step_radius(&self) -> f64 {
        self.v_max * self.dt
    }

    fn factor(&self, horizon: usize) -> Arc<TridiagFactor> {
        let mut cache = self.factors.lock().expect("factor cache poisoned");
        cache
            .entry(horizon)
            .or_insert_with(|| Arc::new(TridiagFactor::build(horizon, self.params.xi)))
            .clone()
    }

    /// Projects a flattened `(x_1, y_1, ..., x_H, y_H)` trajectory.
    pub fn project_flat(&self, x: ArrayView1<'_, f64>) -> Result<ProjectionOutcome> {
        let mut results = self.project_flat_batch(&[x])?;
        Ok(results.pop().expect("batch of one"))
    }

    /// Projects a batch of flattened trajectories sharing this operator.
    ///
    /// All instances iterate in lockstep and stop together once the largest
    /// per-instance residual falls below the tolerance, so the iterate
    /// sequence of each instance is independent of how a caller partitions
    /// work across threads.
    pub fn project_flat_batch(
        &self,
        batch: &[ArrayView1<'_, f64>],
    ) -> Result<Vec<ProjectionOutcome>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let len = batch[0].len();
        if len == 0 || len % 2 != 0 {
            return Err(Error::Config(format!(
                "velocity chain expects a nonempty flattened H x 2 trajectory, got length {len}"
            )));
        }
        if batch.iter().any(|x| x.len() != len) {
            return Err(Error::Config("batch trajectories must share a horizon".into()));
        }
        let horizon = len / 2;
        let radius = self.step_radius();
        let xi = self.params.xi;
        let factor = self.factor(horizon);

        struct Instance {
            target: Vec<[f64; 2]>,
            x: Vec<[f64; 2]>,
            z: Vec<[f64; 2]>,
            dual: Vec<[f64; 2]>,
            dz: Vec<[f64; 2]>,
            residual: f64,
        }

        let mut instances: Vec<Instance> = batch
            .iter()
            .map(|flat| {
                let target: Vec<[f64; 2]> =
                    (0..horizon).map(|h| [flat[2 * h], flat[2 * h + 1]]).collect();
                // Warm-start Z at the clipped displacements of the input so a
                // feasible trajectory is a fixed point of the very first
                // iteration.
                let mut z = displacements(&target, self.start);
                for row in z.iter_mut() {
                    clip_row(row, radius);
                }
                Instance {
                    x: target.clone(),
                    target,
                    z,
                    dual: vec![[0.0, 0.0]; horizon],
                    dz: vec![[0.0, 0.0]; horizon],
                    residual: f64::INFINITY,
                }
            })
            .collect();

        let mut scratch = vec![0.0; horizon];
        let mut converged = false;
        for _ in 0..self.params.max_iters {
            let mut max_residual: f64 = 0.0;
            for inst in instances.iter_mut() {
                // X-update: solve (2I + xi A^T A) X = 2 X_hat + xi A^T (Z + b - dual/xi).
                for c in 0..2 {
                    for h in 0..horizon {
                        let mut w = inst.z[h][c] - inst.dual[h][c] / xi;
                        if h == 0 {
                            w += self.start[c];
                        }
                        scratch[h] = w;
                    }
                    // (A^T u)_h = u_h - u_{h+1}, with u_H = 0.
                    for h in 0..horizon {
                        let up = if h + 1 < horizon { scratch[h + 1] } else { 0.0 };
                        inst.x[h][c] = 2.0 * inst.target[h][c] + xi * (scratch[h] - up);
                    }
                    let mut col: Vec<f64> = (0..horizon).map(|h| inst.x[h][c]).collect();
                    factor.solve_in_place(&mut col);
                    for h in 0..horizon {
                        inst.x[h][c] = col[h];
                    }
                }
                // Z-update (row-wise ball clip of A X - b + dual/xi), then
                // dual ascent on the primal residual.
                let disp = displacements(&inst.x, self.start);
                let mut primal_sq = 0.0;
                for h in 0..horizon {
                    let mut w = [
                        disp[h][0] + inst.dual[h][0] / xi,
                        disp[h][1] + inst.dual[h][1] / xi,
                    ];
                    clip_row(&mut w, radius);
                    inst.dz[h] = [w[0] - inst.z[h][0], w[1] - inst.z[h][1]];
                    inst.z[h] = w;
                    let r = [disp[h][0] - w[0], disp[h][1] - w[1]];
                    inst.dual[h][0] += xi * r[0];
                    inst.dual[h][1] += xi * r[1];
                    primal_sq += r[0] * r[0] + r[1] * r[1];
                }
                // Dual residual xi |A^T (Z_new - Z_old)|_F. Without it the
                // primal residual alone can vanish on the first iteration
                // while the iterate is still far from the projection.
                let mut dual_sq = 0.0;
                for c in 0..2 {
                    for h in 0..horizon {
                        let up = if h + 1 < horizon { inst.dz[h + 1][c] } else { 0.0 };
                        let v = inst.dz[h][c] - up;
                        dual_sq += v * v;
                    }
                }
                inst.residual = primal_sq.sqrt().max(xi * dual_sq.sqrt());
                max_residual = max_residual.max(inst.residual);
            }
            if max_residual <= self.params.tolerance {
                converged = true;
                break;
            }
        }

        Ok(instances
            .into_iter()
            .map(|inst| {
                let mut point = Array1::zeros(horizon * 2);
                let mut prev = self.start;
                for h in 0..horizon {
                    prev = [prev[0] + inst.z[h][0], prev[1] + inst.z[h][1]];
                    point[2 * h] = prev[0];
                    point[2 * h + 1] = prev[1];
                }
                ProjectionOutcome {
                    point,
                    converged: converged || inst.residual <= self.params.tolerance,
                }
            })
            .collect())
    }
}

fn displacements(points: &[[f64; 2]], start: [f64; 2]) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(points.len());
    let mut prev = start;
    for p in points {
        out.push([p[0] - prev[0], p[1] - prev[1]]);
        prev = *p;
    }
    out
}

fn clip_row(row: &mut [f64; 2], radius: f64) {
    let norm = (row[0] * row[0] + row[1] * row[1]).sqrt();
    if norm > radius {
        let scale = radius / norm;
        row[0] *= scale;
        row[1] *= scale;
    }
}

/// Projection onto the convex hull of exemplar columns via mirror descent
/// with the negative-entropy mirror map (exponentiated-gradient updates).
#[derive(Debug, Clone)]
pub struct ConvexHullProjection {
    exemplars: Array2<f64>,
    gram: Array2<f64>,
    pub learning_rate: f64,
    pub iterations: usize,
}

/// Default mirror-descent learning rate, sized for high-dimensional latents.
pub const DEFAULT_MD_LEARNING_RATE: f64 = 1e-5;
/// Default mirror-descent iteration count.
pub const DEFAULT_MD_ITERATIONS: usize = 10_000;
/// Early-exit threshold on the sup-norm change of the weights.
const MD_EARLY_EXIT: f64 = 1e-12;

impl ConvexHullProjection {
    /// `exemplars` holds one column per hull vertex (`d x M`).
    pub fn new(exemplars: Array2<f64>, learning_rate: f64, iterations: usize) -> Result<Self> {
        if exemplars.ncols() == 0 || exemplars.nrows() == 0 {
            return Err(Error::Config("convex hull needs at least one exemplar".into()));
        }
        if learning_rate <= 0.0 || iterations == 0 {
            return Err(Error::Config("invalid mirror-descent parameters".into()));
        }
        let gram = exemplars.t().dot(&exemplars);
        Ok(Self { exemplars, gram, learning_rate, iterations })
    }

    pub fn num_exemplars(&self) -> usize {
        self.exemplars.ncols()
    }

    /// Returns the projected point together with its simplex weights.
    pub fn project_with_weights(
        &self,
        x: ArrayView1<'_, f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let (d, m) = (self.exemplars.nrows(), self.exemplars.ncols());
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        let b = self.exemplars.t().dot(&x);
        // Work on log-weights; the softmax renormalization is exactly the
        // multiplicative update written in weight space.
        let mut log_w = Array1::from_elem(m, -(m as f64).ln());
        let mut weights = log_w.mapv(f64::exp);
        for _ in 0..self.iterations {
            let grad = {
                let gw = self.gram.dot(&weights);
                (&gw - &b).mapv(|v| 2.0 * v)
            };
            log_w.scaled_add(-self.learning_rate, &grad);
            let max = log_w.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let mut next = log_w.mapv(|v| (v - max).exp());
            let total = next.sum();
            next.mapv_inplace(|v| v / total);
            let delta = next
                .iter()
                .zip(weights.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            weights = next;
            if delta < MD_EARLY_EXIT {
                break;
            }
        }
        Ok((self.exemplars.dot(&weights), weights))
    }
}
