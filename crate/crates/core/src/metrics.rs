//! Trajectory dissimilarity and safety metrics.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::sdf::SdfScene;

/// A 2-D trajectory with its physical step length.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Array2<f64>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(points: Array2<f64>, dt: f64) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::EmptyInput("trajectory needs at least one waypoint".into()));
        }
        if points.ncols() != 2 {
            return Err(Error::Config("trajectory points must be 2-D".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("trajectory contains non-finite entries".into()));
        }
        if dt <= 0.0 {
            return Err(Error::Config("dt must be positive".into()));
        }
        Ok(Self { points, dt })
    }

    /// Reinterprets a flat `(x_1, y_1, ..., x_H, y_H)` vector.
    pub fn from_flat(flat: &[f64], dt: f64) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::Config("flat trajectory length must be even".into()));
        }
        let h = flat.len() / 2;
        let points = Array2::from_shape_vec((h, 2), flat.to_vec())
            .map_err(|e| Error::Config(e.to_string()))?;
        Self::new(points, dt)
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn horizon(&self) -> usize {
        self.points.nrows()
    }

    pub fn waypoint(&self, h: usize) -> [f64; 2] {
        [self.points[(h, 0)], self.points[(h, 1)]]
    }
}

fn point_distance(a: ArrayView2<'_, f64>, i: usize, b: ArrayView2<'_, f64>, j: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..a.ncols() {
        let d = a[(i, c)] - b[(j, c)];
        acc += d * d;
    }
    acc.sqrt()
}

/// Dynamic time warping distance: DP over the Euclidean local-cost matrix
/// with match/insert/delete steps, unnormalized.
pub fn dtw(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    check_sequences(a, b)?;
    let (n, m) = (a.nrows(), b.nrows());
    let mut row = vec![0.0f64; m];
    let mut prev = vec![0.0f64; m];
    for i in 0..n {
        std::mem::swap(&mut row, &mut prev);
        for j in 0..m {
            let cost = point_distance(a, i, b, j);
            row[j] = match (i, j) {
                (0, 0) => cost,
                (0, _) => cost + row[j - 1],
                (_, 0) => cost + prev[j],
                _ => cost + prev[j].min(row[j - 1]).min(prev[j - 1]),
            };
        }
    }
    Ok(row[m - 1])
}

/// Discrete Frechet distance: min over monotone couplings of the maximum
/// pointwise distance.
pub fn dfd(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    check_sequences(a, b)?;
    let (n, m) = (a.nrows(), b.nrows());
    let mut row = vec![0.0f64; m];
    let mut prev = vec![0.0f64; m];
    for i in 0..n {
        std::mem::swap(&mut row, &mut prev);
        for j in 0..m {
            let cost = point_distance(a, i, b, j);
            row[j] = match (i, j) {
                (0, 0) => cost,
                (0, _) => cost.max(row[j - 1]),
                (_, 0) => cost.max(prev[j]),
                _ => cost.max(prev[j].min(row[j - 1]).min(prev[j - 1])),
            };
        }
    }
    Ok(row[m - 1])
}

fn check_sequences(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<()> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::EmptyInput("distance needs nonempty sequences".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), got: b.ncols() });
    }
    Ok(())
}

/// Relative slack absorbing iterative-projection tolerance in the velocity
/// check.
const VELOCITY_SLACK: f64 = 1e-6;

/// Whether every displacement of `t`, including the step from `start`,
/// respects the velocity bound.
pub fn constraint_satisfaction(t: &Trajectory, start: [f64; 2], v_max: f64) -> bool {
    let limit = v_max * t.dt * (1.0 + VELOCITY_SLACK);
    let mut prev = start;
    for h in 0..t.horizon() {
        let p = t.waypoint(h);
        let d = ((p[0] - prev[0]).powi(2) + (p[1] - prev[1]).powi(2)).sqrt();
        if d > limit {
            return false;
        }
        prev = p;
    }
    true
}

/// Whether a tuple of trajectories keeps every pair of robots more than
/// `2 * radius` apart at every time step.
pub fn inter_robot_safety(tuple: &[&Trajectory], radius: f64) -> Result<bool> {
    if tuple.len() <= 1 {
        return Ok(true);
    }
    let horizon = tuple[0].horizon();
    if tuple.iter().any(|t| t.horizon() != horizon) {
        return Err(Error::Config("trajectories must share a horizon".into()));
    }
    for h in 0..horizon {
        for i in 0..tuple.len() {
            for j in i + 1..tuple.len() {
                let a = tuple[i].waypoint(h);
                let b = tuple[j].waypoint(h);
                let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                if d <= 2.0 * radius {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Whether every waypoint of every trajectory keeps a signed distance larger
/// than `radius` from the static obstacles.
pub fn obstacle_safe(tuple: &[&Trajectory], scene: &SdfScene, radius: f64) -> bool {
    tuple.iter().all(|t| {
        (0..t.horizon()).all(|h| scene.distance(t.waypoint(h)) > radius)
    })
}

/// Success rate over configurations: each configuration counts as a success
/// when at least one of its sampled tuples is collision-free.
pub fn success_rate(per_config_tuple_safe: &[Vec<bool>]) -> Result<f64> {
    if per_config_tuple_safe.is_empty() || per_config_tuple_safe.iter().any(|c| c.is_empty()) {
        return Err(Error::EmptyInput("success rate needs nonempty batches".into()));
    }
    let hits = per_config_tuple_safe
        .iter()
        .filter(|tuples| tuples.iter().any(|&safe| safe))
        .count();
    Ok(hits as f64 / per_config_tuple_safe.len() as f64)
}

/// The environment motion pattern a trajectory is scored against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatternField {
    /// Unit direction toward a fixed goal.
    TowardGoal { goal: [f64; 2] },
    /// Counterclockwise tangent around a fixed center.
    CounterClockwiseAround { center: [f64; 2] },
}

impl PatternField {
    pub fn direction(&self, at: [f64; 2]) -> [f64; 2] {
        match self {
            PatternField::TowardGoal { goal } => {
                normalize([goal[0] - at[0], goal[1] - at[1]])
            }
            PatternField::CounterClockwiseAround { center } => {
                normalize([-(at[1] - center[1]), at[0] - center[0]])
            }
        }
    }
}

fn normalize(v: [f64; 2]) -> [f64; 2] {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if n > 0.0 {
        [v[0] / n, v[1] / n]
    } else {
        [0.0, 0.0]
    }
}

/// Fraction of displacement steps whose inner product with the pattern field
/// at the step's origin waypoint is positive. A proxy for adherence to the
/// environment's nominal motion pattern; single-waypoint trajectories score
/// 1 vacuously.
pub fn data_adherence_proxy(t: &Trajectory, pattern: &PatternField) -> f64 {
    if t.horizon() < 2 {
        return 1.0;
    }
    let mut positive = 0usize;
    for h in 1..t.horizon() {
        let prev = t.waypoint(h - 1);
        let cur = t.waypoint(h);
        let step = [cur[0] - prev[0], cur[1] - prev[1]];
        let field = pattern.direction(prev);
        if step[0] * field[0] + step[1] * field[1] > 0.0 {
            positive += 1;
        }
    }
    positive as f64 / (t.horizon() - 1) as f64
}

/// One CSV row of the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    /// Per-sample task-success ingredient: the tuple is fully collision-free.
    pub su: u8,
    pub rs: u8,
    pub cs: u8,
    pub dtw: f64,
    pub dfd: f64,
    pub obstacle_safe: u8,
    pub da_proxy: f64,
    pub overlap: u8,
    pub converged: u8,
}
