//! Reproducible experiment scenarios: the 1-D two-block corridor problem and
//! desk-scale multi-robot navigation with analytic trajectory priors.

use std::sync::Arc;

use ndarray::{array, Array1, Array2};
use rand::Rng;

use crate::coupling::{
    AffineLogisticClassifier, DynCost, LogBarrierCost, ObstacleCost, PairwiseSumCost,
    SquaredHingeCost, WeightedSumCost, XorCost,
};
use crate::error::{Error, Result};
use crate::metrics::PatternField;
use crate::projection::{AdmmParams, Projection, VelocityChainProjection};
use crate::rng;
use crate::sampler::{CoupledSystem, CoupledVariable, LmcParams};
use crate::schedule::DiffusionSchedule;
use crate::score::ScoreModel;
use crate::sdf::{Circle, SdfScene};

/// Coupling cost selector shared by the scenario builders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    None,
    LogBarrier,
    SquaredHinge,
    DppCosine,
    XorClassifier,
}

/// Velocity presets reported for the straight-line navigation task.
pub const EMPTY_V_MAX_PRESETS: [f64; 3] = [0.703, 0.692, 0.675];
/// Velocity presets reported for the roundabout navigation task.
pub const HIGHWAYS_V_MAX_PRESETS: [f64; 3] = [0.878, 0.781, 0.647];

/// Hinge range as a multiple of the robot radius.
pub const SHD_RANGE_FACTOR: f64 = 6.0;
/// Log-barrier offset as a multiple of the robot radius.
pub const LB_OFFSET_FACTOR: f64 = 1.9;
/// Weight of the inter-robot term in the navigation cost.
pub const LAMBDA_ROBOT: f64 = 1.0;
/// The obstacle term is weighted `0.1 / gamma` so its applied strength stays
/// fixed while the coupling strength sweeps.
pub const LAMBDA_OBSTACLE_NUMERATOR: f64 = 0.1;

/// The two-block corridor toy problem: two 1-D block centers sampled from
/// Gaussians at the corridor midpoint, constrained to keep each block inside
/// the corridor.
#[derive(Debug, Clone, Copy)]
pub struct CorridorSpec {
    pub corridor_length: f64,
    pub block_lengths: (f64, f64),
    pub prior_std: (f64, f64),
}

impl Default for CorridorSpec {
    fn default() -> Self {
        Self { corridor_length: 9.0, block_lengths: (6.0, 2.0), prior_std: (2.0, 2.0) }
    }
}

impl CorridorSpec {
    /// Feasible interval for a block center: `[L/2, corridor - L/2]`.
    pub fn feasible_box(&self, block_length: f64) -> (f64, f64) {
        (block_length / 2.0, self.corridor_length - block_length / 2.0)
    }

    /// Centers closer than this overlap: half the sum of the block lengths.
    pub fn overlap_threshold(&self) -> f64 {
        (self.block_lengths.0 + self.block_lengths.1) / 2.0
    }

    pub fn midpoint(&self) -> f64 {
        self.corridor_length / 2.0
    }

    fn validate(&self) -> Result<()> {
        for len in [self.block_lengths.0, self.block_lengths.1] {
            let (lo, hi) = self.feasible_box(len);
            if !(len > 0.0) || lo > hi {
                return Err(Error::Config(format!(
                    "block of length {len} cannot fit in a corridor of length {}",
                    self.corridor_length
                )));
            }
        }
        if self.prior_std.0 <= 0.0 || self.prior_std.1 <= 0.0 {
            return Err(Error::Config("prior standard deviations must be positive".into()));
        }
        Ok(())
    }

    /// Whether two block centers overlap.
    pub fn blocks_overlap(&self, x: f64, y: f64) -> bool {
        (x - y).abs() < self.overlap_threshold()
    }
}

/// Sampler settings attached to a corridor system.
#[derive(Debug, Clone, Copy)]
pub struct CorridorOptions {
    pub coupling: CouplingKind,
    pub gamma: f64,
    pub projection: bool,
    pub lmc: LmcParams,
    pub schedule_steps: usize,
    pub seed: u64,
}

impl Default for CorridorOptions {
    fn default() -> Self {
        Self {
            coupling: CouplingKind::SquaredHinge,
            gamma: 1.0,
            projection: true,
            lmc: LmcParams::new(0.01, 800),
            schedule_steps: 25,
            seed: 0,
        }
    }
}

/// Assembles the corridor system: two 1-D variables with box constraints
/// derived from the block lengths and a scalar-distance coupling whose
/// active range is the overlap threshold.
pub fn build_corridor(spec: &CorridorSpec, options: &CorridorOptions) -> Result<CoupledSystem> {
    spec.validate()?;
    let mid = spec.midpoint();
    let mut variables = Vec::with_capacity(2);
    for (i, (len, std)) in [
        (spec.block_lengths.0, spec.prior_std.0),
        (spec.block_lengths.1, spec.prior_std.1),
    ]
    .iter()
    .enumerate()
    {
        let (lo, hi) = spec.feasible_box(*len);
        let projection = if options.projection {
            Projection::box_bounds(array![lo], array![hi])?
        } else {
            Projection::Identity
        };
        variables.push(CoupledVariable::new(
            format!("block{}", i + 1),
            ScoreModel::gaussian(array![mid], std * std)?,
            projection,
        ));
    }
    let threshold = spec.overlap_threshold();
    let cost: Option<DynCost> = match options.coupling {
        CouplingKind::None => None,
        CouplingKind::SquaredHinge => {
            Some(Arc::new(SquaredHingeCost::new(threshold, 1)?))
        }
        CouplingKind::LogBarrier => {
            Some(Arc::new(LogBarrierCost::new(LB_OFFSET_FACTOR * threshold / 2.0, 1)?))
        }
        CouplingKind::XorClassifier => {
            // Side classifier: which half of the corridor a center sits in.
            let classifier = Arc::new(AffineLogisticClassifier {
                weights: array![1.0],
                bias: -mid,
            });
            Some(Arc::new(XorCost { classifier }))
        }
        CouplingKind::DppCosine => {
            return Err(Error::Config("corridor scenario has no cosine coupling".into()))
        }
    };
    let mut system = CoupledSystem::new(variables);
    system.cost = cost;
    system.gamma = options.gamma;
    system.lmc = Some(options.lmc);
    system.schedule = Some(DiffusionSchedule::linear(options.schedule_steps, 0.02, 0.5)?);
    system.seed = options.seed;
    Ok(system)
}

/// Navigation workspace: a square of half-extent `half`, circular obstacles
/// and a motion pattern.
#[derive(Debug, Clone)]
pub struct NavEnvironment {
    pub name: &'static str,
    pub half_extent: f64,
    pub scene: SdfScene,
    pub robot_radius: f64,
}

impl NavEnvironment {
    /// Straight-line motion in an obstacle-free square.
    pub fn empty() -> Self {
        Self { name: "empty", half_extent: 10.0, scene: SdfScene::empty(), robot_radius: 0.5 }
    }

    /// Counterclockwise roundabout motion around one central disc.
    pub fn highways() -> Self {
        Self {
            name: "highways",
            half_extent: 10.0,
            scene: SdfScene::new(vec![Circle { center: [0.0, 0.0], radius: 2.5 }]),
            robot_radius: 0.5,
        }
    }

    /// The pattern field a robot heading for `goal` is scored against.
    pub fn pattern(&self, goal: [f64; 2]) -> PatternField {
        if self.scene.is_empty() {
            PatternField::TowardGoal { goal }
        } else {
            PatternField::CounterClockwiseAround { center: self.scene.circles()[0].center }
        }
    }

    fn point_free(&self, p: [f64; 2]) -> bool {
        p[0].abs() <= self.half_extent
            && p[1].abs() <= self.half_extent
            && self.scene.distance(p) > self.robot_radius
    }
}

/// Per-robot start and goal positions.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfiguration {
    pub pairs: Vec<([f64; 2], [f64; 2])>,
}

impl InitialConfiguration {
    /// Validates separations and obstacle clearance against an environment.
    pub fn new(env: &NavEnvironment, pairs: Vec<([f64; 2], [f64; 2])>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Config("configuration needs at least one robot".into()));
        }
        for (s, g) in &pairs {
            if !env.point_free(*s) || !env.point_free(*g) {
                return Err(Error::Config("start or goal is not in free space".into()));
            }
        }
        let min_sep = 2.0 * env.robot_radius;
        for i in 0..pairs.len() {
            for j in i + 1..pairs.len() {
                for (a, b) in [(pairs[i].0, pairs[j].0), (pairs[i].1, pairs[j].1)] {
                    let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                    if d <= min_sep {
                        return Err(Error::Config(
                            "start or goal separations below twice the robot radius".into(),
                        ));
                    }
                }
            }
        }
        Ok(Self { pairs })
    }

    pub fn robots(&self) -> usize {
        self.pairs.len()
    }
}

const CONFIG_STREAM_TAG: u64 = 0xc0f1;
const REJECTION_BUDGET_PER_ROBOT: usize = 20_000;

/// Uniform rejection sampling of starts and goals over free space, keeping
/// pairwise separations above twice the robot radius.
pub fn sample_initial_configuration(
    env: &NavEnvironment,
    robots: usize,
    seed: u64,
) -> Result<InitialConfiguration> {
    if robots == 0 {
        return Err(Error::Config("need at least one robot".into()));
    }
    let mut rng = rng::stream(seed, [CONFIG_STREAM_TAG, robots as u64, 0]);
    let budget = REJECTION_BUDGET_PER_ROBOT * robots;
    let mut attempts = 0usize;
    let draw_set = |rng: &mut rand_chacha::ChaCha8Rng,
                        attempts: &mut usize|
     -> Result<Vec<[f64; 2]>> {
        let mut points: Vec<[f64; 2]> = Vec::with_capacity(robots);
        while points.len() < robots {
            *attempts += 1;
            if *attempts > budget {
                return Err(Error::EnvironmentTooCrowded { attempts: *attempts });
            }
            let p = [
                rng.gen_range(-env.half_extent..=env.half_extent),
                rng.gen_range(-env.half_extent..=env.half_extent),
            ];
            if !env.point_free(p) {
                continue;
            }
            let min_sep = 2.0 * env.robot_radius;
            if points.iter().all(|q| {
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() > min_sep
            }) {
                points.push(p);
            }
        }
        Ok(points)
    };
    let starts = draw_set(&mut rng, &mut attempts)?;
    let goals = draw_set(&mut rng, &mut attempts)?;
    InitialConfiguration::new(env, starts.into_iter().zip(goals).collect())
}

/// Settings for the navigation system builder.
#[derive(Debug, Clone, Copy)]
pub struct NavParams {
    pub horizon: usize,
    pub dt: f64,
    /// Per-waypoint prior standard deviation of the trajectory model.
    pub prior_std: f64,
    pub v_max: f64,
    pub gamma: f64,
    pub coupling: CouplingKind,
    pub projection: bool,
    /// Margin of the obstacle coupling term.
    pub obstacle_margin: f64,
    pub admm: AdmmParams,
    pub lmc: LmcParams,
    pub seed: u64,
}

impl Default for NavParams {
    fn default() -> Self {
        Self {
            horizon: 48,
            dt: 1.0,
            prior_std: 0.35,
            v_max: EMPTY_V_MAX_PRESETS[0],
            gamma: 1.0,
            coupling: CouplingKind::SquaredHinge,
            projection: true,
            obstacle_margin: 1.0,
            admm: AdmmParams::navigation(),
            lmc: LmcParams::new(0.01, 500),
            seed: 0,
        }
    }
}

/// Builds the N-robot navigation system: one trajectory variable per robot
/// with a nominal-path prior (straight line, or a counterclockwise arc around
/// the central obstacle), a velocity-chain projection anchored at the robot's
/// start, and the weighted robot/obstacle coupling cost.
pub fn build_nav_system(
    env: &NavEnvironment,
    config: &InitialConfiguration,
    params: &NavParams,
    schedule: DiffusionSchedule,
) -> Result<CoupledSystem> {
    if params.horizon == 0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    if params.v_max <= 0.0 || params.dt <= 0.0 || params.prior_std <= 0.0 {
        return Err(Error::Config("v_max, dt and prior_std must be positive".into()));
    }
    let mut variables = Vec::with_capacity(config.robots());
    for (i, (start, goal)) in config.pairs.iter().enumerate() {
        let nominal = nominal_path(env, *start, *goal, params.horizon);
        let var = params.prior_std * params.prior_std;
        let score =
            ScoreModel::nominal_path(nominal, Array1::from_elem(params.horizon, var))?;
        let projection = if params.projection {
            Projection::VelocityChain(VelocityChainProjection::new(
                *start,
                params.v_max,
                params.dt,
                params.admm,
            )?)
        } else {
            Projection::Identity
        };
        variables.push(CoupledVariable::new(format!("robot{}", i + 1), score, projection));
    }

    let cost = nav_cost(env, config.robots(), params)?;
    let mut system = CoupledSystem::new(variables);
    system.cost = cost;
    system.gamma = params.gamma;
    system.lmc = Some(params.lmc);
    system.schedule = Some(schedule);
    system.seed = params.seed;
    Ok(system)
}

fn nav_cost(env: &NavEnvironment, robots: usize, params: &NavParams) -> Result<Option<DynCost>> {
    if params.gamma == 0.0 || params.coupling == CouplingKind::None {
        return Ok(None);
    }
    let radius = env.robot_radius;
    let base: Option<DynCost> = if robots >= 2 {
        Some(match params.coupling {
            CouplingKind::SquaredHinge => {
                Arc::new(SquaredHingeCost::new(SHD_RANGE_FACTOR * radius, 2)?) as DynCost
            }
            CouplingKind::LogBarrier => {
                Arc::new(LogBarrierCost::new(LB_OFFSET_FACTOR * radius, 2)?) as DynCost
            }
            CouplingKind::DppCosine => Arc::new(crate::coupling::DppCosineCost::new(1e-6)?),
            CouplingKind::XorClassifier => {
                return Err(Error::Config(
                    "navigation scenario has no classifier coupling".into(),
                ))
            }
            CouplingKind::None => unreachable!(),
        })
    } else {
        None
    };
    let robot_term: Option<DynCost> =
        base.map(|b| Arc::new(PairwiseSumCost { base: b }) as DynCost);
    let obstacle_term: Option<DynCost> = if env.scene.is_empty() {
        None
    } else {
        Some(Arc::new(ObstacleCost::new(env.scene.clone(), params.obstacle_margin)?))
    };
    let lambda_obstacle = LAMBDA_OBSTACLE_NUMERATOR / params.gamma;
    Ok(match (robot_term, obstacle_term) {
        (Some(r), Some(o)) => Some(Arc::new(WeightedSumCost {
            terms: vec![(LAMBDA_ROBOT, r), (lambda_obstacle, o)],
        })),
        (Some(r), None) => Some(Arc::new(WeightedSumCost { terms: vec![(LAMBDA_ROBOT, r)] })),
        (None, Some(o)) => {
            Some(Arc::new(WeightedSumCost { terms: vec![(lambda_obstacle, o)] }))
        }
        (None, None) => None,
    })
}

/// Nominal waypoints for a robot: a straight line in the empty environment,
/// a counterclockwise arc around the central obstacle otherwise.
pub fn nominal_path(
    env: &NavEnvironment,
    start: [f64; 2],
    goal: [f64; 2],
    horizon: usize,
) -> Array2<f64> {
    let mut nominal = Array2::zeros((horizon, 2));
    if env.scene.is_empty() {
        for h in 1..=horizon {
            let f = h as f64 / horizon as f64;
            nominal[(h - 1, 0)] = start[0] + f * (goal[0] - start[0]);
            nominal[(h - 1, 1)] = start[1] + f * (goal[1] - start[1]);
        }
    } else {
        let center = env.scene.circles()[0].center;
        let rel_s = [start[0] - center[0], start[1] - center[1]];
        let rel_g = [goal[0] - center[0], goal[1] - center[1]];
        let rad_s = (rel_s[0] * rel_s[0] + rel_s[1] * rel_s[1]).sqrt();
        let rad_g = (rel_g[0] * rel_g[0] + rel_g[1] * rel_g[1]).sqrt();
        let theta_s = rel_s[1].atan2(rel_s[0]);
        let theta_g = rel_g[1].atan2(rel_g[0]);
        let mut sweep = theta_g - theta_s;
        while sweep <= 0.0 {
            sweep += std::f64::consts::TAU;
        }
        for h in 1..=horizon {
            let f = h as f64 / horizon as f64;
            let radius = rad_s + f * (rad_g - rad_s);
            let theta = theta_s + f * sweep;
            nominal[(h - 1, 0)] = center[0] + radius * theta.cos();
            nominal[(h - 1, 1)] = center[1] + radius * theta.sin();
        }
    }
    nominal
}
