//! Experiment execution: one cell per coupling strength, each emitting a
//! per-sample CSV, a JSON summary, and optionally trajectory dumps and an
//! SVG plot. All sampling is deterministic in `(config, seed)`; CSV bytes do
//! not depend on the worker count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use ndarray::array;
use serde::{Deserialize, Serialize};

use pcd_core::metrics::{
    self, constraint_satisfaction, data_adherence_proxy, inter_robot_safety, success_rate,
    MetricRecord, Trajectory,
};
use pcd_core::projection::AdmmParams;
use pcd_core::sampler::{run_pcd_ddpm, run_pcd_dps, run_pcd_lmc, CoupledSystem, LmcParams, SampleBatch};
use pcd_core::scenario::{
    build_corridor, build_nav_system, sample_initial_configuration, CorridorOptions,
    CorridorSpec, CouplingKind, NavEnvironment, NavParams,
};
use pcd_core::schedule::DiffusionSchedule;

use crate::config::{Coupling, RunConfig, Sampler, Scenario};
use crate::plot;

/// Fixed CSV column order of the per-sample table.
pub const CSV_HEADER: [&str; 9] =
    ["su", "rs", "cs", "dtw", "dfd", "obstacle_safe", "da_proxy", "overlap", "converged"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub gamma: f64,
    pub dir: String,
    pub batch: usize,
    pub configurations: usize,
    pub rows: usize,
    pub means: BTreeMap<String, f64>,
    pub stds: BTreeMap<String, f64>,
    /// Fraction of configurations with at least one fully safe sample.
    pub success_rate: f64,
    pub projection_calls: u64,
    pub nonconverged_projections: u64,
    pub wall_clock_secs: f64,
    /// Scenario geometry needed to redraw plots.
    pub plot_meta: PlotMeta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotMeta {
    pub scenario: String,
    pub dt: f64,
    pub v_max: f64,
    pub robot_radius: f64,
    /// Circles as (cx, cy, radius).
    pub obstacles: Vec<(f64, f64, f64)>,
    /// Per robot of the first configuration: (sx, sy, gx, gy).
    pub endpoints: Vec<(f64, f64, f64, f64)>,
    /// Corridor feasible intervals per block.
    pub corridor_boxes: Vec<(f64, f64)>,
    pub corridor_length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub sampler: String,
    pub coupling: String,
    pub seed: u64,
    pub cells: Vec<CellReport>,
    pub total_wall_clock_secs: f64,
}

fn coupling_kind(c: Coupling) -> CouplingKind {
    match c {
        Coupling::Lb => CouplingKind::LogBarrier,
        Coupling::Shd => CouplingKind::SquaredHinge,
        Coupling::Dpp => CouplingKind::DppCosine,
        Coupling::Xor => CouplingKind::XorClassifier,
        Coupling::None => CouplingKind::None,
    }
}

fn scenario_name(s: Scenario) -> &'static str {
    match s {
        Scenario::Corridor => "corridor",
        Scenario::Empty => "empty",
        Scenario::Highways => "highways",
    }
}

fn sampler_name(s: Sampler) -> &'static str {
    match s {
        Sampler::Lmc => "lmc",
        Sampler::Ddpm => "ddpm",
        Sampler::Dps => "dps",
    }
}

fn run_sampler(sampler: Sampler, system: &CoupledSystem, batch: usize) -> Result<SampleBatch> {
    Ok(match sampler {
        Sampler::Lmc => run_pcd_lmc(system, batch)?,
        Sampler::Ddpm => run_pcd_ddpm(system, batch)?,
        Sampler::Dps => run_pcd_dps(system, batch)?,
    })
}

/// A dumped trajectory point for plotting.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrajPoint {
    pub config: usize,
    pub sample: usize,
    pub robot: usize,
    pub step: usize,
    pub x: f64,
    pub y: f64,
}

struct CellData {
    records: Vec<MetricRecord>,
    per_config_safe: Vec<Vec<bool>>,
    projection_calls: u64,
    nonconverged: u64,
    traj_points: Vec<TrajPoint>,
    plot_meta: PlotMeta,
}

/// Runs every cell of the sweep and writes all artifacts under `root`.
pub fn execute(config: &RunConfig, root: &Path) -> Result<RunReport> {
    let started = Instant::now();
    let out_dir = root.join(&config.run.output_dir);
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let run_cells = |config: &RunConfig, out_dir: &Path| -> Result<Vec<CellReport>> {
        config
            .run
            .gammas
            .iter()
            .map(|&gamma| run_cell(config, gamma, out_dir))
            .collect()
    };

    let cells = if config.run.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.run.threads)
            .build()
            .context("building worker pool")?;
        pool.install(|| run_cells(config, &out_dir))?
    } else {
        run_cells(config, &out_dir)?
    };

    let report = RunReport {
        scenario: scenario_name(config.run.scenario).to_string(),
        sampler: sampler_name(config.run.sampler).to_string(),
        coupling: format!("{:?}", config.run.coupling).to_lowercase(),
        seed: config.run.seed,
        cells,
        total_wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    let report_json = serde_json::to_string_pretty(&report)?;
    write_atomic(&out_dir.join("report.json"), report_json.as_bytes())?;
    Ok(report)
}

fn run_cell(config: &RunConfig, gamma: f64, out_dir: &Path) -> Result<CellReport> {
    let started = Instant::now();
    let cell_dir = out_dir.join(format!("cell_gamma_{gamma}"));
    fs::create_dir_all(&cell_dir)?;

    let data = match config.run.scenario {
        Scenario::Corridor => corridor_cell(config, gamma)?,
        Scenario::Empty | Scenario::Highways => nav_cell(config, gamma)?,
    };

    write_samples_csv(&cell_dir.join("samples.csv"), &data.records)?;
    if config.run.plots {
        write_trajectories_csv(&cell_dir.join("trajectories.csv"), &data.traj_points)?;
        let svg = plot::render(&data.plot_meta, &data.traj_points, &data.records)?;
        write_atomic(&cell_dir.join("plot.svg"), svg.as_bytes())?;
    }

    let (means, stds) = column_stats(&data.records);
    let report = CellReport {
        gamma,
        dir: cell_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        batch: config.run.batch,
        configurations: data.per_config_safe.len(),
        rows: data.records.len(),
        means,
        stds,
        success_rate: success_rate(&data.per_config_safe)?,
        projection_calls: data.projection_calls,
        nonconverged_projections: data.nonconverged,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        plot_meta: data.plot_meta,
    };
    let json = serde_json::to_string_pretty(&report)?;
    write_atomic(&cell_dir.join("cell.json"), json.as_bytes())?;
    Ok(report)
}

fn corridor_cell(config: &RunConfig, gamma: f64) -> Result<CellData> {
    let section = &config.corridor;
    let spec = CorridorSpec {
        corridor_length: section.corridor_length,
        block_lengths: (section.block_big, section.block_small),
        prior_std: (section.prior_std, section.prior_std),
    };
    let options = CorridorOptions {
        coupling: if gamma == 0.0 { CouplingKind::None } else { coupling_kind(config.run.coupling) },
        gamma,
        projection: config.run.projection,
        lmc: LmcParams::new(config.lmc.step_size, config.lmc.iterations),
        schedule_steps: config.schedule.steps,
        seed: config.run.seed,
    };
    let mut system = build_corridor(&spec, &options)?;
    system.schedule = Some(DiffusionSchedule::linear(
        config.schedule.steps,
        config.schedule.beta_min,
        config.schedule.beta_max,
    )?);
    system.noise_scale_k = config.schedule.noise_scale_k;
    let batch = run_sampler(config.run.sampler, &system, config.run.batch)?;

    let (lo1, hi1) = spec.feasible_box(spec.block_lengths.0);
    let (lo2, hi2) = spec.feasible_box(spec.block_lengths.1);
    let mut records = Vec::with_capacity(config.run.batch);
    let mut safe = Vec::with_capacity(config.run.batch);
    let mut traj_points = Vec::new();
    for s in 0..config.run.batch {
        let x = batch.sample(0, s)[0];
        let y = batch.sample(1, s)[0];
        let overlap = spec.blocks_overlap(x, y);
        let inside = (lo1..=hi1).contains(&x) && (lo2..=hi2).contains(&y);
        let a = array![[x]];
        let b = array![[y]];
        let dtw = metrics::dtw(a.view(), b.view())?;
        let dfd = metrics::dfd(a.view(), b.view())?;
        let record = MetricRecord {
            su: u8::from(!overlap),
            rs: u8::from(!overlap),
            cs: u8::from(inside),
            dtw,
            dfd,
            obstacle_safe: 1,
            da_proxy: 1.0,
            overlap: u8::from(overlap),
            converged: u8::from(batch.converged[s]),
        };
        safe.push(!overlap);
        records.push(record);
        if config.run.plots {
            traj_points.push(TrajPoint { config: 0, sample: s, robot: 0, step: 0, x, y: 0.0 });
            traj_points.push(TrajPoint { config: 0, sample: s, robot: 1, step: 0, x: y, y: 0.0 });
        }
    }
    Ok(CellData {
        records,
        per_config_safe: vec![safe],
        projection_calls: batch.projection_calls,
        nonconverged: batch.nonconverged_projections,
        traj_points,
        plot_meta: PlotMeta {
            scenario: "corridor".into(),
            dt: 1.0,
            v_max: 0.0,
            robot_radius: 0.0,
            obstacles: Vec::new(),
            endpoints: Vec::new(),
            corridor_boxes: vec![(lo1, hi1), (lo2, hi2)],
            corridor_length: spec.corridor_length,
        },
    })
}

/// Samples dumped to `trajectories.csv` per navigation cell.
const PLOTTED_SAMPLES: usize = 12;

fn nav_cell(config: &RunConfig, gamma: f64) -> Result<CellData> {
    let env = match config.run.scenario {
        Scenario::Empty => NavEnvironment::empty(),
        Scenario::Highways => NavEnvironment::highways(),
        Scenario::Corridor => unreachable!("corridor handled separately"),
    };
    let section = &config.nav;
    let v_max = config.effective_v_max();
    let schedule = DiffusionSchedule::linear(
        config.schedule.steps,
        config.schedule.beta_min,
        config.schedule.beta_max,
    )?;

    let mut records = Vec::with_capacity(config.run.batch * config.run.configurations);
    let mut per_config_safe = Vec::with_capacity(config.run.configurations);
    let mut projection_calls = 0u64;
    let mut nonconverged = 0u64;
    let mut traj_points = Vec::new();
    let mut first_endpoints = Vec::new();

    for c in 0..config.run.configurations {
        let config_seed = config.run.seed.wrapping_add(c as u64);
        let initial = sample_initial_configuration(&env, config.run.robots, config_seed)?;
        if c == 0 {
            first_endpoints = initial
                .pairs
                .iter()
                .map(|(s, g)| (s[0], s[1], g[0], g[1]))
                .collect();
        }
        let params = NavParams {
            horizon: section.horizon,
            dt: section.dt,
            prior_std: section.prior_std,
            v_max,
            gamma,
            coupling: if gamma == 0.0 {
                CouplingKind::None
            } else {
                coupling_kind(config.run.coupling)
            },
            projection: config.run.projection,
            obstacle_margin: section.obstacle_margin,
            admm: AdmmParams {
                xi: section.admm_xi,
                max_iters: section.admm_max_iters,
                tolerance: section.admm_tolerance,
            },
            lmc: LmcParams::new(config.lmc.step_size, config.lmc.iterations),
            seed: config.run.seed.wrapping_add(1_000_003u64.wrapping_mul(c as u64)),
        };
        let mut system = build_nav_system(&env, &initial, &params, schedule.clone())?;
        system.noise_scale_k = config.schedule.noise_scale_k;
        let batch = run_sampler(config.run.sampler, &system, config.run.batch)?;
        projection_calls += batch.projection_calls;
        nonconverged += batch.nonconverged_projections;

        let mut safe_flags = Vec::with_capacity(config.run.batch);
        for s in 0..config.run.batch {
            let trajectories: Vec<Trajectory> = (0..config.run.robots)
                .map(|v| {
                    Trajectory::from_flat(
                        batch.sample(v, s).as_slice().expect("contiguous sample"),
                        section.dt,
                    )
                })
                .collect::<pcd_core::Result<_>>()?;
            let refs: Vec<&Trajectory> = trajectories.iter().collect();
            let rs = inter_robot_safety(&refs, env.robot_radius)?;
            let obstacle_ok = metrics::obstacle_safe(&refs, &env.scene, env.robot_radius);
            let cs = initial
                .pairs
                .iter()
                .zip(&trajectories)
                .all(|((start, _), t)| constraint_satisfaction(t, *start, v_max));
            let mut dtw_total = 0.0;
            let mut dfd_total = 0.0;
            let mut pairs = 0usize;
            for i in 0..trajectories.len() {
                for j in i + 1..trajectories.len() {
                    dtw_total +=
                        metrics::dtw(trajectories[i].points(), trajectories[j].points())?;
                    dfd_total +=
                        metrics::dfd(trajectories[i].points(), trajectories[j].points())?;
                    pairs += 1;
                }
            }
            let da = initial
                .pairs
                .iter()
                .zip(&trajectories)
                .map(|((_, goal), t)| data_adherence_proxy(t, &env.pattern(*goal)))
                .sum::<f64>()
                / trajectories.len() as f64;
            let safe = rs && obstacle_ok;
            safe_flags.push(safe);
            records.push(MetricRecord {
                su: u8::from(safe),
                rs: u8::from(rs),
                cs: u8::from(cs),
                dtw: if pairs > 0 { dtw_total / pairs as f64 } else { 0.0 },
                dfd: if pairs > 0 { dfd_total / pairs as f64 } else { 0.0 },
                obstacle_safe: u8::from(obstacle_ok),
                da_proxy: da,
                overlap: 0,
                converged: u8::from(batch.converged[s]),
            });
            if config.run.plots && c == 0 && s < PLOTTED_SAMPLES {
                for (v, t) in trajectories.iter().enumerate() {
                    for h in 0..t.horizon() {
                        let p = t.waypoint(h);
                        traj_points.push(TrajPoint {
                            config: c,
                            sample: s,
                            robot: v,
                            step: h,
                            x: p[0],
                            y: p[1],
                        });
                    }
                }
            }
        }
        per_config_safe.push(safe_flags);
    }

    Ok(CellData {
        records,
        per_config_safe,
        projection_calls,
        nonconverged,
        traj_points,
        plot_meta: PlotMeta {
            scenario: env.name.to_string(),
            dt: section.dt,
            v_max,
            robot_radius: env.robot_radius,
            obstacles: env
                .scene
                .circles()
                .iter()
                .map(|c| (c.center[0], c.center[1], c.radius))
                .collect(),
            endpoints: first_endpoints,
            corridor_boxes: Vec::new(),
            corridor_length: 0.0,
        },
    })
}

fn record_fields(r: &MetricRecord) -> [f64; 9] {
    [
        r.su as f64,
        r.rs as f64,
        r.cs as f64,
        r.dtw,
        r.dfd,
        r.obstacle_safe as f64,
        r.da_proxy,
        r.overlap as f64,
        r.converged as f64,
    ]
}

fn column_stats(records: &[MetricRecord]) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let n = records.len().max(1) as f64;
    let mut sums = [0.0f64; 9];
    for r in records {
        for (acc, v) in sums.iter_mut().zip(record_fields(r)) {
            *acc += v;
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let mut sq = [0.0f64; 9];
    for r in records {
        for ((acc, v), m) in sq.iter_mut().zip(record_fields(r)).zip(&means) {
            *acc += (v - m) * (v - m);
        }
    }
    let denom = if records.len() > 1 { records.len() as f64 - 1.0 } else { 1.0 };
    let mut mean_map = BTreeMap::new();
    let mut std_map = BTreeMap::new();
    for (i, name) in CSV_HEADER.iter().enumerate() {
        mean_map.insert(name.to_string(), means[i]);
        std_map.insert(name.to_string(), (sq[i] / denom).sqrt());
    }
    (mean_map, std_map)
}

fn write_samples_csv(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(CSV_HEADER)?;
    for r in records {
        writer.write_record(&[
            r.su.to_string(),
            r.rs.to_string(),
            r.cs.to_string(),
            format_float(r.dtw),
            format_float(r.dfd),
            r.obstacle_safe.to_string(),
            format_float(r.da_proxy),
            r.overlap.to_string(),
            r.converged.to_string(),
        ])?;
    }
    let bytes = writer.into_inner().map_err(|e| anyhow!("csv flush: {e}"))?;
    write_atomic(path, &bytes)
}

fn write_trajectories_csv(path: &Path, points: &[TrajPoint]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["config", "sample", "robot", "step", "x", "y"])?;
    for p in points {
        writer.write_record(&[
            p.config.to_string(),
            p.sample.to_string(),
            p.robot.to_string(),
            p.step.to_string(),
            format_float(p.x),
            format_float(p.y),
        ])?;
    }
    let bytes = writer.into_inner().map_err(|e| anyhow!("csv flush: {e}"))?;
    write_atomic(path, &bytes)
}

/// Shortest round-trip float formatting, stable across runs.
fn format_float(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // `{}` on f64 is already shortest-roundtrip in Rust.
    format!("{v}")
}

/// Writes through a temporary sibling then renames, so readers never observe
/// a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp: PathBuf = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}
