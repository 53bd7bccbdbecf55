//! Scratch probe for calibrating acceptance-test seeds and sweep values.
//! Not part of the deliverable test suite.

use std::time::Instant;

use ndarray::{array, Array1};
use pcd_core::metrics::{constraint_satisfaction, inter_robot_safety, Trajectory};
use pcd_core::sampler::{
    run_cg_reduction, run_pcd_ddpm, run_pcd_lmc, CoupledSystem, CoupledVariable, LmcParams,
};
use pcd_core::scenario::{
    build_corridor, build_nav_system, sample_initial_configuration, CorridorOptions,
    CorridorSpec, CouplingKind, InitialConfiguration, NavEnvironment, NavParams,
    EMPTY_V_MAX_PRESETS, HIGHWAYS_V_MAX_PRESETS,
};
use pcd_core::schedule::DiffusionSchedule;
use pcd_core::score::ScoreModel;
use pcd_core::projection::Projection;

fn moments(samples: ndarray::ArrayView2<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (b, d) = (samples.nrows(), samples.ncols());
    let mut mean = vec![0.0; d];
    for row in samples.rows() {
        for j in 0..d {
            mean[j] += row[j];
        }
    }
    for m in mean.iter_mut() {
        *m /= b as f64;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for row in samples.rows() {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    for r in cov.iter_mut() {
        for v in r.iter_mut() {
            *v /= b as f64 - 1.0;
        }
    }
    (mean, cov)
}

fn probe_lmc_moments() {
    println!("== LMC stationarity, N(0,I) 2-D, delta=1e-3, T=50k, B=256");
    for seed in 0..6u64 {
        let var = CoupledVariable::new(
            "x",
            ScoreModel::gaussian(array![0.0, 0.0], 1.0).unwrap(),
            Projection::Identity,
        );
        let mut system = CoupledSystem::new(vec![var]);
        system.lmc = Some(LmcParams::new(1e-3, 50_000));
        system.seed = seed;
        let t0 = Instant::now();
        let batch = run_pcd_lmc(&system, 256).unwrap();
        let (mean, cov) = moments(batch.variables[0].view());
        println!(
            "seed {seed}: mean=({:+.4},{:+.4}) cov=[{:.4},{:.4};{:.4}] in {:?}",
            mean[0], mean[1], cov[0][0], cov[0][1], cov[1][1], t0.elapsed()
        );
    }
}

fn probe_ddpm_moments() {
    println!("== DDPM stationarity, N(0,I) 2-D, T=100, k=1, B=512");
    let schedule = DiffusionSchedule::linear(100, 1e-4, 0.02).unwrap();
    for seed in 0..6u64 {
        let var = CoupledVariable::new(
            "x",
            ScoreModel::gaussian(array![0.0, 0.0], 1.0).unwrap(),
            Projection::Identity,
        );
        let mut system = CoupledSystem::new(vec![var]);
        system.schedule = Some(schedule.clone());
        system.seed = seed;
        let batch = run_pcd_ddpm(&system, 512).unwrap();
        let (mean, cov) = moments(batch.variables[0].view());
        println!(
            "seed {seed}: mean=({:+.4},{:+.4}) cov=[{:.4},{:.4};{:.4}]",
            mean[0], mean[1], cov[0][0], cov[0][1], cov[1][1]
        );
    }
}

fn probe_cg() {
    println!("== CG reduction: prior N(0,1), y0=2, gamma=1 -> posterior N(1, 0.5), B=1e4");
    for seed in 0..4u64 {
        let t0 = Instant::now();
        let batch = run_cg_reduction(
            ScoreModel::gaussian(array![0.0], 1.0).unwrap(),
            1.0,
            array![2.0],
            1.0,
            LmcParams::new(2e-3, 3000),
            seed,
            10_000,
        )
        .unwrap();
        let (mean, cov) = moments(batch.variables[0].view());
        println!("seed {seed}: mean={:.4} var={:.4} in {:?}", mean[0], cov[0][0], t0.elapsed());
    }
}

fn probe_corridor() {
    println!("== Corridor: baseline (gamma=0, proj on) vs SHD sweep, B=4096");
    let spec = CorridorSpec::default();
    let t0 = Instant::now();
    let overlap_rate = |system: &CoupledSystem| -> (f64, f64) {
        let batch = run_pcd_lmc(system, 4096).unwrap();
        let mut overlaps = 0usize;
        let mut violations = 0usize;
        for s in 0..4096 {
            let x = batch.sample(0, s)[0];
            let y = batch.sample(1, s)[0];
            if spec.blocks_overlap(x, y) {
                overlaps += 1;
            }
            let (lo1, hi1) = spec.feasible_box(spec.block_lengths.0);
            let (lo2, hi2) = spec.feasible_box(spec.block_lengths.1);
            if !(lo1..=hi1).contains(&x) || !(lo2..=hi2).contains(&y) {
                violations += 1;
            }
        }
        (overlaps as f64 / 4096.0, violations as f64 / 4096.0)
    };
    let base = build_corridor(
        &spec,
        &CorridorOptions { coupling: CouplingKind::None, gamma: 0.0, ..Default::default() },
    )
    .unwrap();
    let (b_overlap, b_viol) = overlap_rate(&base);
    println!("baseline gamma=0: overlap={b_overlap:.4} violations={b_viol:.4}");

    let unproj = build_corridor(
        &spec,
        &CorridorOptions {
            coupling: CouplingKind::None,
            gamma: 0.0,
            projection: false,
            ..Default::default()
        },
    )
    .unwrap();
    let (u_overlap, u_viol) = overlap_rate(&unproj);
    println!("no projection:  overlap={u_overlap:.4} violations={u_viol:.4}");

    for gamma in [4.0, 8.0, 16.0, 32.0, 48.0] {
        let system = build_corridor(
            &spec,
            &CorridorOptions {
                coupling: CouplingKind::SquaredHinge,
                gamma,
                lmc: LmcParams::new(0.005, 2000),
                ..Default::default()
            },
        )
        .unwrap();
        let (overlap, viol) = overlap_rate(&system);
        println!("SHD gamma={gamma}: overlap={overlap:.4} violations={viol:.4}");
    }
    println!("corridor probes in {:?}", t0.elapsed());
}

fn head_on_config(env: &NavEnvironment, idx: u64) -> InitialConfiguration {
    let mut r = pcd_core::rng::stream(900 + idx, [idx, 0, 0]);
    use rand::Rng;
    let angle: f64 = r.gen_range(0.0..std::f64::consts::TAU);
    let off: f64 = r.gen_range(-0.8..0.8);
    let len = 6.0;
    let u = [angle.cos(), angle.sin()];
    let perp = [-u[1], u[0]];
    let s1 = [-len * u[0], -len * u[1]];
    let g1 = [len * u[0], len * u[1]];
    let s2 = [g1[0] + perp[0] * off + perp[0] * 1.2, g1[1] + perp[1] * off + perp[1] * 1.2];
    let g2 = [s1[0] + perp[0] * off + perp[0] * 1.2, s1[1] + perp[1] * off + perp[1] * 1.2];
    InitialConfiguration::new(env, vec![(s1, g1), (s2, g2)]).unwrap()
}

fn probe_nav_feasibility() {
    println!("== Nav feasibility: Empty/Highways, N in {{2,4}}, B=128, DDPM T=25");
    let schedule = DiffusionSchedule::linear(25, 0.02, 0.5).unwrap();
    let t0 = Instant::now();
    for (env, v_max) in [
        (NavEnvironment::empty(), EMPTY_V_MAX_PRESETS[0]),
        (NavEnvironment::highways(), HIGHWAYS_V_MAX_PRESETS[0]),
    ] {
        for n in [2usize, 4] {
            let config = sample_initial_configuration(&env, n, 42).unwrap();
            let params = NavParams {
                v_max,
                gamma: 1.0,
                seed: 7,
                ..NavParams::default()
            };
            let system = build_nav_system(&env, &config, &params, schedule.clone()).unwrap();
            let tc = Instant::now();
            let batch = run_pcd_ddpm(&system, 128).unwrap();
            let mut cs_ok = 0usize;
            for s in 0..128 {
                let mut all = true;
                for (v, (start, _)) in config.pairs.iter().enumerate() {
                    let traj = Trajectory::from_flat(
                        batch.sample(v, s).as_slice().unwrap(),
                        params.dt,
                    )
                    .unwrap();
                    if !constraint_satisfaction(&traj, *start, v_max) {
                        all = false;
                    }
                }
                if all {
                    cs_ok += 1;
                }
            }
            println!(
                "{} N={n}: cs_ok={cs_ok}/128 nonconv={}/{} calls, {:?}",
                env.name, batch.nonconverged_projections, batch.projection_calls, tc.elapsed()
            );
        }
    }
    println!("nav feasibility total {:?}", t0.elapsed());
}

fn probe_head_on_rs() {
    println!("== Head-on Empty N=2: RS baseline vs PCD-SHD, 10 configs x B=128");
    let env = NavEnvironment::empty();
    let schedule = DiffusionSchedule::linear(25, 0.02, 0.5).unwrap();
    for gamma in [0.0, 0.3, 0.6, 1.0, 1.5, 3.0] {
        let t0 = Instant::now();
        let mut total_rs = 0.0;
        let configs = 10;
        for c in 0..configs {
            let config = head_on_config(&env, c as u64);
            let params = NavParams {
                v_max: EMPTY_V_MAX_PRESETS[0],
                gamma,
                coupling: if gamma == 0.0 { CouplingKind::None } else { CouplingKind::SquaredHinge },
                seed: 1000 + c as u64,
                ..NavParams::default()
            };
            let system = build_nav_system(&env, &config, &params, schedule.clone()).unwrap();
            let batch = run_pcd_ddpm(&system, 128).unwrap();
            let mut rs_hits = 0usize;
            for s in 0..128 {
                let t1 = Trajectory::from_flat(batch.sample(0, s).as_slice().unwrap(), 1.0).unwrap();
                let t2 = Trajectory::from_flat(batch.sample(1, s).as_slice().unwrap(), 1.0).unwrap();
                if inter_robot_safety(&[&t1, &t2], env.robot_radius).unwrap() {
                    rs_hits += 1;
                }
            }
            total_rs += rs_hits as f64 / 128.0;
        }
        println!(
            "gamma={gamma}: mean RS = {:.4} ({:?})",
            total_rs / configs as f64,
            t0.elapsed()
        );
    }
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    match which.as_str() {
        "lmc" => probe_lmc_moments(),
        "ddpm" => probe_ddpm_moments(),
        "cg" => probe_cg(),
        "corridor" => probe_corridor(),
        "nav" => probe_nav_feasibility(),
        "headon" => probe_head_on_rs(),
        _ => {
            probe_ddpm_moments();
            probe_cg();
            probe_corridor();
            probe_nav_feasibility();
            probe_head_on_rs();
            probe_lmc_moments();
        }
    }
}
