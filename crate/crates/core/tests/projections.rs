//! Solver-grade checks of the projection operators against independent
//! oracles, plus the feasibility / idempotence / nonexpansiveness contracts.

mod common;

use common::{chain_objective, chain_projection_oracle, simplex_projection_oracle, TestRng};
use ndarray::{Array1, Array2};
use pcd_core::projection::{
    AdmmParams, ConvexHullProjection, Projection, VelocityChainProjection,
};

fn random_chain_instance(rng: &mut TestRng, horizon: usize) -> (Vec<[f64; 2]>, Array1<f64>) {
    let mut flat = Array1::zeros(horizon * 2);
    let mut rows = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let p = [rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)];
        flat[2 * h] = p[0];
        flat[2 * h + 1] = p[1];
        rows.push(p);
    }
    (rows, flat)
}

fn tight_chain(start: [f64; 2], radius: f64) -> VelocityChainProjection {
    VelocityChainProjection::new(
        start,
        radius,
        1.0,
        AdmmParams { xi: 10.0, max_iters: 20_000, tolerance: 1e-7 },
    )
    .unwrap()
}

#[test]
fn admm_matches_the_displacement_space_oracle() {
    let mut rng = TestRng::new(31);
    for case in 0..50 {
        let horizon = 1 + (rng.next_u64() as usize) % 8;
        let radius = rng.uniform(0.3, 1.5);
        let start = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let (rows, flat) = random_chain_instance(&mut rng, horizon);
        let op = tight_chain(start, radius);
        let out = op.project_flat(flat.view()).unwrap();
        assert!(out.converged, "case {case} did not converge");
        let oracle = chain_projection_oracle(&rows, start, radius, 300_000);
        for h in 0..horizon {
            for c in 0..2 {
                let got = out.point[2 * h + c];
                let want = oracle[h][c];
                assert!(
                    (got - want).abs() < 1e-4,
                    "case {case} waypoint {h}: {got} vs {want}"
                );
            }
        }
        let admm_points: Vec<[f64; 2]> =
            (0..horizon).map(|h| [out.point[2 * h], out.point[2 * h + 1]]).collect();
        let obj_admm = chain_objective(&admm_points, &rows);
        let obj_oracle = chain_objective(&oracle, &rows);
        assert!(
            obj_admm <= obj_oracle + 1e-3,
            "case {case}: objective {obj_admm} vs oracle {obj_oracle}"
        );
    }
}

#[test]
fn batched_admm_agrees_with_the_oracle_per_instance() {
    let mut rng = TestRng::new(77);
    let horizon = 5;
    let radius = 0.8;
    let op = tight_chain([0.2, -0.1], radius);
    let instances: Vec<(Vec<[f64; 2]>, Array1<f64>)> =
        (0..8).map(|_| random_chain_instance(&mut rng, horizon)).collect();
    let views: Vec<_> = instances.iter().map(|(_, flat)| flat.view()).collect();
    let outs = op.project_flat_batch(&views).unwrap();
    for (idx, ((rows, _), out)) in instances.iter().zip(&outs).enumerate() {
        let oracle = chain_projection_oracle(rows, [0.2, -0.1], radius, 300_000);
        for h in 0..horizon {
            for c in 0..2 {
                assert!(
                    (out.point[2 * h + c] - oracle[h][c]).abs() < 1e-4,
                    "instance {idx} diverges from oracle"
                );
            }
        }
    }
}

#[test]
fn velocity_chain_feasibility_on_random_inputs() {
    let mut rng = TestRng::new(5);
    let op = VelocityChainProjection::new([0.0, 0.0], 0.7, 1.0, AdmmParams::navigation()).unwrap();
    for _ in 0..100 {
        let horizon = 1 + (rng.next_u64() as usize) % 12;
        let (_, flat) = random_chain_instance(&mut rng, horizon);
        let out = op.project_flat(flat.view()).unwrap();
        let mut prev = [0.0, 0.0];
        for h in 0..horizon {
            let p = [out.point[2 * h], out.point[2 * h + 1]];
            let d = ((p[0] - prev[0]).powi(2) + (p[1] - prev[1]).powi(2)).sqrt();
            assert!(d <= 0.7 + 1e-6, "displacement {d} exceeds the limit");
            prev = p;
        }
    }
}

#[test]
fn velocity_chain_idempotence_and_nonexpansiveness() {
    let mut rng = TestRng::new(99);
    let op = tight_chain([0.0, 0.0], 0.9);
    for _ in 0..25 {
        let (_, a) = random_chain_instance(&mut rng, 6);
        let (_, b) = random_chain_instance(&mut rng, 6);
        let pa = op.project_flat(a.view()).unwrap().point;
        let pb = op.project_flat(b.view()).unwrap().point;
        let papa = op.project_flat(pa.view()).unwrap().point;
        let drift = (&papa - &pa).mapv(f64::abs).fold(0.0f64, |m, v| m.max(*v));
        assert!(drift < 1e-6, "idempotence drift {drift}");
        let din = (&a - &b).mapv(|v| v * v).sum().sqrt();
        let dout = (&pa - &pb).mapv(|v| v * v).sum().sqrt();
        assert!(dout <= din + 1e-6, "expansion: {dout} > {din}");
    }
}

fn random_hull(rng: &mut TestRng, dim: usize, count: usize) -> Array2<f64> {
    Array2::from_shape_fn((dim, count), |_| rng.normal())
}

/// A learning rate safely below the curvature of the simplex objective.
fn hull_learning_rate(exemplars: &Array2<f64>) -> f64 {
    let gram = exemplars.t().dot(exemplars);
    let bound = gram
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    0.5 / (2.0 * bound).max(1e-9)
}

#[test]
fn hull_projection_matches_the_active_set_oracle() {
    let mut rng = TestRng::new(12);
    for case in 0..30 {
        let dim = 1 + (rng.next_u64() as usize) % 16;
        let count = 1 + (rng.next_u64() as usize) % 5;
        let exemplars = random_hull(&mut rng, dim, count);
        let x = Array1::from_shape_fn(dim, |_| 1.5 * rng.normal());
        let op = ConvexHullProjection::new(
            exemplars.clone(),
            hull_learning_rate(&exemplars),
            200_000,
        )
        .unwrap();
        let (point, weights) = op.project_with_weights(x.view()).unwrap();
        let (oracle_weights, _) = simplex_projection_oracle(&exemplars, &x);
        let oracle_point = exemplars.dot(&oracle_weights);
        for j in 0..dim {
            assert!(
                (point[j] - oracle_point[j]).abs() < 1e-3,
                "case {case} coord {j}: {} vs {}",
                point[j],
                oracle_point[j]
            );
        }
        let total: f64 = weights.sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(weights.iter().all(|&w| w >= 0.0));
    }
}

#[test]
fn hull_projection_satisfies_the_variational_inequality() {
    let mut rng = TestRng::new(21);
    let exemplars = random_hull(&mut rng, 6, 4);
    let op = ConvexHullProjection::new(
        exemplars.clone(),
        hull_learning_rate(&exemplars),
        200_000,
    )
    .unwrap();
    let x = Array1::from_shape_fn(6, |_| 2.0 * rng.normal());
    let (projected, _) = op.project_with_weights(x.view()).unwrap();
    for _ in 0..20 {
        // A random feasible point of the hull.
        let mut lambda = Array1::from_shape_fn(4, |_| rng.uniform(0.0, 1.0));
        let total: f64 = lambda.sum();
        lambda.mapv_inplace(|v| v / total);
        let feasible = exemplars.dot(&lambda);
        let residual = &x - &projected;
        let direction = &feasible - &projected;
        let inner = residual.dot(&direction);
        assert!(inner <= 1e-3, "variational inequality violated: {inner}");
    }
}

#[test]
fn hull_projection_is_idempotent_and_nonexpansive() {
    let mut rng = TestRng::new(55);
    let exemplars = random_hull(&mut rng, 5, 3);
    let eta = hull_learning_rate(&exemplars);
    let op = ConvexHullProjection::new(exemplars, eta, 200_000).unwrap();
    for _ in 0..10 {
        let a = Array1::from_shape_fn(5, |_| 2.0 * rng.normal());
        let b = Array1::from_shape_fn(5, |_| 2.0 * rng.normal());
        let (pa, _) = op.project_with_weights(a.view()).unwrap();
        let (pb, _) = op.project_with_weights(b.view()).unwrap();
        let (papa, _) = op.project_with_weights(pa.view()).unwrap();
        let drift = (&papa - &pa).mapv(f64::abs).fold(0.0f64, |m, v| m.max(*v));
        assert!(drift < 1e-4, "idempotence drift {drift}");
        let din = (&a - &b).mapv(|v| v * v).sum().sqrt();
        let dout = (&pa - &pb).mapv(|v| v * v).sum().sqrt();
        assert!(dout <= din + 1e-4);
    }
}

#[test]
fn closed_form_feasibility_on_random_inputs() {
    let mut rng = TestRng::new(808);
    let box_op =
        Projection::box_bounds(Array1::from_vec(vec![-1.0, 0.0]), Array1::from_vec(vec![1.0, 2.0]))
            .unwrap();
    let ball_op = Projection::ball(Array1::from_vec(vec![0.5, -0.5]), 1.2).unwrap();
    for _ in 0..100 {
        let x = Array1::from_shape_fn(2, |_| rng.uniform(-6.0, 6.0));
        let boxed = box_op.project(x.view()).unwrap().point;
        assert!(boxed[0] >= -1.0 && boxed[0] <= 1.0 && boxed[1] >= 0.0 && boxed[1] <= 2.0);
        let balled = ball_op.project(x.view()).unwrap().point;
        let d = ((balled[0] - 0.5).powi(2) + (balled[1] + 0.5).powi(2)).sqrt();
        assert!(d <= 1.2 + 1e-12);
    }
}
