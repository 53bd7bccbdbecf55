//! Independent oracles shared by the integration suites. None of these touch
//! the code paths they validate: the chain-projection oracle optimizes in
//! displacement coordinates with projected gradient descent, the simplex
//! oracle enumerates active sets, and the warping-distance oracles enumerate
//! every monotone path.

#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView2};

/// Exact-ish solution of the velocity-chain projection QP by projected
/// gradient descent on the displacement parameterization. The feasible set is
/// a product of balls there, so each iterate is clipped row-wise; the
/// objective is strongly convex, which makes the iteration converge linearly
/// to the unique projection.
pub fn chain_projection_oracle(
    target: &[[f64; 2]],
    start: [f64; 2],
    radius: f64,
    iterations: usize,
) -> Vec<[f64; 2]> {
    let horizon = target.len();
    // Z -> X is the cumulative-sum map L; the gradient Lipschitz constant of
    // |L Z - (target - start)|^2 is bounded by 2 * H(H+1)/2.
    let step = 1.0 / (horizon as f64 * (horizon as f64 + 1.0));
    let mut z: Vec<[f64; 2]> = {
        let mut prev = start;
        target
            .iter()
            .map(|p| {
                let d = [p[0] - prev[0], p[1] - prev[1]];
                prev = *p;
                clip(d, radius)
            })
            .collect()
    };
    let mut positions = vec![[0.0f64; 2]; horizon];
    let mut grad = vec![[0.0f64; 2]; horizon];
    for _ in 0..iterations {
        let mut acc = start;
        for h in 0..horizon {
            acc = [acc[0] + z[h][0], acc[1] + z[h][1]];
            positions[h] = acc;
        }
        // grad_{Z_j} = sum_{h >= j} 2 (X_h - target_h), via a suffix sum.
        let mut suffix = [0.0f64; 2];
        for h in (0..horizon).rev() {
            suffix[0] += 2.0 * (positions[h][0] - target[h][0]);
            suffix[1] += 2.0 * (positions[h][1] - target[h][1]);
            grad[h] = suffix;
        }
        for h in 0..horizon {
            let moved = [z[h][0] - step * grad[h][0], z[h][1] - step * grad[h][1]];
            z[h] = clip(moved, radius);
        }
    }
    let mut acc = start;
    z.iter()
        .map(|d| {
            acc = [acc[0] + d[0], acc[1] + d[1]];
            acc
        })
        .collect()
}

fn clip(row: [f64; 2], radius: f64) -> [f64; 2] {
    let norm = (row[0] * row[0] + row[1] * row[1]).sqrt();
    if norm > radius {
        [row[0] * radius / norm, row[1] * radius / norm]
    } else {
        row
    }
}

pub fn chain_objective(points: &[[f64; 2]], target: &[[f64; 2]]) -> f64 {
    points
        .iter()
        .zip(target)
        .map(|(p, t)| (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2))
        .sum()
}

/// Exact projection onto the convex hull of exemplar columns by enumerating
/// every active set: on the optimal face the equality-constrained
/// least-squares solution has nonnegative weights.
pub fn simplex_projection_oracle(exemplars: &Array2<f64>, x: &Array1<f64>) -> (Array1<f64>, f64) {
    let m = exemplars.ncols();
    let mut best: Option<(Array1<f64>, f64)> = None;
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = support.len();
        // KKT system of min |E_S w - x|^2 subject to sum w = 1.
        let mut a = vec![vec![0.0f64; k + 1]; k + 1];
        let mut rhs = vec![0.0f64; k + 1];
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                a[r][c] = 2.0 * exemplars.column(i).dot(&exemplars.column(j));
            }
            a[r][k] = 1.0;
            a[k][r] = 1.0;
            rhs[r] = 2.0 * exemplars.column(i).dot(x);
        }
        rhs[k] = 1.0;
        let Some(sol) = solve_dense(a, rhs) else { continue };
        if sol[..k].iter().any(|&w| w < -1e-9) {
            continue;
        }
        let mut weights = Array1::zeros(m);
        for (r, &i) in support.iter().enumerate() {
            weights[i] = sol[r].max(0.0);
        }
        let total: f64 = weights.sum();
        weights.mapv_inplace(|w| w / total);
        let point = exemplars.dot(&weights);
        let objective = (&point - x).mapv(|v| v * v).sum();
        if best.as_ref().map_or(true, |(_, obj)| objective < *obj) {
            best = Some((weights, objective));
        }
    }
    let (weights, objective) = best.expect("at least one face is feasible");
    (weights, objective)
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite")
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

fn local_cost(a: ArrayView2<'_, f64>, i: usize, b: ArrayView2<'_, f64>, j: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..a.ncols() {
        let d = a[(i, c)] - b[(j, c)];
        acc += d * d;
    }
    acc.sqrt()
}

/// Minimum warping-path total cost by exhaustive enumeration.
pub fn dtw_bruteforce(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    fn recurse(
        a: ArrayView2<'_, f64>,
        b: ArrayView2<'_, f64>,
        i: usize,
        j: usize,
        acc: f64,
        best: &mut f64,
    ) {
        let total = acc + local_cost(a, i, b, j);
        if i + 1 == a.nrows() && j + 1 == b.nrows() {
            if total < *best {
                *best = total;
            }
            return;
        }
        if i + 1 < a.nrows() {
            recurse(a, b, i + 1, j, total, best);
        }
        if j + 1 < b.nrows() {
            recurse(a, b, i, j + 1, total, best);
        }
        if i + 1 < a.nrows() && j + 1 < b.nrows() {
            recurse(a, b, i + 1, j + 1, total, best);
        }
    }
    let mut best = f64::INFINITY;
    recurse(a, b, 0, 0, 0.0, &mut best);
    best
}

/// Minimum over monotone couplings of the maximum pointwise distance, by
/// exhaustive enumeration.
pub fn dfd_bruteforce(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    fn recurse(
        a: ArrayView2<'_, f64>,
        b: ArrayView2<'_, f64>,
        i: usize,
        j: usize,
        acc: f64,
        best: &mut f64,
    ) {
        let total = acc.max(local_cost(a, i, b, j));
        if i + 1 == a.nrows() && j + 1 == b.nrows() {
            if total < *best {
                *best = total;
            }
            return;
        }
        if i + 1 < a.nrows() {
            recurse(a, b, i + 1, j, total, best);
        }
        if j + 1 < b.nrows() {
            recurse(a, b, i, j + 1, total, best);
        }
        if i + 1 < a.nrows() && j + 1 < b.nrows() {
            recurse(a, b, i + 1, j + 1, total, best);
        }
    }
    let mut best = f64::INFINITY;
    recurse(a, b, 0, 0, 0.0, &mut best);
    best
}

/// A tiny deterministic generator for test instances, independent of the
/// library's stream derivation.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let x = self.0;
        x ^ (x >> 31)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + u * (hi - lo)
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform(f64::MIN_POSITIVE, 1.0);
        let u2 = self.uniform(0.0, 1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
