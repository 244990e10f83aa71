//! Independent oracles and random instance generators shared by the
//! integration tests.
#![allow(dead_code)]

use impulsive::astro::{gamma_table, OrbitElements, PhysicalConstants};
use impulsive::cost::{decompose_schedule, CostPiece, Interval};
use impulsive::{CostModel, GammaTable, ModeSchedule, Problem, ThrusterSet};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-half_width..half_width))
}

pub fn tetrahedral() -> CostModel {
    CostModel::PolyhedralThrusters(ThrusterSet::tetrahedral())
}

/// `Γ(t)` built from a few random harmonics, so profiles have genuine local
/// maxima instead of white noise.
pub fn smooth_gamma(rng: &mut ChaCha8Rng, grid: &[f64], n: usize, m: usize) -> GammaTable {
    let harmonics = 3;
    let span = grid.last().unwrap() - grid[0];
    let omega = std::f64::consts::TAU / span.max(1.0);
    let coeffs: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..harmonics)
        .map(|_| {
            (
                DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)),
                DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)),
            )
        })
        .collect();
    let mats = grid
        .iter()
        .map(|&t| {
            coeffs
                .iter()
                .enumerate()
                .fold(DMatrix::zeros(n, m), |acc, (h, (a, b))| {
                    let x = (h as f64 + 0.5) * omega * (t - grid[0]);
                    acc + a * x.cos() + b * x.sin()
                })
        })
        .collect();
    GammaTable::from_matrices(grid.to_vec(), mats).unwrap()
}

/// Splits the grid into equal consecutive blocks, one per cost.
pub fn block_schedule(grid: &[f64], costs: &[CostModel]) -> ModeSchedule {
    let per = grid.len().div_ceil(costs.len());
    let pieces: Vec<CostPiece> = costs
        .iter()
        .enumerate()
        .filter_map(|(j, c)| {
            let lo = j * per;
            if lo >= grid.len() {
                return None;
            }
            let hi = ((j + 1) * per).min(grid.len()) - 1;
            let interval = if j == 0 {
                Interval::closed(grid[lo], grid[hi])
            } else {
                Interval::open_closed(grid[lo - 1], grid[hi])
            };
            Some(CostPiece {
                interval,
                cost: c.clone(),
            })
        })
        .collect();
    decompose_schedule(&pieces, grid).unwrap()
}

pub fn random_problem(rng: &mut ChaCha8Rng, len: usize, costs: &[CostModel]) -> Problem {
    let grid: Vec<f64> = (0..len).map(|k| k as f64).collect();
    let gamma = smooth_gamma(rng, &grid, 6, 3);
    let w = uniform_vec(rng, 6, 1.0);
    Problem::new(w, gamma, block_schedule(&grid, costs)).unwrap()
}

pub const MDOT_TF: f64 = 117990.0;
pub const MDOT_W: [f64; 6] = [50.0, 5000.0, 100.0, 100.0, 0.0, 400.0];

pub fn mdot_orbit() -> OrbitElements {
    OrbitElements::from_km_deg(25000.0, 0.7, 40.0, 358.0, 0.0, 180.0).unwrap()
}

/// The validation scenario with the two-norm cost everywhere except the
/// closed two-hour windows around each perigee, where the tetrahedral
/// thrusters apply.
pub fn mdot_problem(step: f64) -> Problem {
    let k = PhysicalConstants::default();
    let oe = mdot_orbit();
    let n = (MDOT_TF / step).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * MDOT_TF / n as f64).collect();
    let gamma = gamma_table(&oe, 0.0, MDOT_TF, grid.clone(), &k).unwrap();
    let rates = impulsive::astro::SecularRates::of(&oe, &k);
    let m0 = oe.mean_anomaly;
    let windows: Vec<Interval> = (1..=3)
        .map(|r| {
            let tp = (std::f64::consts::TAU * r as f64 - m0) / rates.mean_anomaly;
            Interval::closed(tp - 3600.0, tp + 3600.0)
        })
        .collect();
    let mut thr = Vec::new();
    let mut two = Vec::new();
    for &t in &grid {
        if windows.iter().any(|w| w.contains(t)) {
            thr.push(t);
        } else {
            two.push(t);
        }
    }
    let schedule = ModeSchedule {
        modes: vec![
            impulsive::ControlMode::new(0, tetrahedral(), thr).unwrap(),
            impulsive::ControlMode::new(1, CostModel::TwoNorm, two).unwrap(),
        ],
    };
    Problem::new(DVector::from_column_slice(&MDOT_W), gamma, schedule).unwrap()
}

fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, buf: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if buf.len() == k {
            f(buf);
            return;
        }
        for i in start..n {
            buf.push(i);
            rec(i + 1, n, k, buf, f);
            buf.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}

/// Optimum of `max cᵀx, Ax ≤ b, |x| ≤ r` by enumerating every vertex.
pub fn lp_by_vertices(c: &[f64], a: &DMatrix<f64>, b: &[f64], r: f64) -> f64 {
    let n = c.len();
    let mut rows: Vec<(DVector<f64>, f64)> = (0..a.nrows()).map(|i| (a.row(i).transpose(), b[i])).collect();
    for k in 0..n {
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        rows.push((e.clone(), r));
        rows.push((-e, r));
    }
    let c = DVector::from_column_slice(c);
    let mut best = f64::NEG_INFINITY;
    for_each_subset(rows.len(), n, &mut |idx| {
        let m = DMatrix::from_fn(n, n, |i, j| rows[idx[i]].0[j]);
        let rhs = DVector::from_fn(n, |i, _| rows[idx[i]].1);
        let Some(x) = m.lu().solve(&rhs) else {
            return;
        };
        if rows.iter().all(|(row, bi)| row.dot(&x) <= bi + 1e-9 * (1.0 + bi.abs())) {
            best = best.max(c.dot(&x));
        }
    });
    best
}

/// Weighted NNLS optimum by trying every passive set.
pub fn nnls_by_subsets(y: &DMatrix<f64>, w: &DVector<f64>, q: &DMatrix<f64>) -> f64 {
    let k = y.ncols();
    let objective = |alpha: &DVector<f64>| {
        let r = y * alpha - w;
        r.dot(&(q * &r))
    };
    let mut best = objective(&DVector::zeros(k));
    for size in 1..=k {
        for_each_subset(k, size, &mut |idx| {
            let ys = y.select_columns(idx);
            let normal = ys.transpose() * q * &ys;
            let Some(sol) = normal.lu().solve(&(ys.transpose() * q * w)) else {
                return;
            };
            if sol.iter().all(|&a| a >= 0.0) {
                let mut alpha = DVector::zeros(k);
                for (&i, &a) in idx.iter().zip(sol.iter()) {
                    alpha[i] = a;
                }
                best = best.min(objective(&alpha));
            }
        });
    }
    best
}

/// Points on the boundary of `U(1)`: uniform points of the unit ball
/// (rejection sampled from the cube) scaled by their cost.
pub fn boundary_samples(cost: &CostModel, m: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = uniform_vec(rng, m, 1.0);
        let r = u.norm();
        if r > 1.0 || r == 0.0 {
            continue;
        }
        if let Ok(c) = cost.cost_of(u.as_slice()) {
            if c > 0.0 {
                out.push(u / c);
            }
        }
    }
    out
}

pub fn support_over(points: &[DVector<f64>], v: &DVector<f64>) -> f64 {
    points.iter().map(|u| u.dot(v)).fold(0.0, f64::max)
}
