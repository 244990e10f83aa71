//! Reference solvers: the direct discretized primal as one LP, and an
//! indirect method that enforces the dual constraint at every grid time.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{sample_directions, CostError, CostModel};
use crate::dual::{profile_all, solve_restricted_dual, CandidateSet, DualError};
use crate::lp::{lp_solve, Constraints, LpError};
use crate::planner::{extract_inputs, plan, reached_residual, Impulse, ManeuverPlan, PlanError, PlannerConfig};
use crate::problem::Problem;

/// Directions used to measure the approximation factor.
const RHO_SAMPLES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("target unreachable on grid")]
    Unreachable,
    #[error("approximation needs at least 4 facets, got {0}")]
    TooFewFacets(usize),
    #[error("direct plan misses the target: residual {0:e}")]
    Residual(f64),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Finite inner approximation of a unit sublevel set.
#[derive(Debug, Clone)]
pub struct PolyhedralApprox {
    pub source: CostModel,
    /// Unit-cost points of `U(1)`.
    pub generators: Vec<DVector<f64>>,
    /// `max_v h_exact(v) / h_approx(v)` over sampled directions.
    pub rho: f64,
}

/// Vertices of polyhedral costs; support maximizers along `facets` spread
/// directions otherwise.
pub fn polyhedral_approx(cost: &CostModel, m: usize, facets: usize) -> Result<PolyhedralApprox, ReferenceError> {
    if facets < 4 {
        return Err(ReferenceError::TooFewFacets(facets));
    }
    cost.check_dim(m)?;
    if let Some(generators) = cost.vertices(m) {
        return Ok(PolyhedralApprox {
            source: cost.clone(),
            generators,
            rho: 1.0,
        });
    }
    let mut generators = Vec::with_capacity(facets);
    for d in sample_directions(m, facets) {
        for g in cost.support_generators(d.as_slice())? {
            generators.push(g);
        }
    }
    let mut rho = 1.0f64;
    for v in sample_directions(m, RHO_SAMPLES) {
        let exact = cost.support(v.as_slice());
        let approx = generators.iter().map(|g| g.dot(&v)).fold(f64::NEG_INFINITY, f64::max);
        if approx > 0.0 {
            rho = rho.max(exact / approx);
        } else {
            rho = f64::INFINITY;
        }
    }
    Ok(PolyhedralApprox {
        source: cost.clone(),
        generators,
        rho,
    })
}

/// Plan produced by a reference solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePlan {
    pub impulses: Vec<Impulse>,
    pub total_cost: f64,
    /// LP or dual objective the solver certified [m/s].
    pub objective: f64,
    pub residual: f64,
    /// Largest approximation factor over the modes (1 for the indirect
    /// solver).
    pub rho: f64,
    pub iterations: usize,
}

/// Minimum of `Σ α` over all (time, generator) pairs with `Σ α Γ(t)g = w`.
///
/// Solved through its LP dual, `max λᵀw` subject to `(Γ(t)g)ᵀλ ≤ 1`; the
/// constraint multipliers are the coefficients `α`.
pub fn solve_direct(problem: &Problem, facets: usize) -> Result<ReferencePlan, ReferenceError> {
    let n = problem.state_dim();
    let m = problem.control_dim();
    let wn = problem.w.norm();
    if wn == 0.0 {
        return Ok(ReferencePlan {
            impulses: Vec::new(),
            total_cost: 0.0,
            objective: 0.0,
            residual: 0.0,
            rho: 1.0,
            iterations: 0,
        });
    }
    let approx: Vec<PolyhedralApprox> = problem
        .schedule
        .modes
        .iter()
        .map(|md| polyhedral_approx(&md.cost, m, facets))
        .collect::<Result<_, _>>()?;
    let rho = approx.iter().map(|a| a.rho).fold(1.0, f64::max);
    let w_hat: Vec<f64> = problem.w.iter().map(|x| x / wn).collect();

    // Columns (mode, grid index, generator index), scaled as in the dual
    // solver so the LP variables are of order one.
    let mut cols = Vec::new();
    let mut rows = Constraints::new(n);
    let mut norms = Vec::new();
    for (j, ap) in approx.iter().enumerate() {
        for &k in problem.mode_indices(j) {
            for (gi, g) in ap.generators.iter().enumerate() {
                let y = problem.gamma.apply(k, g.as_slice());
                norms.push(y.norm());
                cols.push((j, k, gi, y));
            }
        }
    }
    norms.retain(|x| *x > 0.0);
    if norms.is_empty() {
        return Err(ReferenceError::Unreachable);
    }
    norms.sort_by(f64::total_cmp);
    let sigma = norms[norms.len() / 2];
    for (_, _, _, y) in &cols {
        let scaled: Vec<f64> = y.iter().map(|x| x / sigma).collect();
        rows.push(&scaled, 1.0);
    }

    let mut radius = 10.0;
    let mut lp = lp_solve(&w_hat, &rows, radius)?;
    let mut doublings = 0;
    while lp.box_active() {
        doublings += 1;
        if doublings > 30 {
            return Err(ReferenceError::Unreachable);
        }
        radius *= 2.0;
        lp = lp_solve(&w_hat, &rows, radius)?;
    }

    let mut impulses: Vec<Impulse> = Vec::new();
    for ((j, k, gi, _), &d) in cols.iter().zip(&lp.duals) {
        if d <= 0.0 {
            continue;
        }
        let alpha = d * wn / sigma;
        let g = &approx[*j].generators[*gi];
        match impulses.iter_mut().find(|imp| imp.mode == *j && imp.index == *k) {
            Some(imp) => {
                for (u, gv) in imp.u.iter_mut().zip(g.iter()) {
                    *u += alpha * gv;
                }
            }
            None => impulses.push(Impulse {
                t: problem.time(*k),
                mode: *j,
                index: *k,
                u: g.iter().map(|gv| alpha * gv).collect(),
                cost: 0.0,
            }),
        }
    }
    impulses.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.mode.cmp(&b.mode)));
    let mut total_cost = 0.0;
    for imp in &mut impulses {
        imp.cost = problem.schedule.modes[imp.mode].cost.cost_of(&imp.u)?;
        total_cost += imp.cost;
    }
    let residual = reached_residual(problem, &impulses);
    if residual > 1e-6 {
        return Err(ReferenceError::Residual(residual));
    }
    Ok(ReferencePlan {
        impulses,
        total_cost,
        objective: lp.objective * wn / sigma,
        residual,
        rho,
        iterations: lp.iterations,
    })
}

/// Dual over every grid time at once, then extraction at the times where
/// the profile is within 1% of one.
pub fn solve_naive_indirect(problem: &Problem, config: &PlannerConfig) -> Result<ReferencePlan, ReferenceError> {
    if problem.w.iter().all(|x| *x == 0.0) {
        return Ok(ReferencePlan {
            impulses: Vec::new(),
            total_cost: 0.0,
            objective: 0.0,
            residual: 0.0,
            rho: 1.0,
            iterations: 0,
        });
    }
    let full = CandidateSet::full(problem);
    let dual = solve_restricted_dual(problem, &full, &config.dual)?;
    let profiles = profile_all(problem, dual.lambda.as_slice());
    let selected = CandidateSet::from_pairs(
        problem.mode_count(),
        profiles
            .iter()
            .flatten()
            .filter(|s| s.p >= 0.99)
            .map(|s| (s.mode, s.index)),
    );
    let ex = extract_inputs(problem, &dual, &selected, config)?;
    Ok(ReferencePlan {
        impulses: ex.impulses,
        total_cost: ex.total_cost,
        objective: dual.objective,
        residual: ex.residual,
        rho: 1.0,
        iterations: dual.rounds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub min_sec: f64,
    pub mean_sec: f64,
    pub max_sec: f64,
}

impl Timing {
    pub fn from_samples(s: &[f64]) -> Self {
        let min_sec = s.iter().copied().fold(f64::INFINITY, f64::min);
        let max_sec = s.iter().copied().fold(0.0, f64::max);
        let mean_sec = s.iter().sum::<f64>() / s.len().max(1) as f64;
        Self {
            min_sec,
            mean_sec,
            max_sec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRow {
    pub solver: String,
    pub cost_mms: Option<f64>,
    /// Relative difference to the planner cost.
    pub cost_gap: Option<f64>,
    pub iterations: Option<usize>,
    pub timing: Option<Timing>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub repetitions: usize,
    pub facets: usize,
    pub rho: f64,
    pub lower_bound_mms: Option<f64>,
    pub rows: Vec<SolverRow>,
}

fn timed<T, E: std::fmt::Display>(reps: usize, mut f: impl FnMut() -> Result<T, E>) -> (Result<T, String>, Vec<f64>) {
    let mut times = Vec::with_capacity(reps);
    let mut last = None;
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        let r = f();
        times.push(start.elapsed().as_secs_f64());
        match r {
            Ok(v) => last = Some(v),
            Err(e) => return (Err(e.to_string()), times),
        }
    }
    (Ok(last.expect("at least one repetition")), times)
}

/// Runs the planner, the naive indirect solver and the direct LP in turn,
/// `reps` times each.
pub fn compare(problem: &Problem, config: &PlannerConfig, reps: usize, facets: usize) -> CompareReport {
    let (planner, t_plan) = timed(reps, || plan(problem, config));
    let (naive, t_naive) = timed(reps, || solve_naive_indirect(problem, config));
    let (direct, t_direct) = timed(reps, || solve_direct(problem, facets));

    let base = planner.as_ref().ok().map(|p: &ManeuverPlan| p.total_cost);
    let gap = |c: f64| base.map(|b| if b > 0.0 { (c - b) / b } else { c - b });
    let rows = vec![
        match &planner {
            Ok(p) => SolverRow {
                solver: "planner".into(),
                cost_mms: Some(p.total_cost * 1e3),
                cost_gap: Some(0.0),
                iterations: Some(p.iterations),
                timing: Some(Timing::from_samples(&t_plan)),
                error: None,
            },
            Err(e) => failed("planner", e),
        },
        reference_row("naive_indirect", &naive, &t_naive, gap),
        reference_row("direct", &direct, &t_direct, gap),
    ];
    CompareReport {
        repetitions: reps,
        facets,
        rho: direct.as_ref().map(|d| d.rho).unwrap_or(f64::NAN),
        lower_bound_mms: planner.as_ref().ok().map(|p| p.lower_bound * 1e3),
        rows,
    }
}

fn failed(name: &str, e: &str) -> SolverRow {
    SolverRow {
        solver: name.into(),
        cost_mms: None,
        cost_gap: None,
        iterations: None,
        timing: None,
        error: Some(e.to_string()),
    }
}

fn reference_row(
    name: &str,
    r: &Result<ReferencePlan, String>,
    times: &[f64],
    gap: impl Fn(f64) -> Option<f64>,
) -> SolverRow {
    match r {
        Ok(p) => SolverRow {
            solver: name.into(),
            cost_mms: Some(p.total_cost * 1e3),
            cost_gap: gap(p.total_cost),
            iterations: Some(p.iterations),
            timing: Some(Timing::from_samples(times)),
            error: None,
        },
        Err(e) => failed(name, e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{ModeSchedule, ThrusterSet};
    use crate::problem::GammaTable;
    use nalgebra::DMatrix;

    #[test]
    fn polyhedral_costs_pass_through() {
        let a = polyhedral_approx(&CostModel::OneNorm, 3, 10).unwrap();
        assert_eq!(a.generators.len(), 6);
        assert_eq!(a.rho, 1.0);
        let t = CostModel::PolyhedralThrusters(ThrusterSet::tetrahedral());
        let a = polyhedral_approx(&t, 3, 10).unwrap();
        assert_eq!(a.generators.len(), 4);
        assert!(polyhedral_approx(&CostModel::TwoNorm, 3, 3).is_err());
    }

    #[test]
    fn two_norm_approx_is_inner() {
        let a = polyhedral_approx(&CostModel::TwoNorm, 3, 162).unwrap();
        assert!(a.rho >= 1.0 && a.rho < 1.1, "rho {}", a.rho);
        for g in &a.generators {
            assert!(CostModel::TwoNorm.cost_of(g.as_slice()).unwrap() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn direct_single_time_decomposes_exactly() {
        // Γ = I, one-norm: w = (1, −2, 0.5) costs 3.5.
        let g = GammaTable::from_fn(vec![0.0], 3, 3, |_| Ok::<_, String>(DMatrix::identity(3, 3))).unwrap();
        let s = ModeSchedule::single(CostModel::OneNorm, &[0.0]).unwrap();
        let p = Problem::new(DVector::from_vec(vec![1.0, -2.0, 0.5]), g, s).unwrap();
        let d = solve_direct(&p, 8).unwrap();
        assert!((d.total_cost - 3.5).abs() < 1e-10);
        assert!((d.objective - 3.5).abs() < 1e-10);
        assert!(d.residual < 1e-12);
    }
}
