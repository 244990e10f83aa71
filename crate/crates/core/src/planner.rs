//! Initialization, iterative refinement of candidate times, extraction of
//! control inputs, lower bounds and the end-to-end planner.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostError;
use crate::dual::{
    local_maxima, profile_all, profile_max, solve_restricted_dual, CandidateSet, DualError, DualOptions, DualSolution,
    ProfileSample,
};
use crate::nnls::{nnls, NnlsError};
use crate::problem::Problem;

/// Largest normalized residual `‖w − Σ Γu‖ / ‖w‖` accepted from extraction.
pub const RESIDUAL_TOL: f64 = 1e-4;

/// Candidates whose constraint is this close to tight are tried first during
/// extraction.
const TIGHT_TOL: f64 = 1e-6;

/// How the first candidate set is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// The `n_init` seed times with the largest support along `w`.
    Support,
    /// Only the first and last grid times.
    Endpoints,
    /// The given number of grid times spread evenly over the horizon.
    Uniform(usize),
}

#[derive(Debug, Clone)]
pub struct PlannerConfig {
    pub eps_cost: f64,
    pub eps_remove: f64,
    pub n_init: usize,
    pub n_seed_grid: usize,
    pub init: InitScheme,
    /// Residual weight; identity when `None`.
    pub q_weight: Option<DMatrix<f64>>,
    /// Impulse magnitude floor [m/s]; `1e-6 · λᵀw` when `None`.
    pub alpha_min: Option<f64>,
    pub max_iters: usize,
    pub dual: DualOptions,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            eps_cost: 0.01,
            eps_remove: 0.01,
            n_init: 6,
            n_seed_grid: 20,
            init: InitScheme::Support,
            q_weight: None,
            alpha_min: None,
            max_iters: 50,
            dual: DualOptions::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self, n: usize) -> Result<(), String> {
        if !(self.eps_cost > 0.0) {
            return Err(format!("eps_cost must be positive, got {}", self.eps_cost));
        }
        if !(self.eps_remove > 0.0 && self.eps_remove < 1.0) {
            return Err(format!("eps_remove must be in (0, 1), got {}", self.eps_remove));
        }
        if self.n_init == 0 || self.n_seed_grid == 0 {
            return Err("n_init and n_seed_grid must be at least 1".into());
        }
        if self.max_iters == 0 {
            return Err("max_iters must be at least 1".into());
        }
        if let Some(a) = self.alpha_min {
            if !(a >= 0.0) {
                return Err(format!("alpha_min must be nonnegative, got {a}"));
            }
        }
        if let Some(q) = &self.q_weight {
            if q.shape() != (n, n) {
                return Err(format!("q_weight must be {n}×{n}"));
            }
            if (q - q.transpose()).amax() > 1e-12 * q.amax() || q.clone().cholesky().is_none() {
                return Err("q_weight must be symmetric positive definite".into());
            }
        }
        Ok(())
    }

    fn q(&self, n: usize) -> DMatrix<f64> {
        self.q_weight.clone().unwrap_or_else(|| DMatrix::identity(n, n))
    }
}

/// One pass of the refinement loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub candidates: usize,
    /// `λᵀw` of the restricted dual, the cost of a feasible plan [m/s].
    pub objective: f64,
    /// Largest `p` over the full grid.
    pub max_p: f64,
    /// `λᵀw / max_p` [m/s].
    pub bound: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanErrorKind {
    #[error("invalid planner configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error("no convergence in {iters} iterations (best upper {best_upper} m/s, best lower {best_lower} m/s)")]
    MaxIters {
        iters: usize,
        best_upper: f64,
        best_lower: f64,
    },
    #[error("extraction failed: residual {0:e}")]
    ExtractionFailed(f64),
    #[error("no sample direction has λᵀw > 0")]
    NoAscentSample,
    #[error(transparent)]
    Nnls(#[from] NnlsError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// A planner failure with the iterations that led to it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanError {
    pub kind: PlanErrorKind,
    pub trace: Vec<IterationRecord>,
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        for r in &self.trace {
            write!(
                f,
                "\n  iteration {}: {} candidates, objective {:.6e}, max p {:.6}",
                r.iteration, r.candidates, r.objective, r.max_p
            )?;
        }
        Ok(())
    }
}

impl std::error::Error for PlanError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.kind)
    }
}

impl From<PlanErrorKind> for PlanError {
    fn from(kind: PlanErrorKind) -> Self {
        Self {
            kind,
            trace: Vec::new(),
        }
    }
}

macro_rules! plan_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for PlanError {
            fn from(e: $t) -> Self {
                PlanErrorKind::from(e).into()
            }
        }
    )*};
}

plan_error_from!(DualError, NnlsError, CostError);

impl PlanError {
    fn with_trace(mut self, trace: &[IterationRecord]) -> Self {
        self.trace = trace.to_vec();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Impulse {
    pub t: f64,
    pub mode: usize,
    /// Grid index of `t`.
    pub index: usize,
    pub u: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverPlan {
    pub impulses: Vec<Impulse>,
    /// Sum of the recomputed impulse costs [m/s].
    pub total_cost: f64,
    pub lower_bound: f64,
    /// `‖w − Σ Γu‖₂ / ‖w‖₂`
    pub residual: f64,
    pub iterations: usize,
    /// `None` only for the empty plan of `w = 0`.
    pub dual: Option<DualSolution>,
    pub trace: Vec<IterationRecord>,
    /// Full-grid profiles at the final dual variable.
    pub profiles: Vec<Vec<ProfileSample>>,
}

impl ManeuverPlan {
    pub fn empty() -> Self {
        Self {
            impulses: Vec::new(),
            total_cost: 0.0,
            lower_bound: 0.0,
            residual: 0.0,
            iterations: 0,
            dual: None,
            trace: Vec::new(),
            profiles: Vec::new(),
        }
    }

    /// `total_cost ≤ (1 + eps_cost)·lower_bound` with a small absolute slack.
    pub fn certified(&self, eps_cost: f64) -> bool {
        self.total_cost <= (1.0 + eps_cost) * self.lower_bound + 1e-9
    }

    /// `total_cost / lower_bound`, or 1 for the empty plan.
    pub fn gap(&self) -> f64 {
        if self.lower_bound > 0.0 {
            self.total_cost / self.lower_bound
        } else {
            1.0
        }
    }
}

/// Refinement output.
#[derive(Debug, Clone)]
pub struct Refined {
    pub dual: DualSolution,
    pub candidates: CandidateSet,
    pub profiles: Vec<Vec<ProfileSample>>,
    pub max_p: f64,
    pub trace: Vec<IterationRecord>,
}

/// `count` grid indices spread evenly from the first to the last grid time.
pub fn uniform_indices(grid_len: usize, count: usize) -> Vec<usize> {
    if grid_len == 0 || count == 0 {
        return Vec::new();
    }
    if count == 1 || grid_len == 1 {
        return vec![0];
    }
    let mut out: Vec<usize> = (0..count)
        .map(|i| ((i as f64) * (grid_len - 1) as f64 / (count - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Puts each grid index into every mode that admits it.
pub fn candidates_at(problem: &Problem, indices: &[usize]) -> CandidateSet {
    let mut c = CandidateSet::empty(problem.mode_count());
    for j in 0..problem.mode_count() {
        let idx = problem.mode_indices(j);
        for &k in indices {
            if idx.binary_search(&k).is_ok() {
                c.insert(j, k);
            }
        }
    }
    c
}

/// The `o` (mode, seed time) pairs with the largest support of
/// `Γᵀ(t)λ_est`. Ties keep the earlier time, then the lower mode.
pub fn initialize_candidates(problem: &Problem, seeds: &[usize], lambda_est: &[f64], o: usize) -> CandidateSet {
    let mut buf = vec![0.0; problem.control_dim()];
    let mut scored: Vec<(f64, usize, usize)> = Vec::new();
    for j in 0..problem.mode_count() {
        let idx = problem.mode_indices(j);
        for &k in seeds {
            if idx.binary_search(&k).is_ok() {
                scored.push((problem.support_at(j, k, lambda_est, &mut buf), k, j));
            }
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    CandidateSet::from_pairs(problem.mode_count(), scored.into_iter().take(o).map(|(_, k, j)| (j, k)))
}

/// First candidate set according to `config.init`.
pub fn initial_candidates(problem: &Problem, config: &PlannerConfig) -> CandidateSet {
    let len = problem.gamma.len();
    match config.init {
        InitScheme::Support => {
            let wn = problem.w.norm();
            let w_hat: Vec<f64> = problem.w.iter().map(|x| x / wn).collect();
            let seeds = uniform_indices(len, config.n_seed_grid);
            initialize_candidates(problem, &seeds, &w_hat, config.n_init)
        }
        InitScheme::Endpoints => candidates_at(problem, &[0, len - 1]),
        InitScheme::Uniform(count) => candidates_at(problem, &uniform_indices(len, count)),
    }
}

/// Iterative refinement of `cands` until the full-grid profile is at most
/// `1 + eps_cost`.
pub fn refine(problem: &Problem, cands: CandidateSet, config: &PlannerConfig) -> Result<Refined, PlanError> {
    let mut cands = cands;
    let mut trace = Vec::new();
    let mut best_upper = f64::INFINITY;
    let mut best_lower = 0.0f64;
    for iteration in 1..=config.max_iters {
        let dual =
            solve_restricted_dual(problem, &cands, &config.dual).map_err(|e| PlanError::from(e).with_trace(&trace))?;
        let lambda = dual.lambda.as_slice();
        let profiles = profile_all(problem, lambda);
        let max_p = profile_max(&profiles);
        let bound = dual.objective / max_p;
        best_upper = best_upper.min(dual.objective);
        best_lower = best_lower.max(bound);
        trace.push(IterationRecord {
            iteration,
            candidates: cands.len(),
            objective: dual.objective,
            max_p,
            bound,
        });

        let mut buf = vec![0.0; problem.control_dim()];
        let stale: Vec<(usize, usize)> = cands
            .pairs()
            .filter(|&(j, k)| problem.support_at(j, k, lambda, &mut buf) < 1.0 - config.eps_remove)
            .collect();
        for (j, k) in stale {
            cands.remove(j, k);
        }

        if max_p <= 1.0 + config.eps_cost {
            return Ok(Refined {
                dual,
                candidates: cands,
                profiles,
                max_p,
                trace,
            });
        }
        for (j, k) in local_maxima(&profiles, 1.0) {
            cands.insert(j, k);
        }
    }
    Err(PlanError {
        kind: PlanErrorKind::MaxIters {
            iters: config.max_iters,
            best_upper,
            best_lower,
        },
        trace,
    })
}

/// Impulses reaching `w` along the support maximizers at the candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub impulses: Vec<Impulse>,
    pub total_cost: f64,
    pub residual: f64,
}

/// Control input directions from the dual variable, magnitudes from a
/// weighted nonnegative least-squares fit to `w`.
///
/// Candidates whose constraint is tight are tried first; the full candidate
/// set is used only if they cannot reach `w`.
pub fn extract_inputs(
    problem: &Problem,
    dual: &DualSolution,
    cands: &CandidateSet,
    config: &PlannerConfig,
) -> Result<Extraction, PlanError> {
    let lambda = dual.lambda.as_slice();
    let mut buf = vec![0.0; problem.control_dim()];
    let scored: Vec<(usize, usize, f64)> = cands
        .pairs()
        .map(|(j, k)| (j, k, problem.support_at(j, k, lambda, &mut buf)))
        .collect();
    let top = scored.iter().map(|s| s.2).fold(0.0, f64::max);
    let tight: Vec<(usize, usize)> = scored
        .iter()
        .filter(|s| s.2 >= top * (1.0 - TIGHT_TOL))
        .map(|s| (s.0, s.1))
        .collect();
    let all: Vec<(usize, usize)> = scored.iter().map(|s| (s.0, s.1)).collect();

    let first = extract_from(problem, dual, &tight, config)?;
    if first.residual <= RESIDUAL_TOL || tight.len() == all.len() {
        return check_residual(first);
    }
    let second = extract_from(problem, dual, &all, config)?;
    check_residual(if second.residual < first.residual {
        second
    } else {
        first
    })
}

fn check_residual(e: Extraction) -> Result<Extraction, PlanError> {
    if e.residual <= RESIDUAL_TOL {
        Ok(e)
    } else {
        Err(PlanErrorKind::ExtractionFailed(e.residual).into())
    }
}

/// Directions are the support maximizers at `λ` for each pair, plus the
/// cut generators the dual solver weighted at those pairs.
fn extract_from(
    problem: &Problem,
    dual: &DualSolution,
    pairs: &[(usize, usize)],
    config: &PlannerConfig,
) -> Result<Extraction, PlanError> {
    let n = problem.state_dim();
    let m = problem.control_dim();
    let lambda = dual.lambda.as_slice();
    let mut buf = vec![0.0; m];
    // (mode, grid index, unit-cost direction)
    let mut dirs: Vec<(usize, usize, DVector<f64>)> = Vec::new();
    for &(j, k) in pairs {
        problem.gamma.transpose_apply(k, lambda, &mut buf);
        for g in problem.schedule.modes[j].cost.support_generators(&buf)? {
            dirs.push((j, k, g));
        }
    }
    for sp in &dual.support_points {
        if pairs.contains(&(sp.mode, sp.index))
            && !dirs.iter().any(|d| d.0 == sp.mode && d.1 == sp.index && d.2 == sp.u)
        {
            dirs.push((sp.mode, sp.index, sp.u.clone()));
        }
    }
    let q = config.q(n);
    let alpha_min = config.alpha_min.unwrap_or(1e-6 * dual.objective);

    let mut keep: Vec<usize> = (0..dirs.len()).collect();
    let mut alpha;
    loop {
        let y = DMatrix::from_columns(
            &keep
                .iter()
                .map(|&i| problem.gamma.apply(dirs[i].1, dirs[i].2.as_slice()))
                .collect::<Vec<_>>(),
        );
        alpha = nnls(&y, &problem.w, &q)?.alpha;
        let next: Vec<usize> = keep
            .iter()
            .zip(alpha.iter())
            .filter(|(_, &a)| a >= alpha_min)
            .map(|(&i, _)| i)
            .collect();
        if next.len() == keep.len() || next.is_empty() {
            break;
        }
        keep = next;
    }

    // Sum the coefficients per (mode, time).
    let mut impulses: Vec<Impulse> = Vec::new();
    for (&i, &a) in keep.iter().zip(alpha.iter()) {
        if a < alpha_min {
            continue;
        }
        let (j, k, ref g) = dirs[i];
        match impulses.iter_mut().find(|imp| imp.mode == j && imp.index == k) {
            Some(imp) => {
                for (u, gi) in imp.u.iter_mut().zip(g.iter()) {
                    *u += a * gi;
                }
            }
            None => impulses.push(Impulse {
                t: problem.time(k),
                mode: j,
                index: k,
                u: g.iter().map(|gi| a * gi).collect(),
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
    Ok(Extraction {
        impulses,
        total_cost,
        residual,
    })
}

/// `‖w − Σ Γ(t)u‖₂ / ‖w‖₂`
pub fn reached_residual(problem: &Problem, impulses: &[Impulse]) -> f64 {
    let mut err = problem.w.clone();
    for imp in impulses {
        err -= problem.gamma.apply(imp.index, &imp.u);
    }
    err.norm() / problem.w.norm()
}

/// Best of `λ̂ᵀw / max_{j,t} p_j(t; λ̂)` over the samples with `λ̂ᵀw > 0`.
pub fn lower_bound(problem: &Problem, samples: &[DVector<f64>]) -> Result<(f64, DVector<f64>), PlanError> {
    let mut best: Option<(f64, DVector<f64>)> = None;
    for s in samples {
        let num = s.dot(&problem.w);
        if !(num > 0.0) {
            continue;
        }
        let (den, _, _) = problem.global_max_support(s.as_slice());
        if !(den > 0.0) {
            continue;
        }
        let b = num / den;
        if best.as_ref().is_none_or(|(v, _)| b > *v) {
            best = Some((b, s.clone()));
        }
    }
    best.ok_or_else(|| PlanErrorKind::NoAscentSample.into())
}

/// Initialization, refinement and extraction.
pub fn plan(problem: &Problem, config: &PlannerConfig) -> Result<ManeuverPlan, PlanError> {
    plan_from(problem, initial_candidates(problem, config), config)
}

/// Refinement and extraction from a given candidate set.
pub fn plan_from(problem: &Problem, cands: CandidateSet, config: &PlannerConfig) -> Result<ManeuverPlan, PlanError> {
    config.validate(problem.state_dim()).map_err(PlanErrorKind::Config)?;
    if problem.w.iter().all(|x| *x == 0.0) {
        return Ok(ManeuverPlan::empty());
    }
    let refined = refine(problem, cands, config)?;
    let ex = extract_inputs(problem, &refined.dual, &refined.candidates, config)
        .map_err(|e| e.with_trace(&refined.trace))?;
    Ok(ManeuverPlan {
        impulses: ex.impulses,
        total_cost: ex.total_cost,
        lower_bound: refined.dual.objective / refined.max_p,
        residual: ex.residual,
        iterations: refined.trace.len(),
        dual: Some(refined.dual),
        trace: refined.trace,
        profiles: refined.profiles,
    })
}

/// Checks of a plan against the optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanAudit {
    /// Normalized residual of the reached pseudostate.
    pub residual: f64,
    /// `|total_cost − λᵀw| / λᵀw`
    pub cost_dual_gap: f64,
    /// Largest `|vᵀu − cost(u)·h(v)| / (cost(u)·h(v))` with `v = Γᵀλ`.
    pub direction_error: f64,
    /// Largest `p` at an impulse time relative to the full-grid maximum.
    pub impulse_p_shortfall: f64,
    pub impulse_count: usize,
}

pub fn audit(problem: &Problem, plan: &ManeuverPlan) -> Option<PlanAudit> {
    let dual = plan.dual.as_ref()?;
    let lambda = dual.lambda.as_slice();
    let max_p = profile_max(&plan.profiles);
    let mut buf = vec![0.0; problem.control_dim()];
    let mut direction_error = 0.0f64;
    let mut shortfall = 0.0f64;
    for imp in &plan.impulses {
        problem.gamma.transpose_apply(imp.index, lambda, &mut buf);
        let h = problem.schedule.modes[imp.mode].cost.support(&buf);
        let vu: f64 = buf.iter().zip(&imp.u).map(|(a, b)| a * b).sum();
        let scale = imp.cost * h;
        if scale > 0.0 {
            direction_error = direction_error.max((vu - scale).abs() / scale);
        }
        shortfall = shortfall.max((max_p - h) / max_p);
    }
    Some(PlanAudit {
        residual: reached_residual(problem, &plan.impulses),
        cost_dual_gap: (plan.total_cost - dual.objective).abs() / dual.objective,
        direction_error,
        impulse_p_shortfall: shortfall,
        impulse_count: plan.impulses.len(),
    })
}
