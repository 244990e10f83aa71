//! The restricted dual problem
//!
//! ```text
//! maximize λᵀw  s.t.  max_{u ∈ U_j(1)} λᵀΓ(t)u ≤ 1  for every candidate (j, t)
//! ```
//!
//! solved by cutting planes over [`lp_solve`], together with the constraint
//! profile `p_j(t)` and its local maxima.

use std::collections::HashSet;

use nalgebra::DVector;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostError;
use crate::lp::{lp_solve, Constraints, LpError};
use crate::problem::Problem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualError {
    #[error("trivial problem: target pseudostate is zero")]
    TrivialProblem,
    #[error("insufficient candidates: the candidate set cannot reach the target")]
    InsufficientCandidates,
    #[error("dual unbounded: target likely unreachable with given candidates")]
    DualUnbounded,
    #[error("cutting planes did not converge in {0} rounds")]
    RoundLimit(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Candidate grid indices, sorted and deduplicated per mode.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CandidateSet {
    per_mode: Vec<Vec<usize>>,
}

impl CandidateSet {
    pub fn empty(modes: usize) -> Self {
        Self {
            per_mode: vec![Vec::new(); modes],
        }
    }

    /// Builds a set from `(mode, grid index)` pairs; duplicates collapse.
    pub fn from_pairs(modes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut s = Self::empty(modes);
        for (j, k) in pairs {
            s.insert(j, k);
        }
        s
    }

    /// Every admissible time of every mode.
    pub fn full(problem: &Problem) -> Self {
        Self {
            per_mode: (0..problem.mode_count())
                .map(|j| problem.mode_indices(j).to_vec())
                .collect(),
        }
    }

    /// Returns false when the pair was already present.
    pub fn insert(&mut self, mode: usize, k: usize) -> bool {
        let v = &mut self.per_mode[mode];
        match v.binary_search(&k) {
            Ok(_) => false,
            Err(pos) => {
                v.insert(pos, k);
                true
            }
        }
    }

    pub fn remove(&mut self, mode: usize, k: usize) -> bool {
        let v = &mut self.per_mode[mode];
        match v.binary_search(&k) {
            Ok(pos) => {
                v.remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    pub fn contains(&self, mode: usize, k: usize) -> bool {
        self.per_mode[mode].binary_search(&k).is_ok()
    }

    pub fn mode(&self, mode: usize) -> &[usize] {
        &self.per_mode[mode]
    }

    pub fn mode_count(&self) -> usize {
        self.per_mode.len()
    }

    pub fn len(&self) -> usize {
        self.per_mode.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.per_mode
            .iter()
            .enumerate()
            .flat_map(|(j, ks)| ks.iter().map(move |&k| (j, k)))
    }

    /// `(mode, t)` pairs in seconds.
    pub fn times(&self, problem: &Problem) -> Vec<(usize, f64)> {
        self.pairs().map(|(j, k)| (j, problem.time(k))).collect()
    }
}

/// A constraint of the restricted dual that is (nearly) tight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivePair {
    pub mode: usize,
    pub index: usize,
    pub t: f64,
    pub p: f64,
}

/// A unit-cost point of `U_j(1)` at a candidate time.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPoint {
    pub mode: usize,
    pub index: usize,
    pub u: DVector<f64>,
    /// Multiplier of its cut, in units of `w` per unit `Γu`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub lambda: DVector<f64>,
    /// `λᵀw`
    pub objective: f64,
    /// Candidates with `p ≥ 1 − active_tol`.
    pub active: Vec<ActivePair>,
    /// Largest `p` over the candidates.
    pub max_candidate_p: f64,
    /// Cut generators with a positive multiplier in the final cut LP. Their
    /// weighted images `Σ weight·Γ(t)u` reproduce `w`.
    pub support_points: Vec<SupportPoint>,
    pub cuts: usize,
    pub rounds: usize,
    /// Relative gap between the final cut LP and the feasible objective.
    pub lp_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub t: f64,
    pub mode: usize,
    pub index: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DualOptions {
    /// Allowed candidate violation `p − 1`.
    pub feas_tol: f64,
    /// Candidates with `p ≥ 1 − active_tol` are reported as active.
    pub active_tol: f64,
    pub max_rounds: usize,
    pub max_doublings: usize,
    /// Initial box radius in units of `1 / support scale`.
    pub box_scale: f64,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            active_tol: 0.01,
            max_rounds: 5000,
            max_doublings: 30,
            box_scale: 10.0,
        }
    }
}

/// Solves the restricted dual over `cands`.
pub fn solve_restricted_dual(
    problem: &Problem,
    cands: &CandidateSet,
    opts: &DualOptions,
) -> Result<DualSolution, DualError> {
    let n = problem.state_dim();
    let m = problem.control_dim();
    let wn = problem.w.norm();
    if !(wn > 0.0) {
        return Err(DualError::TrivialProblem);
    }
    let pairs: Vec<(usize, usize)> = cands.pairs().collect();
    if pairs.is_empty() {
        return Err(DualError::InsufficientCandidates);
    }
    let w_hat: Vec<f64> = problem.w.iter().map(|x| x / wn).collect();

    // Work in μ = σλ so that μ is of order one.
    let mut buf = vec![0.0; m];
    let mut scales: Vec<f64> = pairs
        .iter()
        .map(|&(j, k)| problem.support_at(j, k, &w_hat, &mut buf))
        .filter(|s| *s > 0.0)
        .collect();
    let sigma = if scales.is_empty() {
        pairs
            .iter()
            .map(|&(_, k)| problem.gamma.block(k).iter().fold(0.0f64, |a, b| a.max(b.abs())))
            .fold(0.0f64, f64::max)
    } else {
        scales.sort_by(f64::total_cmp);
        scales[scales.len() / 2]
    };
    if !(sigma > 0.0) {
        return Err(DualError::InsufficientCandidates);
    }

    let mut cuts = Constraints::with_capacity(n, 16 * pairs.len());
    // (mode, grid index, generator) behind each cut
    let mut sources: Vec<(usize, usize, DVector<f64>)> = Vec::new();
    let mut seen: HashSet<(usize, Vec<u64>)> = HashSet::new();
    let mut add_cut = |cuts: &mut Constraints, j: usize, k: usize, u: DVector<f64>| {
        if !seen.insert((k, u.iter().map(|x| x.to_bits()).collect())) {
            return;
        }
        let row = problem.gamma.apply(k, u.as_slice());
        if row.iter().any(|x| *x != 0.0) {
            let scaled: Vec<f64> = row.iter().map(|x| x / sigma).collect();
            cuts.push(&scaled, 1.0);
            sources.push((j, k, u));
        }
    };

    // Polyhedral modes get their exact facets once; other modes start with
    // tangent cuts in a handful of directions.
    let polyhedral: Vec<bool> = problem
        .schedule
        .modes
        .iter()
        .map(|md| md.cost.vertices(m).is_some())
        .collect();
    for &(j, k) in &pairs {
        let cost = &problem.schedule.modes[j].cost;
        if let Some(verts) = cost.vertices(m) {
            for v in verts {
                add_cut(&mut cuts, j, k, v);
            }
        } else {
            let mut dirs = vec![w_hat.clone()];
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                dirs.push(e.clone());
                e[i] = -1.0;
                dirs.push(e);
            }
            for d in dirs {
                problem.gamma.transpose_apply(k, &d, &mut buf);
                if let Ok(gens) = cost.support_generators(&buf) {
                    for g in gens {
                        add_cut(&mut cuts, j, k, g);
                    }
                }
            }
        }
    }

    let mut radius = opts.box_scale;
    let mut doublings = 0;
    for round in 1..=opts.max_rounds {
        let lp = lp_solve(&w_hat, &cuts, radius)?;
        let lambda: Vec<f64> = lp.x.iter().map(|x| x / sigma).collect();

        let ps: Vec<f64> = pairs
            .par_iter()
            .map_init(|| vec![0.0; m], |b, &(j, k)| problem.support_at(j, k, &lambda, b))
            .collect();
        let max_p = ps.iter().copied().fold(0.0f64, f64::max);

        if max_p > 1.0 + opts.feas_tol {
            let before = cuts.len();
            for (&(j, k), &p) in pairs.iter().zip(&ps) {
                if p > 1.0 + opts.feas_tol && !polyhedral[j] {
                    problem.gamma.transpose_apply(k, &lambda, &mut buf);
                    for g in problem.schedule.modes[j].cost.support_generators(&buf)? {
                        add_cut(&mut cuts, j, k, g);
                    }
                }
            }
            if cuts.len() > before {
                continue;
            }
            // Violation on polyhedral modes only: LP round-off. Accept
            // after rescaling below.
        }

        if lp.box_active() {
            doublings += 1;
            if doublings > opts.max_doublings {
                return Err(DualError::DualUnbounded);
            }
            radius *= 2.0;
            continue;
        }

        // Rescale so the solution is exactly feasible on the candidates.
        let shrink = max_p.max(1.0);
        let lambda = DVector::from_iterator(n, lambda.iter().map(|x| x / shrink));
        let objective = lambda.dot(&problem.w);
        if !(objective > 0.0) {
            return Err(DualError::InsufficientCandidates);
        }
        let lp_objective = lp.objective * wn / sigma;
        let active = pairs
            .iter()
            .zip(&ps)
            .filter(|(_, &p)| p / shrink >= 1.0 - opts.active_tol)
            .map(|(&(j, k), &p)| ActivePair {
                mode: j,
                index: k,
                t: problem.time(k),
                p: p / shrink,
            })
            .collect();
        let support_points = sources
            .iter()
            .zip(&lp.duals)
            .filter(|(_, &y)| y > 0.0)
            .map(|((j, k, u), &y)| SupportPoint {
                mode: *j,
                index: *k,
                u: u.clone(),
                weight: y * wn / sigma,
            })
            .collect();
        return Ok(DualSolution {
            lambda,
            support_points,
            objective,
            active,
            max_candidate_p: max_p / shrink,
            cuts: cuts.len(),
            rounds: round,
            lp_gap: (lp_objective - objective).abs() / objective,
        });
    }
    Err(DualError::RoundLimit(opts.max_rounds))
}

/// `p_j(t)` at every admissible time of `mode`.
pub fn profile(problem: &Problem, lambda: &[f64], mode: usize) -> Vec<ProfileSample> {
    let m = problem.control_dim();
    problem
        .mode_indices(mode)
        .par_iter()
        .map_init(
            || vec![0.0; m],
            |b, &k| ProfileSample {
                t: problem.time(k),
                mode,
                index: k,
                p: problem.support_at(mode, k, lambda, b),
            },
        )
        .collect()
}

/// Profiles of every mode.
pub fn profile_all(problem: &Problem, lambda: &[f64]) -> Vec<Vec<ProfileSample>> {
    (0..problem.mode_count()).map(|j| profile(problem, lambda, j)).collect()
}

/// Largest `p` over all profiles.
pub fn profile_max(profiles: &[Vec<ProfileSample>]) -> f64 {
    profiles.iter().flatten().map(|s| s.p).fold(0.0, f64::max)
}

/// Indices of local maxima of `p` above `threshold`. A plateau counts once,
/// at its first index; endpoints are compared with their single neighbor.
pub fn local_maxima_indices(p: &[f64], threshold: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < p.len() {
        let mut j = i;
        while j + 1 < p.len() && p[j + 1] == p[i] {
            j += 1;
        }
        let left_ok = i == 0 || p[i - 1] < p[i];
        let right_ok = j + 1 == p.len() || p[j + 1] < p[i];
        if p[i] > threshold && left_ok && right_ok {
            out.push(i);
        }
        i = j + 1;
    }
    out
}

/// Local maxima above `threshold` for each mode, as `(mode, grid index)`.
///
/// A mode's times can form several disjoint windows; each run of consecutive
/// grid indices is scanned on its own so that window edges are compared only
/// with neighbors inside the window.
pub fn local_maxima(profiles: &[Vec<ProfileSample>], threshold: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for samples in profiles {
        let mut start = 0;
        while start < samples.len() {
            let mut end = start + 1;
            while end < samples.len() && samples[end].index == samples[end - 1].index + 1 {
                end += 1;
            }
            let run = &samples[start..end];
            let p: Vec<f64> = run.iter().map(|s| s.p).collect();
            for i in local_maxima_indices(&p, threshold) {
                out.push((run[i].mode, run[i].index));
            }
            start = end;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{CostModel, ModeSchedule};
    use crate::problem::GammaTable;
    use nalgebra::DMatrix;

    fn identity_problem(w: &[f64], times: usize) -> Problem {
        let grid: Vec<f64> = (0..times).map(|i| i as f64).collect();
        let g = GammaTable::from_fn(grid.clone(), w.len(), w.len(), |_| {
            Ok::<_, String>(DMatrix::identity(w.len(), w.len()))
        })
        .unwrap();
        let s = ModeSchedule::single(CostModel::TwoNorm, &grid).unwrap();
        Problem::new(DVector::from_column_slice(w), g, s).unwrap()
    }

    #[test]
    fn identity_dual_is_normalized_target() {
        let w = [1.0, -2.0, 0.5, 3.0, 0.0, 1.0];
        let p = identity_problem(&w, 1);
        let s = solve_restricted_dual(&p, &CandidateSet::full(&p), &DualOptions::default()).unwrap();
        let wn = DVector::from_column_slice(&w).norm();
        assert!((s.objective - wn).abs() < 1e-8 * wn, "{} vs {}", s.objective, wn);
        for (l, x) in s.lambda.iter().zip(&w) {
            assert!((l - x / wn).abs() < 1e-4);
        }
    }

    #[test]
    fn trivial_and_empty_inputs() {
        let p = identity_problem(&[0.0; 3], 2);
        assert_eq!(
            solve_restricted_dual(&p, &CandidateSet::full(&p), &DualOptions::default()),
            Err(DualError::TrivialProblem)
        );
        let p = identity_problem(&[1.0, 0.0, 0.0], 2);
        assert_eq!(
            solve_restricted_dual(&p, &CandidateSet::empty(1), &DualOptions::default()),
            Err(DualError::InsufficientCandidates)
        );
    }

    #[test]
    fn unreachable_direction_is_detected() {
        // Γ only moves the first component; w has a second component.
        let grid = vec![0.0, 1.0];
        let g = GammaTable::from_fn(grid.clone(), 2, 1, |_| {
            Ok::<_, String>(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]))
        })
        .unwrap();
        let s = ModeSchedule::single(CostModel::OneNorm, &grid).unwrap();
        let p = Problem::new(DVector::from_vec(vec![1.0, 1.0]), g, s).unwrap();
        assert_eq!(
            solve_restricted_dual(&p, &CandidateSet::full(&p), &DualOptions::default()),
            Err(DualError::DualUnbounded)
        );
    }

    #[test]
    fn duplicate_pairs_collapse() {
        let c = CandidateSet::from_pairs(1, [(0, 3), (0, 1), (0, 3)]);
        assert_eq!(c.mode(0), &[1, 3]);
    }

    #[test]
    fn local_maxima_examples() {
        assert_eq!(local_maxima_indices(&[0.9, 1.2, 1.0, 1.3, 1.1], 1.0), vec![1, 3]);
        assert_eq!(local_maxima_indices(&[0.1, 0.5, 2.0, 3.0], 1.0), vec![3]);
        assert!(local_maxima_indices(&[0.1, 0.9, 0.5], 1.0).is_empty());
        assert_eq!(local_maxima_indices(&[1.0, 2.0, 2.0, 2.0, 1.0], 1.5), vec![1]);
        assert_eq!(local_maxima_indices(&[2.0, 2.0, 1.0], 1.5), vec![0]);
        // A rising plateau is not a maximum.
        assert!(local_maxima_indices(&[1.0, 2.0, 2.0, 3.0], 3.5).is_empty());
    }

    #[test]
    fn window_edges_use_in_window_neighbors() {
        let mk = |index: usize, p: f64| ProfileSample {
            t: index as f64,
            mode: 0,
            index,
            p,
        };
        // Two windows [0..3) and [10..13); the 2.0 at index 2 ends the first
        // window and 10 starts the second.
        let prof = vec![vec![
            mk(0, 1.0),
            mk(1, 1.5),
            mk(2, 2.0),
            mk(10, 3.0),
            mk(11, 1.2),
            mk(12, 1.1),
        ]];
        assert_eq!(local_maxima(&prof, 1.0), vec![(0, 2), (0, 10)]);
    }

    #[test]
    fn profile_is_homogeneous() {
        let p = identity_problem(&[1.0, 2.0, 3.0], 4);
        let a = profile(&p, &[0.1, 0.2, -0.3], 0);
        let b = profile(&p, &[0.2, 0.4, -0.6], 0);
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x.p - y.p).abs() < 1e-15);
        }
        assert!(profile(&p, &[0.0; 3], 0).iter().all(|s| s.p == 0.0));
    }
}
