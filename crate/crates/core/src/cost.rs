//! Norm-like control costs, their support functions, and control modes.
//!
//! Every cost is described by its unit sublevel set `U(1)`. The solvers only
//! ever query `U(1)` through [`CostModel::support`] (the contact function
//! `max_{u ∈ U(1)} vᵀu`) and [`CostModel::support_generators`] (a finite set
//! of maximizers whose convex hull contains every maximizer).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative tolerance used to detect ties between maximizers.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("no ascent direction: support of v is zero")]
    NoAscentDirection,
    #[error("control {0:?} is not admissible for this cost")]
    Inadmissible(Vec<f64>),
    #[error("dimension mismatch: cost expects {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid cost model: {0}")]
    Invalid(String),
}

/// User-supplied norm-like cost.
pub trait NormLikeCost: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    /// Input dimension, if fixed.
    fn dim(&self) -> Option<usize>;
    fn support(&self, v: &[f64]) -> f64;
    fn support_generators(&self, v: &[f64]) -> Vec<DVector<f64>>;
    fn cost_of(&self, u: &[f64]) -> Result<f64, CostError>;
}

/// Fixed-attitude thruster set. Each row is the direction of one thruster
/// and also a unit-cost vertex of `U(1) = conv({0} ∪ rows)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThrusterSet {
    rows: Vec<DVector<f64>>,
    positively_spanning: bool,
}

impl ThrusterSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, CostError> {
        let Some(first) = rows.first() else {
            return Err(CostError::Invalid("thruster set has no rows".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(CostError::Invalid("thruster rows are empty".into()));
        }
        let mut out = Vec::with_capacity(rows.len());
        for r in rows {
            if r.len() != dim {
                return Err(CostError::Dimension {
                    expected: dim,
                    got: r.len(),
                });
            }
            let v = DVector::from_vec(r);
            if !v.iter().all(|x| x.is_finite()) || v.norm() == 0.0 {
                return Err(CostError::Invalid("thruster rows must be finite and nonzero".into()));
            }
            out.push(v);
        }
        let positively_spanning = positively_spans(&out);
        Ok(Self {
            rows: out,
            positively_spanning,
        })
    }

    /// The four-thruster tetrahedral layout used in the validation scenario.
    pub fn tetrahedral() -> Self {
        let a = (2.0f64 / 3.0).sqrt();
        let b = (1.0f64 / 3.0).sqrt();
        Self::new(vec![
            vec![a, 0.0, -b],
            vec![-a, 0.0, -b],
            vec![0.0, a, b],
            vec![0.0, -a, b],
        ])
        .expect("tetrahedral rows are valid")
    }

    pub fn rows(&self) -> &[DVector<f64>] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    /// False when some input directions cannot be produced at any cost.
    pub fn positively_spanning(&self) -> bool {
        self.positively_spanning
    }

    /// Minimum total firing `Σα` with `Σ α_k r_k = u`, `α ≥ 0`.
    ///
    /// An optimal basic solution uses at most `dim` linearly independent
    /// rows, so enumerating those subsets gives the exact gauge.
    fn gauge(&self, u: &[f64]) -> Option<f64> {
        let dim = self.dim();
        let target = DVector::from_column_slice(u);
        let scale = target.norm();
        if scale == 0.0 {
            return Some(0.0);
        }
        let k = self.rows.len();
        let mut best: Option<f64> = None;
        let mut subset = Vec::with_capacity(dim);
        for size in 1..=dim.min(k) {
            for_each_subset(k, size, &mut subset, &mut |idx| {
                let cols: Vec<DVector<f64>> = idx.iter().map(|&i| self.rows[i].clone()).collect();
                let m = DMatrix::from_columns(&cols);
                let svd = m.clone().svd(true, true);
                let smax = svd.singular_values.max();
                if svd.singular_values.min() <= 1e-12 * smax {
                    return;
                }
                let Ok(alpha) = svd.solve(&target, 0.0) else {
                    return;
                };
                let resid = (&m * &alpha - &target).norm();
                if resid > 1e-10 * scale {
                    return;
                }
                let alpha_scale = alpha.amax().max(f64::MIN_POSITIVE);
                if alpha.iter().any(|&a| a < -1e-12 * alpha_scale) {
                    return;
                }
                let total: f64 = alpha.iter().map(|a| a.max(0.0)).sum();
                if best.is_none_or(|b| total < b) {
                    best = Some(total);
                }
            });
        }
        best
    }
}

fn for_each_subset(n: usize, k: usize, buf: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, buf: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if buf.len() == k {
            f(buf);
            return;
        }
        for i in start..n {
            if n - i < k - buf.len() {
                break;
            }
            buf.push(i);
            rec(i + 1, n, k, buf, f);
            buf.pop();
        }
    }
    buf.clear();
    rec(0, n, k, buf, f);
}

/// Rows positively span R^d iff they span R^d and no nonzero v has
/// `vᵀr ≤ 0` for every row. Such a v, if it exists, can be taken as an
/// extreme ray of the polar cone, which is normal to d−1 independent rows.
fn positively_spans(rows: &[DVector<f64>]) -> bool {
    let dim = rows[0].len();
    let m = DMatrix::from_columns(rows);
    if m.rank(1e-10) < dim {
        return false;
    }
    if dim == 1 {
        let pos = rows.iter().any(|r| r[0] > 0.0);
        let neg = rows.iter().any(|r| r[0] < 0.0);
        return pos && neg;
    }
    let mut ok = true;
    let mut buf = Vec::new();
    for_each_subset(rows.len(), dim - 1, &mut buf, &mut |idx| {
        if !ok {
            return;
        }
        let cols: Vec<DVector<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
        let sub = DMatrix::from_columns(&cols);
        let svd = sub.clone().svd(true, false);
        let u = svd.u.expect("requested");
        if svd.singular_values.min() <= 1e-12 * svd.singular_values.max() {
            return;
        }
        let normal = complete_normal(&u, dim);
        for sign in [1.0, -1.0] {
            let v = &normal * sign;
            if rows.iter().all(|r| r.dot(&v) <= 1e-12) {
                ok = false;
            }
        }
    });
    ok
}

fn complete_normal(u: &DMatrix<f64>, dim: usize) -> DVector<f64> {
    for k in 0..dim {
        let mut e = DVector::zeros(dim);
        e[k] = 1.0;
        for c in 0..u.ncols() {
            let col = u.column(c);
            let d = col.dot(&e);
            e -= col * d;
        }
        let n = e.norm();
        if n > 1e-6 {
            return e / n;
        }
    }
    unreachable!("subset of dim-1 vectors cannot span R^dim")
}

/// A norm-like cost described by its unit sublevel set.
#[derive(Debug, Clone)]
pub enum CostModel {
    /// `‖u‖₂`: steerable single thruster.
    TwoNorm,
    /// `‖u‖₁`: three orthogonal thruster pairs in a fixed attitude.
    OneNorm,
    /// Fixed attitude with thrusters along the given rows.
    PolyhedralThrusters(ThrusterSet),
    /// `|u_k| + ‖u_rest‖₂` with `k` the fixed axis.
    MixedAxis {
        fixed_axis: usize,
    },
    Custom(Arc<dyn NormLikeCost>),
}

impl PartialEq for CostModel {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::TwoNorm, Self::TwoNorm) | (Self::OneNorm, Self::OneNorm) => true,
            (Self::PolyhedralThrusters(a), Self::PolyhedralThrusters(b)) => a == b,
            (Self::MixedAxis { fixed_axis: a }, Self::MixedAxis { fixed_axis: b }) => a == b,
            (Self::Custom(a), Self::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl CostModel {
    pub fn name(&self) -> &str {
        match self {
            Self::TwoNorm => "two_norm",
            Self::OneNorm => "one_norm",
            Self::PolyhedralThrusters(_) => "polyhedral_thrusters",
            Self::MixedAxis { .. } => "mixed_axis",
            Self::Custom(c) => c.name(),
        }
    }

    /// Input dimension when the model fixes it.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::PolyhedralThrusters(t) => Some(t.dim()),
            Self::Custom(c) => c.dim(),
            _ => None,
        }
    }

    pub fn check_dim(&self, m: usize) -> Result<(), CostError> {
        if let Some(d) = self.dim() {
            if d != m {
                return Err(CostError::Dimension { expected: d, got: m });
            }
        }
        if let Self::MixedAxis { fixed_axis } = self {
            if *fixed_axis >= m {
                return Err(CostError::Invalid(format!(
                    "fixed axis {fixed_axis} out of range for dimension {m}"
                )));
            }
        }
        Ok(())
    }

    /// True when `U(1)` is a polytope with finitely many vertices.
    pub fn is_polyhedral(&self) -> bool {
        matches!(self, Self::OneNorm | Self::PolyhedralThrusters(_))
    }

    /// `max_{u ∈ U(1)} vᵀu`.
    pub fn support(&self, v: &[f64]) -> f64 {
        match self {
            Self::TwoNorm => norm2(v),
            Self::OneNorm => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            Self::PolyhedralThrusters(t) => t.rows.iter().map(|r| dot(r.as_slice(), v)).fold(0.0f64, f64::max),
            Self::MixedAxis { fixed_axis } => {
                let (fixed, rest) = split_axis(v, *fixed_axis);
                fixed.abs().max(rest)
            }
            Self::Custom(c) => c.support(v),
        }
    }

    /// Unit-cost maximizers of `vᵀu` over `U(1)`; ties return every tied
    /// vertex.
    pub fn support_generators(&self, v: &[f64]) -> Result<Vec<DVector<f64>>, CostError> {
        let h = self.support(v);
        if !(h > 0.0) {
            return Err(CostError::NoAscentDirection);
        }
        let tied = |x: f64| x >= h * (1.0 - TIE_TOL);
        let out = match self {
            Self::TwoNorm => vec![DVector::from_iterator(v.len(), v.iter().map(|x| x / h))],
            Self::OneNorm => v
                .iter()
                .enumerate()
                .filter(|(_, x)| tied(x.abs()))
                .map(|(k, x)| {
                    let mut e = DVector::zeros(v.len());
                    e[k] = x.signum();
                    e
                })
                .collect(),
            Self::PolyhedralThrusters(t) => t.rows.iter().filter(|r| tied(dot(r.as_slice(), v))).cloned().collect(),
            Self::MixedAxis { fixed_axis } => {
                let (fixed, rest) = split_axis(v, *fixed_axis);
                let mut out = Vec::new();
                if tied(fixed.abs()) {
                    let mut e = DVector::zeros(v.len());
                    e[*fixed_axis] = fixed.signum();
                    out.push(e);
                }
                if tied(rest) {
                    let mut e = DVector::from_column_slice(v);
                    e[*fixed_axis] = 0.0;
                    out.push(e / rest);
                }
                out
            }
            Self::Custom(c) => c.support_generators(v),
        };
        if out.is_empty() {
            return Err(CostError::NoAscentDirection);
        }
        Ok(out)
    }

    /// Cost of applying `u`.
    pub fn cost_of(&self, u: &[f64]) -> Result<f64, CostError> {
        if u.iter().any(|x| !x.is_finite()) {
            return Err(CostError::Inadmissible(u.to_vec()));
        }
        match self {
            Self::TwoNorm => Ok(norm2(u)),
            Self::OneNorm => Ok(u.iter().map(|x| x.abs()).sum()),
            Self::PolyhedralThrusters(t) => {
                self.check_dim(u.len())?;
                t.gauge(u).ok_or_else(|| CostError::Inadmissible(u.to_vec()))
            }
            Self::MixedAxis { fixed_axis } => {
                self.check_dim(u.len())?;
                let (fixed, rest) = split_axis(u, *fixed_axis);
                Ok(fixed.abs() + rest)
            }
            Self::Custom(c) => c.cost_of(u),
        }
    }

    /// Extreme points of `U(1)` when there are finitely many.
    pub fn vertices(&self, m: usize) -> Option<Vec<DVector<f64>>> {
        match self {
            Self::OneNorm => Some(
                (0..m)
                    .flat_map(|k| {
                        [1.0, -1.0].map(|s| {
                            let mut e = DVector::zeros(m);
                            e[k] = s;
                            e
                        })
                    })
                    .collect(),
            ),
            Self::PolyhedralThrusters(t) => Some(t.rows.clone()),
            _ => None,
        }
    }
}

fn split_axis(v: &[f64], axis: usize) -> (f64, f64) {
    let rest = v
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != axis)
        .map(|(_, x)| x * x)
        .sum::<f64>()
        .sqrt();
    (v[axis], rest)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A cost paired with the discrete times at which it may be applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMode {
    pub id: usize,
    pub cost: CostModel,
    times: Vec<f64>,
}

impl ControlMode {
    pub fn new(id: usize, cost: CostModel, times: Vec<f64>) -> Result<Self, ScheduleError> {
        if times.is_empty() {
            return Err(ScheduleError::EmptyMode(id));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ScheduleError::UnsortedTimes(id));
        }
        Ok(Self { id, cost, times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("grid time {0} s is not covered by any cost piece")]
    Uncovered(f64),
    #[error("cost pieces {0} and {1} overlap on an open interval")]
    Overlap(usize, usize),
    #[error("mode {0} has no admissible times")]
    EmptyMode(usize),
    #[error("mode {0} times are not strictly increasing")]
    UnsortedTimes(usize),
    #[error("invalid interval [{0}, {1}]")]
    InvalidInterval(f64, f64),
    #[error("grid must be finite and strictly increasing")]
    BadGrid,
}

/// Time interval with per-end closedness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub start_closed: bool,
    pub end_closed: bool,
}

impl Interval {
    pub fn closed(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            start_closed: true,
            end_closed: true,
        }
    }

    /// `(start, end]`
    pub fn open_closed(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            start_closed: false,
            end_closed: true,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        let lo = if self.start_closed {
            t >= self.start
        } else {
            t > self.start
        };
        let hi = if self.end_closed { t <= self.end } else { t < self.end };
        lo && hi
    }

    fn interiors_overlap(&self, other: &Interval) -> bool {
        self.start.max(other.start) < self.end.min(other.end)
    }
}

/// One piece of a piecewise-defined cost `g(u, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostPiece {
    pub interval: Interval,
    pub cost: CostModel,
}

/// Control modes covering a scenario's time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSchedule {
    pub modes: Vec<ControlMode>,
}

impl ModeSchedule {
    pub fn single(cost: CostModel, grid: &[f64]) -> Result<Self, ScheduleError> {
        Ok(Self {
            modes: vec![ControlMode::new(0, cost, grid.to_vec())?],
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

/// Splits a piecewise cost into one mode per distinct cost model.
///
/// A grid time inside exactly one piece goes to that piece's mode. A time
/// on the closed ends of two pieces goes to the earlier piece, and also to
/// the later one when the later unit set fits inside the earlier one (the
/// boundary admissibility check with the earlier cost as the boundary cost).
pub fn decompose_schedule(pieces: &[CostPiece], grid: &[f64]) -> Result<ModeSchedule, ScheduleError> {
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ScheduleError::BadGrid);
    }
    for p in pieces {
        let iv = p.interval;
        if !(iv.start <= iv.end) || !iv.start.is_finite() || !iv.end.is_finite() {
            return Err(ScheduleError::InvalidInterval(iv.start, iv.end));
        }
    }
    for a in 0..pieces.len() {
        for b in a + 1..pieces.len() {
            if pieces[a].interval.interiors_overlap(&pieces[b].interval) {
                return Err(ScheduleError::Overlap(a, b));
            }
        }
    }

    // Distinct cost models become modes, in order of first appearance.
    let mut costs: Vec<CostModel> = Vec::new();
    let mut piece_mode = Vec::with_capacity(pieces.len());
    for p in pieces {
        let idx = match costs.iter().position(|c| *c == p.cost) {
            Some(i) => i,
            None => {
                costs.push(p.cost.clone());
                costs.len() - 1
            }
        };
        piece_mode.push(idx);
    }

    let mut times: Vec<Vec<f64>> = vec![Vec::new(); costs.len()];
    for &t in grid {
        let mut owners: Vec<usize> = (0..pieces.len()).filter(|&k| pieces[k].interval.contains(t)).collect();
        if owners.is_empty() {
            return Err(ScheduleError::Uncovered(t));
        }
        owners.sort_by(|&a, &b| pieces[a].interval.start.total_cmp(&pieces[b].interval.start));
        let first = owners[0];
        let mut modes = vec![piece_mode[first]];
        for &later in &owners[1..] {
            let (e, l) = (&pieces[first].cost, &pieces[later].cost);
            if matches!(validate_boundary(e, e, l), Ok(BoundaryCheck::Ok)) {
                modes.push(piece_mode[later]);
            }
        }
        modes.sort_unstable();
        modes.dedup();
        for m in modes {
            times[m].push(t);
        }
    }

    let mut modes = Vec::new();
    for (cost, ts) in costs.into_iter().zip(times) {
        if ts.is_empty() {
            continue;
        }
        let id = modes.len();
        modes.push(ControlMode::new(id, cost, ts)?);
    }
    Ok(ModeSchedule { modes })
}

/// Outcome of the boundary admissibility check.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCheck {
    Ok,
    Violation(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("boundary check unavailable: {0}")]
pub struct CheckUnavailable(pub String);

/// Checks that `hull(U_left(1) ∪ U_right(1)) ⊆ U_mid(1)` and the matching
/// cone inclusion.
///
/// Polytope sides are checked vertex by vertex against the middle cost.
/// Smooth sides are checked through their support functions on a fixed
/// set of sample directions.
pub fn validate_boundary(
    left: &CostModel,
    mid: &CostModel,
    right: &CostModel,
) -> Result<BoundaryCheck, CheckUnavailable> {
    if [left, mid, right].iter().any(|c| matches!(c, CostModel::Custom(_))) {
        return Err(CheckUnavailable("custom cost models".into()));
    }
    let dims: Vec<usize> = [left, mid, right].iter().filter_map(|c| c.dim()).collect();
    let m = dims.first().copied().unwrap_or(3);
    if dims.iter().any(|&d| d != m) {
        return Err(CheckUnavailable("cost models have different input dimensions".into()));
    }
    for c in [left, mid, right] {
        if c.check_dim(m).is_err() {
            return Err(CheckUnavailable(format!("{} not defined in dimension {m}", c.name())));
        }
    }
    if left == mid && right == mid {
        return Ok(BoundaryCheck::Ok);
    }
    const TOL: f64 = 1e-9;
    let directions = sample_directions(m, 2000);
    for (label, side) in [("left", left), ("right", right)] {
        if side == mid {
            continue;
        }
        if let Some(verts) = side.vertices(m) {
            for g in verts {
                match mid.cost_of(g.as_slice()) {
                    Ok(c) if c <= 1.0 + TOL => {}
                    Ok(c) => {
                        return Ok(BoundaryCheck::Violation(format!(
                            "{label} vertex {:?} has middle cost {c}",
                            g.as_slice()
                        )))
                    }
                    Err(_) => {
                        return Ok(BoundaryCheck::Violation(format!(
                            "{label} vertex {:?} is outside the middle cone",
                            g.as_slice()
                        )))
                    }
                }
            }
        } else {
            for v in &directions {
                let hs = side.support(v.as_slice());
                let hm = mid.support(v.as_slice());
                if hs > hm + TOL * (1.0 + hm) {
                    return Ok(BoundaryCheck::Violation(format!(
                        "{label} support {hs} exceeds middle support {hm} along {:?}",
                        v.as_slice()
                    )));
                }
            }
        }
    }
    Ok(BoundaryCheck::Ok)
}

/// Deterministic, roughly uniform unit vectors. Fibonacci lattice in 3-D,
/// a golden-ratio circle in 2-D, and a low-discrepancy Gaussian-free
/// construction through coordinate pairs otherwise.
pub fn sample_directions(m: usize, count: usize) -> Vec<DVector<f64>> {
    match m {
        0 => Vec::new(),
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..count)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        3 => fibonacci_sphere(count),
        _ => {
            // Halton-style radical inverses mapped through the inverse of a
            // simple box-to-sphere normalization.
            let primes = [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47];
            (1..=count)
                .map(|k| {
                    let mut v = DVector::zeros(m);
                    for d in 0..m {
                        let p = primes[d % primes.len()] + (d / primes.len()) as u64 * 53;
                        v[d] = 2.0 * radical_inverse(k as u64, p) - 1.0;
                    }
                    let n = v.norm();
                    if n > 0.0 {
                        v / n
                    } else {
                        let mut e = DVector::zeros(m);
                        e[0] = 1.0;
                        e
                    }
                })
                .collect()
        }
    }
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

pub fn fibonacci_sphere(count: usize) -> Vec<DVector<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..count)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tetra() -> CostModel {
        CostModel::PolyhedralThrusters(ThrusterSet::tetrahedral())
    }

    #[test]
    fn two_norm_support() {
        assert_eq!(CostModel::TwoNorm.support(&[3.0, 4.0, 0.0]), 5.0);
    }

    #[test]
    fn tetrahedral_support_along_row() {
        let t = ThrusterSet::tetrahedral();
        let r0 = t.rows()[0].clone();
        assert_relative_eq!(tetra().support(r0.as_slice()), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn tetrahedral_support_vertical() {
        // Rows 3 and 4 have z = √(1/3); rows 1 and 2 have −√(1/3).
        assert_relative_eq!(
            tetra().support(&[0.0, 0.0, 1.0]),
            (1.0f64 / 3.0).sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn tetrahedral_support_clamped_at_zero() {
        let t =
            CostModel::PolyhedralThrusters(ThrusterSet::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap());
        assert_eq!(t.support(&[-1.0, -1.0, 0.0]), 0.0);
        assert_eq!(
            t.support_generators(&[-1.0, -1.0, 0.0]),
            Err(CostError::NoAscentDirection)
        );
    }

    #[test]
    fn generators_examples() {
        let g = CostModel::TwoNorm.support_generators(&[0.0, 0.0, 2.0]).unwrap();
        assert_eq!(g, vec![DVector::from_vec(vec![0.0, 0.0, 1.0])]);

        let g = CostModel::OneNorm.support_generators(&[1.0, 1.0, 0.0]).unwrap();
        assert_eq!(
            g,
            vec![
                DVector::from_vec(vec![1.0, 0.0, 0.0]),
                DVector::from_vec(vec![0.0, 1.0, 0.0])
            ]
        );

        let rows = ThrusterSet::tetrahedral().rows().to_vec();
        let g = tetra().support_generators(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(g, vec![rows[2].clone(), rows[3].clone()]);
    }

    #[test]
    fn cost_examples() {
        let r0 = ThrusterSet::tetrahedral().rows()[0].clone() * 2.0;
        assert_relative_eq!(tetra().cost_of(r0.as_slice()).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(
            CostModel::MixedAxis { fixed_axis: 0 }
                .cost_of(&[1.0, 3.0, 4.0])
                .unwrap(),
            6.0
        );
        let g = CostModel::TwoNorm.support_generators(&[0.3, -2.0, 0.7]).unwrap();
        assert_relative_eq!(
            CostModel::TwoNorm.cost_of(g[0].as_slice()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_eq!(CostModel::TwoNorm.cost_of(&[0.0; 3]).unwrap(), 0.0);
        assert_eq!(tetra().cost_of(&[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn thruster_face_combination_costs_its_weights() {
        let rows = ThrusterSet::tetrahedral().rows().to_vec();
        let u = &rows[0] * 0.6 + &rows[1] * 0.4;
        assert_relative_eq!(tetra().cost_of(u.as_slice()).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn inadmissible_thruster_direction() {
        let t = CostModel::PolyhedralThrusters(
            ThrusterSet::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap(),
        );
        if let CostModel::PolyhedralThrusters(s) = &t {
            assert!(!s.positively_spanning());
        }
        assert!(matches!(t.cost_of(&[-1.0, 0.0, 0.0]), Err(CostError::Inadmissible(_))));
        assert!(ThrusterSet::tetrahedral().positively_spanning());
    }

    #[test]
    fn mixed_axis_generators_tie() {
        let g = CostModel::MixedAxis { fixed_axis: 0 }
            .support_generators(&[-5.0, 3.0, 4.0])
            .unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].as_slice(), &[-1.0, 0.0, 0.0]);
        assert_relative_eq!(g[1].as_slice()[1], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn decompose_piecewise_example() {
        let pieces = vec![
            CostPiece {
                interval: Interval::closed(0.0, 10.0),
                cost: CostModel::TwoNorm,
            },
            CostPiece {
                interval: Interval::open_closed(10.0, 20.0),
                cost: CostModel::OneNorm,
            },
        ];
        let s = decompose_schedule(&pieces, &[0.0, 5.0, 10.0, 15.0, 20.0]).unwrap();
        assert_eq!(s.modes.len(), 2);
        assert_eq!(s.modes[0].times(), &[0.0, 5.0, 10.0]);
        assert_eq!(s.modes[0].cost, CostModel::TwoNorm);
        assert_eq!(s.modes[1].times(), &[15.0, 20.0]);
    }

    #[test]
    fn decompose_single_piece() {
        let grid = [0.0, 1.0, 2.0];
        let s = decompose_schedule(
            &[CostPiece {
                interval: Interval::closed(0.0, 2.0),
                cost: CostModel::TwoNorm,
            }],
            &grid,
        )
        .unwrap();
        assert_eq!(s.modes.len(), 1);
        assert_eq!(s.modes[0].times(), &grid);
    }

    #[test]
    fn decompose_errors() {
        let piece = |a, b, c| CostPiece {
            interval: Interval::closed(a, b),
            cost: c,
        };
        assert_eq!(
            decompose_schedule(&[piece(0.0, 1.0, CostModel::TwoNorm)], &[0.0, 2.0]),
            Err(ScheduleError::Uncovered(2.0))
        );
        assert_eq!(
            decompose_schedule(
                &[piece(0.0, 2.0, CostModel::TwoNorm), piece(1.0, 3.0, CostModel::OneNorm)],
                &[0.0]
            ),
            Err(ScheduleError::Overlap(0, 1))
        );
    }

    #[test]
    fn shared_closed_boundary() {
        // Both pieces closed at 10. Entering the thruster window keeps the
        // time in both modes (tetrahedron ⊂ ball); leaving it does not.
        let grid = [0.0, 10.0, 20.0, 30.0];
        let pieces = vec![
            CostPiece {
                interval: Interval::closed(0.0, 10.0),
                cost: CostModel::TwoNorm,
            },
            CostPiece {
                interval: Interval::closed(10.0, 20.0),
                cost: tetra(),
            },
            CostPiece {
                interval: Interval::closed(20.0, 30.0),
                cost: CostModel::TwoNorm,
            },
        ];
        let s = decompose_schedule(&pieces, &grid).unwrap();
        assert_eq!(s.modes[0].times(), &[0.0, 10.0, 30.0]);
        assert_eq!(s.modes[1].times(), &[10.0, 20.0]);
    }

    #[test]
    fn boundary_checks() {
        use CostModel::*;
        assert_eq!(validate_boundary(&TwoNorm, &TwoNorm, &TwoNorm), Ok(BoundaryCheck::Ok));
        assert_eq!(validate_boundary(&OneNorm, &TwoNorm, &OneNorm), Ok(BoundaryCheck::Ok));
        // Cross-polytope vertices have unit 2-norm, so the hull stays in the ball.
        assert_eq!(validate_boundary(&TwoNorm, &TwoNorm, &OneNorm), Ok(BoundaryCheck::Ok));
        // The ball does not fit inside the cross-polytope.
        assert!(matches!(
            validate_boundary(&TwoNorm, &OneNorm, &TwoNorm),
            Ok(BoundaryCheck::Violation(_))
        ));
        assert!(matches!(
            validate_boundary(&TwoNorm, &tetra(), &tetra()),
            Ok(BoundaryCheck::Violation(_))
        ));
        assert_eq!(validate_boundary(&tetra(), &TwoNorm, &TwoNorm), Ok(BoundaryCheck::Ok));
    }

    #[derive(Debug)]
    struct Scaled;
    impl NormLikeCost for Scaled {
        fn name(&self) -> &str {
            "scaled"
        }
        fn dim(&self) -> Option<usize> {
            Some(3)
        }
        fn support(&self, v: &[f64]) -> f64 {
            0.5 * norm2(v)
        }
        fn support_generators(&self, v: &[f64]) -> Vec<DVector<f64>> {
            let n = norm2(v);
            vec![DVector::from_iterator(3, v.iter().map(|x| 0.5 * x / n))]
        }
        fn cost_of(&self, u: &[f64]) -> Result<f64, CostError> {
            Ok(2.0 * norm2(u))
        }
    }

    #[test]
    fn custom_cost_and_unavailable_check() {
        let c = CostModel::Custom(Arc::new(Scaled));
        assert_eq!(c.support(&[0.0, 2.0, 0.0]), 1.0);
        let g = c.support_generators(&[0.0, 2.0, 0.0]).unwrap();
        assert_eq!(c.cost_of(g[0].as_slice()).unwrap(), 1.0);
        assert!(validate_boundary(&c, &CostModel::TwoNorm, &c).is_err());
    }

    #[test]
    fn control_mode_invariants() {
        assert!(ControlMode::new(0, CostModel::TwoNorm, vec![]).is_err());
        assert!(ControlMode::new(0, CostModel::TwoNorm, vec![1.0, 1.0]).is_err());
        assert!(ControlMode::new(0, CostModel::TwoNorm, vec![1.0, 2.0]).is_ok());
    }
}
