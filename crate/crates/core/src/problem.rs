//! The generic problem handed to the solvers: a target pseudostate, `Γ(t)`
//! tabulated on a time grid, and the control modes over that grid.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::cost::{CostError, ModeSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("time grid is empty or not strictly increasing")]
    BadGrid,
    #[error("Γ at t = {t} has shape {rows}×{cols}, expected {n}×{m}")]
    Shape {
        t: f64,
        rows: usize,
        cols: usize,
        n: usize,
        m: usize,
    },
    #[error("Γ at t = {0} has non-finite entries")]
    NonFinite(f64),
    #[error("mode {mode} time {t} is not on the Γ grid")]
    OffGrid { mode: usize, t: f64 },
    #[error("pseudostate has dimension {got}, expected {expected}")]
    StateDim { expected: usize, got: usize },
    #[error("no control modes")]
    NoModes,
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("Γ evaluation failed at t = {t}: {msg}")]
    Evaluation { t: f64, msg: String },
}

/// `Γ(t)` (n×m) for every time of a grid, stored column-major per time.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTable {
    times: Vec<f64>,
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl GammaTable {
    /// Tabulates `f` over `times` in parallel.
    pub fn from_fn<F, E>(times: Vec<f64>, n: usize, m: usize, f: F) -> Result<Self, ProblemError>
    where
        F: Fn(f64) -> Result<DMatrix<f64>, E> + Sync,
        E: std::fmt::Display,
    {
        if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ProblemError::BadGrid);
        }
        let blocks: Vec<Vec<f64>> = times
            .par_iter()
            .map(|&t| {
                let g = f(t).map_err(|e| ProblemError::Evaluation { t, msg: e.to_string() })?;
                if g.nrows() != n || g.ncols() != m {
                    return Err(ProblemError::Shape {
                        t,
                        rows: g.nrows(),
                        cols: g.ncols(),
                        n,
                        m,
                    });
                }
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(ProblemError::NonFinite(t));
                }
                Ok(g.as_slice().to_vec())
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            times,
            n,
            m,
            data: blocks.concat(),
        })
    }

    pub fn from_matrices(times: Vec<f64>, mats: Vec<DMatrix<f64>>) -> Result<Self, ProblemError> {
        let (n, m) = mats.first().map(|g| g.shape()).ok_or(ProblemError::BadGrid)?;
        if mats.len() != times.len() || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ProblemError::BadGrid);
        }
        let mut data = Vec::with_capacity(times.len() * n * m);
        for (&t, g) in times.iter().zip(&mats) {
            if g.shape() != (n, m) {
                return Err(ProblemError::Shape {
                    t,
                    rows: g.nrows(),
                    cols: g.ncols(),
                    n,
                    m,
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(ProblemError::NonFinite(t));
            }
            data.extend_from_slice(g.as_slice());
        }
        Ok(Self { times, n, m, data })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    /// Column-major `Γ` block for grid index `k`.
    #[inline]
    pub fn block(&self, k: usize) -> &[f64] {
        let sz = self.n * self.m;
        &self.data[k * sz..(k + 1) * sz]
    }

    pub fn matrix(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n, self.m, self.block(k))
    }

    /// Writes `Γᵀ(t_k) λ` into `out`.
    #[inline]
    pub fn transpose_apply(&self, k: usize, lambda: &[f64], out: &mut [f64]) {
        let block = self.block(k);
        for (j, o) in out.iter_mut().enumerate().take(self.m) {
            let col = &block[j * self.n..(j + 1) * self.n];
            *o = col.iter().zip(lambda).map(|(a, b)| a * b).sum();
        }
    }

    /// `Γ(t_k) u`
    pub fn apply(&self, k: usize, u: &[f64]) -> DVector<f64> {
        let block = self.block(k);
        let mut out = DVector::zeros(self.n);
        for (j, uj) in u.iter().enumerate() {
            let col = &block[j * self.n..(j + 1) * self.n];
            for (o, c) in out.iter_mut().zip(col) {
                *o += c * uj;
            }
        }
        out
    }

    /// Grid index of an exact (to 1e-9 relative) time.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * (1.0 + t.abs());
        let k = self.times.partition_point(|&s| s < t - tol);
        (k < self.times.len() && (self.times[k] - t).abs() <= tol).then_some(k)
    }
}

/// An impulsive control problem on a discrete time grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub w: DVector<f64>,
    pub gamma: GammaTable,
    pub schedule: ModeSchedule,
    /// Grid indices of each mode's admissible times.
    mode_indices: Vec<Vec<usize>>,
}

impl Problem {
    pub fn new(w: DVector<f64>, gamma: GammaTable, schedule: ModeSchedule) -> Result<Self, ProblemError> {
        if schedule.is_empty() {
            return Err(ProblemError::NoModes);
        }
        if w.len() != gamma.state_dim() {
            return Err(ProblemError::StateDim {
                expected: gamma.state_dim(),
                got: w.len(),
            });
        }
        let mut mode_indices = Vec::with_capacity(schedule.len());
        for mode in &schedule.modes {
            mode.cost.check_dim(gamma.control_dim())?;
            let idx = mode
                .times()
                .iter()
                .map(|&t| gamma.index_of(t).ok_or(ProblemError::OffGrid { mode: mode.id, t }))
                .collect::<Result<Vec<_>, _>>()?;
            mode_indices.push(idx);
        }
        Ok(Self {
            w,
            gamma,
            schedule,
            mode_indices,
        })
    }

    /// Same dynamics and modes with a different target.
    pub fn with_target(&self, w: DVector<f64>) -> Result<Self, ProblemError> {
        if w.len() != self.gamma.state_dim() {
            return Err(ProblemError::StateDim {
                expected: self.gamma.state_dim(),
                got: w.len(),
            });
        }
        Ok(Self { w, ..self.clone() })
    }

    pub fn mode_count(&self) -> usize {
        self.schedule.len()
    }

    pub fn mode_indices(&self, mode: usize) -> &[usize] {
        &self.mode_indices[mode]
    }

    /// `max_{u ∈ U_j(1)} λᵀ Γ(t_k) u`
    #[inline]
    pub fn support_at(&self, mode: usize, k: usize, lambda: &[f64], buf: &mut [f64]) -> f64 {
        self.gamma.transpose_apply(k, lambda, buf);
        self.schedule.modes[mode].cost.support(buf)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.gamma.times()[k]
    }

    pub fn state_dim(&self) -> usize {
        self.gamma.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.gamma.control_dim()
    }

    /// Largest constraint value over every mode and grid time, with its
    /// location.
    pub fn global_max_support(&self, lambda: &[f64]) -> (f64, usize, usize) {
        let m = self.control_dim();
        (0..self.mode_count())
            .into_par_iter()
            .map(|j| {
                let mut buf = vec![0.0; m];
                let mut best = (f64::NEG_INFINITY, j, usize::MAX);
                for &k in self.mode_indices(j) {
                    let p = self.support_at(j, k, lambda, &mut buf);
                    if p > best.0 {
                        best = (p, j, k);
                    }
                }
                best
            })
            .reduce(
                || (f64::NEG_INFINITY, 0, usize::MAX),
                |a, b| if b.0 > a.0 { b } else { a },
            )
    }
}
