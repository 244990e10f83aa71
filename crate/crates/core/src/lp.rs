//! Dense linear programming for problems with few variables and many
//! constraints.
//!
//! [`lp_solve`] maximizes `cᵀx` subject to `aᵢᵀx ≤ bᵢ` and `|x_k| ≤ R`. It
//! runs a revised primal simplex on the LP dual
//!
//! ```text
//! minimize  bᵀy + R·Σ(s⁺ + s⁻)
//! s.t.      Aᵀy + s⁺ − s⁻ = c,   y, s⁺, s⁻ ≥ 0
//! ```
//!
//! which has only `n` equality rows, so the basis stays `n × n` however many
//! constraints there are. The slack columns give a feasible starting basis,
//! and the simplex multipliers of the final basis are the primal solution.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("LP is infeasible")]
    Infeasible,
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("invalid LP input: {0}")]
    Invalid(String),
}

/// Constraint rows stored contiguously, `n` entries per row.
#[derive(Debug, Clone, Default)]
pub struct Constraints {
    n: usize,
    rows: Vec<f64>,
    rhs: Vec<f64>,
}

impl Constraints {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, m: usize) -> Self {
        Self {
            n,
            rows: Vec::with_capacity(n * m),
            rhs: Vec::with_capacity(m),
        }
    }

    pub fn push(&mut self, row: &[f64], rhs: f64) {
        assert_eq!(row.len(), self.n, "constraint row length");
        self.rows.extend_from_slice(row);
        self.rhs.push(rhs);
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n..(i + 1) * self.n]
    }

    pub fn rhs(&self, i: usize) -> f64 {
        self.rhs[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// `cᵀx`
    pub objective: f64,
    /// Multipliers of the general constraints.
    pub duals: Vec<f64>,
    /// Multipliers of `x_k ≤ R`.
    pub upper_box_duals: Vec<f64>,
    /// Multipliers of `−x_k ≤ R`.
    pub lower_box_duals: Vec<f64>,
    /// Objective of the dual certificate.
    pub dual_objective: f64,
    pub box_radius: f64,
    /// `max_i yᵢ·|slackᵢ|` over all constraints including the box.
    pub complementarity: f64,
    /// Largest constraint violation of `x`, including the box.
    pub max_violation: f64,
    pub iterations: usize,
}

impl LpSolution {
    /// Relative gap between the primal and dual objectives.
    pub fn relative_gap(&self) -> f64 {
        (self.objective - self.dual_objective).abs() / self.objective.abs().max(1.0)
    }

    /// True when the box multipliers carry more than round-off of the
    /// objective, meaning the box shapes the optimum.
    pub fn box_active(&self) -> bool {
        let from_box = self.box_radius * self.upper_box_duals.iter().chain(&self.lower_box_duals).sum::<f64>();
        from_box > 1e-9 * self.dual_objective.abs()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    pub max_iterations: usize,
    /// Basis inverse is recomputed from scratch at this period.
    pub refactor_every: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            refactor_every: 64,
        }
    }
}

/// Maximizes `cᵀx` subject to `constraints` and `|x_k| ≤ box_radius`.
pub fn lp_solve(c: &[f64], constraints: &Constraints, box_radius: f64) -> Result<LpSolution, LpError> {
    lp_solve_with(c, constraints, box_radius, LpOptions::default())
}

pub fn lp_solve_with(
    c: &[f64],
    constraints: &Constraints,
    box_radius: f64,
    opts: LpOptions,
) -> Result<LpSolution, LpError> {
    let n = c.len();
    if n == 0 || constraints.dim() != n {
        return Err(LpError::Invalid(format!(
            "objective has {n} entries, constraints have {}",
            constraints.dim()
        )));
    }
    if !(box_radius > 0.0) || !box_radius.is_finite() {
        return Err(LpError::Invalid(format!("box radius {box_radius}")));
    }
    if c.iter()
        .chain(&constraints.rows)
        .chain(&constraints.rhs)
        .any(|v| !v.is_finite())
    {
        return Err(LpError::Invalid("non-finite input".into()));
    }
    Simplex::new(c, constraints, box_radius).run(opts)
}

/// Column kinds of the standard-form dual: `m` scaled constraint columns,
/// then `n` columns `+e_k`, then `n` columns `−e_k`.
struct Simplex<'a> {
    n: usize,
    m: usize,
    c: &'a [f64],
    /// Row-major unit-norm copies of the constraint rows.
    cols: Vec<f64>,
    /// Scaled right-hand sides.
    cost: Vec<f64>,
    /// Row norms used for scaling; zero rows keep norm 1.
    norms: Vec<f64>,
    radius: f64,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// Row-major `B⁻¹`.
    binv: Vec<f64>,
    /// Values of the basic variables.
    xb: Vec<f64>,
}

impl<'a> Simplex<'a> {
    fn new(c: &'a [f64], cons: &Constraints, radius: f64) -> Self {
        let n = c.len();
        let m = cons.len();
        let mut cols = Vec::with_capacity(n * m);
        let mut cost = Vec::with_capacity(m + 2 * n);
        let mut norms = Vec::with_capacity(m);
        for i in 0..m {
            let row = cons.row(i);
            let nrm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let s = if nrm > 0.0 { nrm } else { 1.0 };
            cols.extend(row.iter().map(|v| v / s));
            cost.push(cons.rhs(i) / s);
            norms.push(s);
        }
        cost.extend(std::iter::repeat_n(radius, 2 * n));

        // Start from the slack basis: column +e_k when c_k ≥ 0, else −e_k.
        let mut basis = Vec::with_capacity(n);
        let mut binv = vec![0.0; n * n];
        let mut xb = Vec::with_capacity(n);
        for k in 0..n {
            if c[k] >= 0.0 {
                basis.push(m + k);
                binv[k * n + k] = 1.0;
            } else {
                basis.push(m + n + k);
                binv[k * n + k] = -1.0;
            }
            xb.push(c[k].abs());
        }
        let mut is_basic = vec![false; m + 2 * n];
        for &b in &basis {
            is_basic[b] = true;
        }
        Self {
            n,
            m,
            c,
            cols,
            cost,
            norms,
            radius,
            basis,
            is_basic,
            binv,
            xb,
        }
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        let n = self.n;
        if j < self.m {
            out.copy_from_slice(&self.cols[j * n..(j + 1) * n]);
        } else {
            out.fill(0.0);
            let k = (j - self.m) % n;
            out[k] = if j < self.m + n { 1.0 } else { -1.0 };
        }
    }

    /// `aⱼᵀπ`
    #[inline]
    fn column_dot(&self, j: usize, pi: &[f64]) -> f64 {
        let n = self.n;
        if j < self.m {
            self.cols[j * n..(j + 1) * n].iter().zip(pi).map(|(a, b)| a * b).sum()
        } else {
            let k = (j - self.m) % n;
            if j < self.m + n {
                pi[k]
            } else {
                -pi[k]
            }
        }
    }

    fn multipliers(&self) -> Vec<f64> {
        let n = self.n;
        let mut pi = vec![0.0; n];
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = self.cost[b];
            if cb != 0.0 {
                for (k, p) in pi.iter_mut().enumerate() {
                    *p += cb * self.binv[r * n + k];
                }
            }
        }
        pi
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let n = self.n;
        let mut b = DMatrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for (r, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for k in 0..n {
                b[(k, r)] = col[k];
            }
        }
        let inv = b.try_inverse().ok_or(LpError::Invalid("singular basis".into()))?;
        for r in 0..n {
            for k in 0..n {
                self.binv[r * n + k] = inv[(r, k)];
            }
        }
        for r in 0..n {
            self.xb[r] = (0..n).map(|k| self.binv[r * n + k] * self.c[k]).sum::<f64>().max(0.0);
        }
        Ok(())
    }

    fn run(mut self, opts: LpOptions) -> Result<LpSolution, LpError> {
        let n = self.n;
        let total = self.m + 2 * n;
        let cost_scale = self.cost.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
        // Reduced costs carry round-off of this order; swapping two parallel
        // columns must not look like progress.
        let opt_tol = 1e-11 * cost_scale;
        let piv_tol = 1e-11;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let c_scale = self.c.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let gain_tol = 1e-14 * cost_scale * c_scale.max(f64::MIN_POSITIVE);
        let mut aq = vec![0.0; n];
        let mut d = vec![0.0; n];

        for iter in 0..opts.max_iterations {
            if iter > 0 && iter % opts.refactor_every == 0 {
                self.refactor()?;
            }
            let pi = self.multipliers();
            // Once progress has stalled, stay with Bland's rule: switching
            // back on a round-off sized step can re-enter the cycle.
            bland |= degenerate_run > 50;

            // Pricing: most negative reduced cost, or the first one under
            // Bland's rule when progress has stalled.
            let mut entering = None;
            let mut best = -opt_tol;
            for j in 0..total {
                if self.is_basic[j] {
                    continue;
                }
                let rc = self.cost[j] - self.column_dot(j, &pi);
                if rc < best {
                    best = rc;
                    entering = Some(j);
                    if bland {
                        break;
                    }
                }
            }
            let Some(q) = entering else {
                return Ok(self.finish(pi, iter));
            };

            self.column(q, &mut aq);
            for (r, dr) in d.iter_mut().enumerate() {
                *dr = (0..n).map(|k| self.binv[r * n + k] * aq[k]).sum();
            }

            // Ratio test; ties prefer the larger pivot, or the smaller basic
            // index under Bland's rule.
            let mut leave = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..n {
                if d[r] > piv_tol {
                    let ratio = self.xb[r].max(0.0) / d[r];
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            if ratio < best_ratio * (1.0 - 1e-12) - 1e-300 {
                                true
                            } else if ratio <= best_ratio * (1.0 + 1e-12) + 1e-300 {
                                if bland {
                                    self.basis[r] < self.basis[l]
                                } else {
                                    d[r] > d[l]
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        best_ratio = best_ratio.min(ratio);
                        leave = Some(r);
                    }
                }
            }
            // An unbounded dual ray means the primal has no feasible point.
            let Some(r) = leave else {
                return Err(LpError::Infeasible);
            };
            let step = self.xb[r].max(0.0) / d[r];
            degenerate_run = if -best * step <= gain_tol {
                degenerate_run + 1
            } else {
                0
            };

            for i in 0..n {
                if i != r {
                    self.xb[i] = (self.xb[i] - step * d[i]).max(0.0);
                }
            }
            self.xb[r] = step;

            // Elementary row operations on B⁻¹.
            let piv = d[r];
            for k in 0..n {
                self.binv[r * n + k] /= piv;
            }
            for i in 0..n {
                if i != r && d[i] != 0.0 {
                    let f = d[i];
                    for k in 0..n {
                        self.binv[i * n + k] -= f * self.binv[r * n + k];
                    }
                }
            }
            self.is_basic[self.basis[r]] = false;
            self.is_basic[q] = true;
            self.basis[r] = q;
        }
        Err(LpError::IterationLimit(opts.max_iterations))
    }

    fn finish(self, x: Vec<f64>, iterations: usize) -> LpSolution {
        let n = self.n;
        let m = self.m;
        let mut duals = vec![0.0; m];
        let mut upper = vec![0.0; n];
        let mut lower = vec![0.0; n];
        for (r, &j) in self.basis.iter().enumerate() {
            let v = self.xb[r];
            if j < m {
                duals[j] = v / self.norms[j];
            } else if j < m + n {
                upper[j - m] = v;
            } else {
                lower[j - m - n] = v;
            }
        }
        let objective = self.c.iter().zip(&x).map(|(a, b)| a * b).sum();
        let mut dual_objective = 0.0;
        let mut complementarity = 0.0f64;
        let mut max_violation = 0.0f64;
        for i in 0..m {
            let lhs: f64 = self.cols[i * n..(i + 1) * n].iter().zip(&x).map(|(a, b)| a * b).sum();
            let slack = (self.cost[i] - lhs) * self.norms[i];
            dual_objective += duals[i] * self.cost[i] * self.norms[i];
            complementarity = complementarity.max(duals[i] * slack.abs());
            max_violation = max_violation.max(-slack);
        }
        for k in 0..n {
            dual_objective += self.radius * (upper[k] + lower[k]);
            complementarity = complementarity
                .max(upper[k] * (self.radius - x[k]).abs())
                .max(lower[k] * (self.radius + x[k]).abs());
            max_violation = max_violation.max(x[k].abs() - self.radius);
        }
        LpSolution {
            x,
            objective,
            duals,
            upper_box_duals: upper,
            lower_box_duals: lower,
            dual_objective,
            box_radius: self.radius,
            complementarity,
            max_violation: max_violation.max(0.0),
            iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cons(n: usize, rows: &[(&[f64], f64)]) -> Constraints {
        let mut c = Constraints::new(n);
        for (r, b) in rows {
            c.push(r, *b);
        }
        c
    }

    #[test]
    fn single_bound() {
        let s = lp_solve(&[1.0], &cons(1, &[(&[1.0], 1.0)]), 10.0).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
        assert!(!s.box_active());
    }

    #[test]
    fn degenerate_face() {
        let s = lp_solve(&[1.0, 1.0], &cons(2, &[(&[1.0, 1.0], 1.0), (&[1.0, 0.0], 0.7)]), 10.0).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!(s.max_violation < 1e-12);
        assert!(s.relative_gap() < 1e-12);
    }

    #[test]
    fn box_binds_without_constraints() {
        let s = lp_solve(&[2.0, -1.0], &Constraints::new(2), 3.0).unwrap();
        assert_eq!(s.x, vec![3.0, -3.0]);
        assert!((s.objective - 9.0).abs() < 1e-12);
        assert!(s.box_active());
    }

    #[test]
    fn infeasible_is_reported() {
        // x ≤ −1 and −x ≤ −1
        let r = lp_solve(&[1.0], &cons(1, &[(&[1.0], -1.0), (&[-1.0], -1.0)]), 10.0);
        assert_eq!(r, Err(LpError::Infeasible));
    }

    #[test]
    fn scaled_rows_do_not_change_solution() {
        let a = lp_solve(&[1.0, 2.0], &cons(2, &[(&[1.0, 1.0], 1.0), (&[0.0, 1.0], 0.5)]), 10.0).unwrap();
        let b = lp_solve(
            &[1.0, 2.0],
            &cons(2, &[(&[1e6, 1e6], 1e6), (&[0.0, 1e-6], 0.5e-6)]),
            10.0,
        )
        .unwrap();
        for (u, v) in a.x.iter().zip(&b.x) {
            assert!((u - v).abs() < 1e-10);
        }
        assert!((a.duals[0] - 1e6 * b.duals[0]).abs() < 1e-9);
    }
}
