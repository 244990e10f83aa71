//! Weighted nonnegative least squares, `min (w − Yα)ᵀQ(w − Yα)` over
//! `α ≥ 0`, by the Lawson–Hanson active-set method.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnlsError {
    #[error("weight matrix is not symmetric positive definite")]
    WeightNotPd,
    #[error("dimension mismatch: Y is {rows}×{cols}, w has {w}, Q is {q}×{q}")]
    Dimension {
        rows: usize,
        cols: usize,
        w: usize,
        q: usize,
    },
    #[error("NNLS iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("no columns")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub alpha: DVector<f64>,
    /// `(w − Yα)ᵀQ(w − Yα)`
    pub objective: f64,
    /// `YᵀQ(Yα − w)`
    pub gradient: DVector<f64>,
    pub iterations: usize,
}

impl NnlsSolution {
    /// Largest violation of `g_i ≥ 0` and `α_i g_i = 0`, each entry scaled by
    /// `‖Lᵀy_i‖·‖Lᵀw‖` so the check is independent of units.
    pub fn kkt_violation(&self, y: &DMatrix<f64>, w: &DVector<f64>, q: &DMatrix<f64>) -> f64 {
        let Some(chol) = q.clone().cholesky() else {
            return f64::INFINITY;
        };
        let lt = chol.l().transpose();
        let bn = (&lt * w).norm().max(f64::MIN_POSITIVE);
        let a = &lt * y;
        let mut worst = 0.0f64;
        for i in 0..y.ncols() {
            let an = a.column(i).norm().max(f64::MIN_POSITIVE);
            let g = self.gradient[i] / (an * bn);
            worst = worst.max(-g);
            worst = worst.max((self.alpha[i] * an / bn * g).abs());
        }
        worst
    }
}

/// Solves `min (w − Yα)ᵀQ(w − Yα)` subject to `α ≥ 0`.
pub fn nnls(y: &DMatrix<f64>, w: &DVector<f64>, q: &DMatrix<f64>) -> Result<NnlsSolution, NnlsError> {
    let (n, k) = y.shape();
    if k == 0 {
        return Err(NnlsError::Empty);
    }
    if w.len() != n || q.shape() != (n, n) {
        return Err(NnlsError::Dimension {
            rows: n,
            cols: k,
            w: w.len(),
            q: q.nrows(),
        });
    }
    if (q - q.transpose()).amax() > 1e-12 * q.amax() {
        return Err(NnlsError::WeightNotPd);
    }
    let chol = q.clone().cholesky().ok_or(NnlsError::WeightNotPd)?;
    let lt = chol.l().transpose();

    // Unit-norm columns keep the active-set decisions scale free.
    let mut a = &lt * y;
    let b = &lt * w;
    let mut scale = DVector::from_element(k, 1.0);
    for i in 0..k {
        let nrm = a.column(i).norm();
        if nrm > 0.0 {
            scale[i] = nrm;
            a.column_mut(i).unscale_mut(nrm);
        }
    }

    let (x, iterations) = lawson_hanson(&a, &b)?;
    let alpha = x.component_div(&scale);
    let resid = y * &alpha - w;
    let qr = q * &resid;
    Ok(NnlsSolution {
        objective: resid.dot(&qr),
        gradient: y.transpose() * qr,
        alpha,
        iterations,
    })
}

fn lawson_hanson(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, usize), NnlsError> {
    let k = a.ncols();
    let max_iter = 30 * k.max(10);
    let tol = 1e-13 * (1.0 + b.norm());
    let mut x = DVector::zeros(k);
    let mut passive = vec![false; k];
    // Columns whose entry was undone by round-off; retried once x moves.
    let mut rejected = vec![false; k];
    let mut iterations = 0;

    loop {
        let g = a.transpose() * (b - a * &x);
        let Some((j, gj)) = (0..k)
            .filter(|&i| !passive[i] && !rejected[i])
            .map(|i| (i, g[i]))
            .max_by(|p, q| p.1.total_cmp(&q.1))
        else {
            break;
        };
        if gj <= tol {
            break;
        }
        passive[j] = true;
        let mut entering = true;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(NnlsError::IterationLimit(max_iter));
            }
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let s = least_squares(a, b, &idx);
            if entering {
                entering = false;
                let sj = idx.iter().zip(s.iter()).find(|(&i, _)| i == j).map_or(0.0, |(_, &v)| v);
                if sj <= 0.0 {
                    passive[j] = false;
                    rejected[j] = true;
                    break;
                }
            }
            if idx.iter().zip(s.iter()).all(|(_, &v)| v > 0.0) {
                rejected.fill(false);
                x.fill(0.0);
                for (&i, &v) in idx.iter().zip(s.iter()) {
                    x[i] = v;
                }
                break;
            }
            // Step toward s until the first passive coefficient hits zero.
            let mut theta = 1.0f64;
            for (&i, &v) in idx.iter().zip(s.iter()) {
                if v <= 0.0 {
                    let denom = x[i] - v;
                    if denom > 0.0 {
                        theta = theta.min(x[i] / denom);
                    }
                }
            }
            for (&i, &v) in idx.iter().zip(s.iter()) {
                x[i] += theta * (v - x[i]);
                if x[i] <= 1e-15 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            rejected.fill(false);
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Ok((x, iterations))
}

/// Least squares on the columns `idx`, minimum norm when rank deficient.
fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let sub = a.select_columns(idx);
    let svd = sub.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max();
    svd.solve(b, eps).expect("SVD has both factors")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_reproduces_nonnegative_target() {
        let y = DMatrix::identity(6, 6);
        let w = DVector::from_vec(vec![1.0, 0.0, 2.5, 3.0, 0.1, 7.0]);
        let s = nnls(&y, &w, &DMatrix::identity(6, 6)).unwrap();
        assert!((s.alpha - &w).amax() < 1e-12);
        assert!(s.objective < 1e-20);
    }

    #[test]
    fn opposite_column_gives_zero() {
        let y = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, -1.0]);
        let w = -y.column(0).into_owned();
        let s = nnls(&y, &w, &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(s.alpha[0], 0.0);
        assert!((s.objective - 6.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_weight() {
        let y = DMatrix::identity(2, 2);
        let w = DVector::from_element(2, 1.0);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(nnls(&y, &w, &q), Err(NnlsError::WeightNotPd));
    }

    #[test]
    fn weight_changes_projection() {
        // One column (1, 1); target (1, 0). With Q = diag(1, 0.01) the fit
        // favors the first component.
        let y = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let w = DVector::from_vec(vec![1.0, 0.0]);
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.01]));
        let s = nnls(&y, &w, &q).unwrap();
        assert!((s.alpha[0] - 1.0 / 1.01).abs() < 1e-12);
    }
}
