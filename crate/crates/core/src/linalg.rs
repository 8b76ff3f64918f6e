//! Dense helpers for the small systems (p <= 12) solved by the unpenalized fits.

use nalgebra::{Cholesky, DMatrix, DVector};

/// Least-squares solution via Householder QR.
pub(crate) struct QrSolution {
    pub coef: DVector<f64>,
    /// `(X'X)^{-1}`.
    pub xtx_inv: DMatrix<f64>,
}

/// Solves `min ||y - X b||`. Returns `Err(j)` when column `j` is (numerically)
/// a linear combination of the columns before it.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<QrSolution, usize> {
    let p = x.ncols();
    let norms: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = norms.iter().cloned().fold(0.0, f64::max);
    for j in 0..p {
        let tol = 1e-10 * norms[j].max(1e-12 * scale);
        if norms[j] == 0.0 || r[(j, j)].abs() <= tol {
            return Err(j);
        }
    }
    let qty = qr.q().transpose() * y;
    let coef = r.solve_upper_triangular(&qty).ok_or(0usize)?;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(p, p)).ok_or(0usize)?;
    let xtx_inv = &r_inv * r_inv.transpose();
    Ok(QrSolution { coef, xtx_inv })
}

/// Cholesky solve and inverse of a symmetric positive-definite matrix.
pub(crate) fn spd_solve_and_inverse(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let chol = Cholesky::new(a.clone())?;
    let x = chol.solve(b);
    let inv = chol.inverse();
    if x.iter().all(|v| v.is_finite()) && inv.iter().all(|v| v.is_finite()) {
        Some((x, inv))
    } else {
        None
    }
}

/// Column means and population standard deviations.
pub(crate) fn column_moments(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    let mut sds = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let m = col.iter().sum::<f64>() / n;
        let v = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        means.push(m);
        sds.push(v.sqrt());
    }
    (means, sds)
}
