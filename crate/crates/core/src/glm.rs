//! Unpenalized Gaussian and logistic regression with Wald-type inference.
//!
//! Both fits prepend an intercept. Reported vectors are ordered
//! `[intercept, design columns...]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_moments, least_squares, spd_solve_and_inverse};
use crate::stats::{normal_two_sided_p, t_two_sided_p};

/// Standardized-scale coefficient magnitude that flags quasi-complete separation.
pub const SEPARATION_THRESHOLD: f64 = 30.0;

/// Output of an unpenalized fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    /// Wald z (logistic, Cox) or t (OLS) statistics.
    pub statistic: Vec<f64>,
    pub p_value: Vec<f64>,
    pub converged: bool,
    pub n_used: usize,
    pub iterations: usize,
}

impl FitSummary {
    pub(crate) fn from_estimates(
        coef: Vec<f64>,
        se: Vec<f64>,
        p_of: impl Fn(f64) -> f64,
        converged: bool,
        n_used: usize,
        iterations: usize,
    ) -> Self {
        let statistic: Vec<f64> = coef
            .iter()
            .zip(&se)
            .map(|(&b, &s)| {
                if s > 0.0 {
                    b / s
                } else if b == 0.0 {
                    0.0
                } else {
                    f64::INFINITY.copysign(b)
                }
            })
            .collect();
        let p_value = statistic.iter().map(|&z| p_of(z)).collect();
        Self { coef, se, statistic, p_value, converged, n_used, iterations }
    }
}

fn with_intercept(design: &DMatrix<f64>) -> DMatrix<f64> {
    let n = design.nrows();
    let mut x = DMatrix::from_element(n, design.ncols() + 1, 1.0);
    x.columns_mut(1, design.ncols()).copy_from(design);
    x
}

fn check_design(design: &DMatrix<f64>, n_response: usize) -> Result<()> {
    if design.ncols() == 0 {
        return Err(Error::InvalidParameter("design needs at least one column".into()));
    }
    if design.nrows() != n_response {
        return Err(Error::InvalidParameter(format!(
            "design has {} rows but response has {}",
            design.nrows(),
            n_response
        )));
    }
    if design.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("design contains non-finite values".into()));
    }
    Ok(())
}

/// Ordinary least squares with t-based inference on `n - p - 1` degrees of freedom.
pub fn fit_ols(design: &DMatrix<f64>, response: &[f64]) -> Result<FitSummary> {
    check_design(design, response.len())?;
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("response contains non-finite values".into()));
    }
    let n = design.nrows();
    let p = design.ncols();
    if n <= p + 1 {
        return Err(Error::InsufficientData(format!("OLS with {p} covariates needs n > {}, got n = {n}", p + 1)));
    }
    let x = with_intercept(design);
    let y = DVector::from_column_slice(response);
    let sol = least_squares(&x, &y).map_err(|j| Error::NonIdentifiable {
        column: j.checked_sub(1),
        reason: format!("design column {} is collinear with earlier columns", j as isize - 1),
    })?;
    let resid = &y - &x * &sol.coef;
    let df = (n - p - 1) as f64;
    let sigma2 = resid.norm_squared() / df;
    let se = (0..=p).map(|k| (sigma2 * sol.xtx_inv[(k, k)]).max(0.0).sqrt()).collect();
    Ok(FitSummary::from_estimates(
        sol.coef.iter().copied().collect(),
        se,
        |t| t_two_sided_p(t, df),
        true,
        n,
        1,
    ))
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic_loglik(z: &DMatrix<f64>, y: &[f64], gamma: &DVector<f64>) -> f64 {
    let eta = z * gamma;
    eta.iter().zip(y).map(|(&e, &yi)| yi * e - log1p_exp(e)).sum()
}

fn logistic_score_info(z: &DMatrix<f64>, y: &[f64], gamma: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eta = z * gamma;
    let mu: Vec<f64> = eta.iter().map(|&e| 1.0 / (1.0 + (-e).exp())).collect();
    let resid = DVector::from_iterator(y.len(), y.iter().zip(&mu).map(|(yi, m)| yi - m));
    let score = z.transpose() * resid;
    let mut zw = z.clone();
    for (i, m) in mu.iter().enumerate() {
        let w = m * (1.0 - m);
        zw.row_mut(i).scale_mut(w);
    }
    let info = z.transpose() * zw;
    (score, info)
}

/// Logistic regression by iteratively reweighted least squares (Newton steps
/// with step-halving), Wald standard errors and normal p-values.
///
/// Columns are standardized internally; the separation check applies to the
/// standardized coefficients.
pub fn fit_logistic(design: &DMatrix<f64>, response: &[bool], max_iter: usize, tol: f64) -> Result<FitSummary> {
    check_design(design, response.len())?;
    let n = design.nrows();
    let p = design.ncols();
    let n_pos = response.iter().filter(|&&r| r).count();
    if n_pos == 0 || n_pos == n {
        return Err(Error::NonIdentifiable {
            column: None,
            reason: "response has a single class".into(),
        });
    }
    if n <= p + 1 {
        return Err(Error::InsufficientData(format!(
            "logistic regression with {p} covariates needs n > {}, got n = {n}",
            p + 1
        )));
    }
    let (means, sds) = column_moments(design);
    if let Some(j) = sds.iter().position(|&s| s == 0.0) {
        return Err(Error::NonIdentifiable { column: Some(j), reason: format!("design column {j} is constant") });
    }
    let mut z = DMatrix::from_element(n, p + 1, 1.0);
    for j in 0..p {
        for i in 0..n {
            z[(i, j + 1)] = (design[(i, j)] - means[j]) / sds[j];
        }
    }
    let y: Vec<f64> = response.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect();

    let ybar = n_pos as f64 / n as f64;
    let mut gamma = DVector::zeros(p + 1);
    gamma[0] = (ybar / (1.0 - ybar)).ln();
    let mut loglik = logistic_loglik(&z, &y, &gamma);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let (score, info) = logistic_score_info(&z, &y, &gamma);
        let (step, _) = spd_solve_and_inverse(&info, &score).ok_or(Error::Singular)?;
        let mut t = 1.0;
        let mut candidate = &gamma + &step;
        let mut cand_ll = logistic_loglik(&z, &y, &candidate);
        let mut halvings = 0;
        while !(cand_ll >= loglik) && halvings < 30 {
            t *= 0.5;
            candidate = &gamma + &step * t;
            cand_ll = logistic_loglik(&z, &y, &candidate);
            halvings += 1;
        }
        if !cand_ll.is_finite() {
            return Err(Error::Evaluation("logistic log-likelihood"));
        }
        if !(cand_ll >= loglik) {
            // no ascent along the Newton direction: already at the optimum numerically
            converged = true;
            break;
        }
        if let Some((j, v)) = gamma_separation(&candidate) {
            return Err(Error::Separation { column: j, value: v });
        }
        let rel = (cand_ll - loglik).abs() / (cand_ll.abs() + 0.1);
        gamma = candidate;
        loglik = cand_ll;
        if rel < tol {
            // one polishing Newton step drives the score to rounding level
            let (score, info) = logistic_score_info(&z, &y, &gamma);
            if let Some((step, _)) = spd_solve_and_inverse(&info, &score) {
                let polished = &gamma + &step;
                let ll = logistic_loglik(&z, &y, &polished);
                if ll >= loglik {
                    gamma = polished;
                }
            }
            converged = true;
            break;
        }
    }
    if !converged {
        let last = unstandardize_coef(&gamma, &means, &sds);
        return Err(Error::Convergence { iterations, last });
    }
    if let Some((j, v)) = gamma_separation(&gamma) {
        return Err(Error::Separation { column: j, value: v });
    }

    let (_, info) = logistic_score_info(&z, &y, &gamma);
    let (_, cov_std) = spd_solve_and_inverse(&info, &DVector::zeros(p + 1)).ok_or(Error::Singular)?;
    // b = A gamma maps the standardized fit back to the original columns
    let mut a = DMatrix::zeros(p + 1, p + 1);
    a[(0, 0)] = 1.0;
    for j in 0..p {
        a[(0, j + 1)] = -means[j] / sds[j];
        a[(j + 1, j + 1)] = 1.0 / sds[j];
    }
    let cov = &a * cov_std * a.transpose();
    let coef = unstandardize_coef(&gamma, &means, &sds);
    let se = (0..=p).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
    Ok(FitSummary::from_estimates(coef, se, normal_two_sided_p, true, n, iterations))
}

fn gamma_separation(gamma: &DVector<f64>) -> Option<(usize, f64)> {
    gamma
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, g)| !(g.abs() <= SEPARATION_THRESHOLD))
        .map(|(j, g)| (j - 1, g.abs()))
}

fn unstandardize_coef(gamma: &DVector<f64>, means: &[f64], sds: &[f64]) -> Vec<f64> {
    let p = means.len();
    let mut coef = vec![0.0; p + 1];
    coef[0] = gamma[0];
    for j in 0..p {
        coef[j + 1] = gamma[j + 1] / sds[j];
        coef[0] -= gamma[j + 1] * means[j] / sds[j];
    }
    coef
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_linear_data() {
        let x = DMatrix::from_column_slice(6, 1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y: Vec<f64> = (1..=6).map(|v| 2.0 * v as f64 + 1.0).collect();
        let fit = fit_ols(&x, &y).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-12);
        assert!((fit.coef[1] - 2.0).abs() < 1e-12);
        assert!(fit.p_value[1] < 1e-10);
    }

    #[test]
    fn ols_insufficient_and_collinear() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        assert!(matches!(fit_ols(&x, &[1.0, 2.0]), Err(Error::InsufficientData(_))));

        let x = DMatrix::from_row_slice(5, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0, 5.0, 10.0]);
        let err = fit_ols(&x, &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap_err();
        assert!(matches!(err, Error::NonIdentifiable { column: Some(1), .. }), "{err:?}");

        let x = DMatrix::from_column_slice(5, 1, &[3.0; 5]);
        let err = fit_ols(&x, &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap_err();
        assert!(matches!(err, Error::NonIdentifiable { column: Some(0), .. }), "{err:?}");
    }

    #[test]
    fn logistic_single_class() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let err = fit_logistic(&x, &[true; 4], 100, 1e-9).unwrap_err();
        assert!(matches!(err, Error::NonIdentifiable { .. }));
    }

    #[test]
    fn logistic_complete_separation() {
        let x = DMatrix::from_column_slice(8, 1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let y = [false, false, false, false, true, true, true, true];
        let err = fit_logistic(&x, &y, 100, 1e-9).unwrap_err();
        assert!(matches!(err, Error::Separation { column: 0, .. }), "{err:?}");
    }

    #[test]
    fn logistic_matches_known_fit() {
        // glm(y ~ x, binomial): intercept -3.5, slope 0.7 ... checked via the score equations
        let x = DMatrix::from_column_slice(10, 1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let y = [false, false, true, false, false, true, false, true, true, true];
        let fit = fit_logistic(&x, &y, 100, 1e-9).unwrap();
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for i in 0..10 {
            let eta = fit.coef[0] + fit.coef[1] * x[(i, 0)];
            let r = if y[i] { 1.0 } else { 0.0 } - 1.0 / (1.0 + (-eta).exp());
            s0 += r;
            s1 += r * x[(i, 0)];
        }
        assert!(s0.abs() < 1e-10 && s1.abs() < 1e-10, "{s0} {s1}");
        assert!(fit.se.iter().all(|&s| s > 0.0));
    }
}
