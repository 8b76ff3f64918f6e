//! Elastic-net penalized Gaussian and Cox regression by cyclic coordinate
//! descent, log-spaced lambda paths, and K-fold cross-validation with the
//! minimum and one-standard-error penalty choices.
//!
//! Gaussian objective, over the intercept `b0` and coefficients `b`:
//!
//! ```text
//! (1/2n) sum_i (y_i - b0 - x_i b)^2 + lambda * sum_j pf_j (mix |g_j| + (1 - mix)/2 g_j^2)
//! ```
//!
//! Cox objective: `-(1/n) loglik(b) + ` the same penalty, with the Breslow
//! partial likelihood and no intercept.
//!
//! With `standardize = true` (the default) the penalty acts on the
//! coefficients of the unit-variance columns, `g_j = b_j * sd_j`, so fits are
//! invariant to rescaling a column. With `standardize = false` it acts on `b_j`
//! directly. `pf_j` is 1 for penalized and 0 for unpenalized columns.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cox::{RiskSetIndex, SurvResponse, DIVERGENCE_THRESHOLD};
use crate::error::{Error, Result};
use crate::linalg::column_moments;

/// Extra fold draws allowed when a Cox fold ends up without events.
pub const MAX_FOLD_RETRIES: usize = 10;

const MAX_OUTER_ITER: usize = 10_000;

/// Largest scaled outer move after which the Cox information is reused.
const INFO_REUSE_LIMIT: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Gaussian,
    Cox,
}

/// Response of a penalized fit.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Gaussian(&'a [f64]),
    Cox(&'a SurvResponse),
}

impl Target<'_> {
    pub fn family(&self) -> Family {
        match self {
            Target::Gaussian(_) => Family::Gaussian,
            Target::Cox(_) => Family::Cox,
        }
    }

    fn len(&self) -> usize {
        match self {
            Target::Gaussian(y) => y.len(),
            Target::Cox(r) => r.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    /// Weight of the L1 term, in (0, 1].
    pub mix: f64,
    pub lambda: f64,
    /// `true` = penalized. Empty means every column is penalized.
    pub penalize_mask: Vec<bool>,
}

impl PenaltySpec {
    pub fn new(mix: f64, lambda: f64) -> Self {
        Self { mix, lambda, penalize_mask: Vec::new() }
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Self {
        self.penalize_mask = mask;
        self
    }

    fn validate(&self, p: usize) -> Result<()> {
        check_mix(self.mix)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !self.penalize_mask.is_empty() && self.penalize_mask.len() != p {
            return Err(Error::InvalidParameter(format!(
                "penalize_mask has {} entries for {} columns",
                self.penalize_mask.len(),
                p
            )));
        }
        Ok(())
    }

    fn factors(&self, p: usize) -> Vec<f64> {
        penalty_factors(&self.penalize_mask, p)
    }
}

fn penalty_factors(mask: &[bool], p: usize) -> Vec<f64> {
    if mask.is_empty() {
        vec![1.0; p]
    } else {
        mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
    }
}

fn check_mix(mix: f64) -> Result<()> {
    if mix > 0.0 && mix <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("mix must lie in (0, 1], got {mix}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElnetOptions {
    /// Stop when the largest `sqrt(v_j) * |change_j|` of a pass falls below this.
    pub tol: f64,
    /// Coordinate-descent pass budget per fit.
    pub max_passes: usize,
    pub standardize: bool,
}

impl Default for ElnetOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_passes: 100_000, standardize: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianElnetFit {
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub passes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxElnetFit {
    pub beta: Vec<f64>,
    pub outer_iterations: usize,
    pub passes: usize,
}

/// `sign(z) * max(|z| - gamma, 0)`.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Centered (and optionally unit-variance) copy of the design, by column.
struct Standardized {
    cols: Vec<Vec<f64>>,
    means: Vec<f64>,
    scales: Vec<f64>,
    /// Zero-variance columns never enter the fit.
    constant: Vec<bool>,
    n: usize,
}

impl Standardized {
    fn new(design: &DMatrix<f64>, standardize: bool) -> Result<Self> {
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("design contains non-finite values".into()));
        }
        let (means, sds) = column_moments(design);
        let n = design.nrows();
        let mut cols = Vec::with_capacity(design.ncols());
        let mut scales = Vec::with_capacity(design.ncols());
        let mut constant = Vec::with_capacity(design.ncols());
        for (j, col) in design.column_iter().enumerate() {
            let is_const = !(sds[j] > 1e-12 * (means[j].abs() + 1.0)) || sds[j] == 0.0;
            let scale = if standardize && !is_const { sds[j] } else { 1.0 };
            cols.push(col.iter().map(|v| (v - means[j]) / scale).collect());
            scales.push(scale);
            constant.push(is_const);
        }
        Ok(Self { cols, means, scales, constant, n })
    }

    fn p(&self) -> usize {
        self.cols.len()
    }

    fn to_original(&self, gamma: &[f64]) -> Vec<f64> {
        gamma.iter().zip(&self.scales).map(|(g, s)| g / s).collect()
    }

    fn to_standardized(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter().zip(&self.scales).map(|(b, s)| b * s).collect()
    }

    fn original_scale_error(&self, err: Error) -> Error {
        match err {
            Error::Convergence { iterations, last } => Error::Convergence { iterations, last: self.to_original(&last) },
            other => other,
        }
    }

    fn eta(&self, gamma: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; self.n];
        for (col, &g) in self.cols.iter().zip(gamma) {
            if g != 0.0 {
                for (e, x) in eta.iter_mut().zip(col) {
                    *e += g * x;
                }
            }
        }
        eta
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn penalty(gamma: &[f64], pf: &[f64], lambda: f64, mix: f64) -> f64 {
    gamma
        .iter()
        .zip(pf)
        .map(|(g, f)| f * (mix * g.abs() + 0.5 * (1.0 - mix) * g * g))
        .sum::<f64>()
        * lambda
}

/// Weighted least-squares coordinate descent on
/// `(1/2n) sum_i w_i (r_i)^2 + penalty`, where `wr = w * r` is updated in place.
/// With `weights = None` all weights are one.
struct CdProblem<'a> {
    cols: &'a [Vec<f64>],
    weights: Option<&'a [f64]>,
    /// `sum_i w_i z_ij^2 / n`.
    v: Vec<f64>,
    pf: &'a [f64],
    skip: Vec<bool>,
    lambda: f64,
    mix: f64,
    n: f64,
}

impl CdProblem<'_> {
    fn update(&self, j: usize, gamma: &mut [f64], wr: &mut [f64]) -> f64 {
        let col = &self.cols[j];
        let vj = self.v[j];
        let g = dot(col, wr) / self.n + vj * gamma[j];
        let thr = self.lambda * self.mix * self.pf[j];
        let new = soft_threshold(g, thr) / (vj + self.lambda * (1.0 - self.mix) * self.pf[j]);
        let delta = new - gamma[j];
        if delta != 0.0 {
            gamma[j] = new;
            match self.weights {
                None => {
                    for (r, x) in wr.iter_mut().zip(col) {
                        *r -= delta * x;
                    }
                }
                Some(w) => {
                    for ((r, x), wi) in wr.iter_mut().zip(col).zip(w) {
                        *r -= delta * wi * x;
                    }
                }
            }
        }
        vj.sqrt() * delta.abs()
    }

    /// Cyclic passes until the largest scaled change drops below `tol`, sweeping
    /// the active set between full passes.
    fn solve(&self, gamma: &mut [f64], wr: &mut [f64], tol: f64, passes: &mut usize, budget: usize) -> Result<()> {
        let p = gamma.len();
        loop {
            if *passes >= budget {
                return Err(Error::Convergence { iterations: *passes, last: gamma.to_vec() });
            }
            *passes += 1;
            let mut max_change: f64 = 0.0;
            for j in 0..p {
                if !self.skip[j] {
                    max_change = max_change.max(self.update(j, gamma, wr));
                }
            }
            if max_change < tol {
                return Ok(());
            }
            let active: Vec<usize> = (0..p).filter(|&j| !self.skip[j] && gamma[j] != 0.0).collect();
            loop {
                if *passes >= budget {
                    return Err(Error::Convergence { iterations: *passes, last: gamma.to_vec() });
                }
                *passes += 1;
                let mut change: f64 = 0.0;
                for &j in &active {
                    change = change.max(self.update(j, gamma, wr));
                }
                if change < tol {
                    break;
                }
            }
        }
    }
}

struct GaussianState<'a> {
    std: &'a Standardized,
    yc: Vec<f64>,
    ybar: f64,
}

impl<'a> GaussianState<'a> {
    fn new(std: &'a Standardized, y: &[f64]) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("response contains non-finite values".into()));
        }
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        Ok(Self { std, yc: y.iter().map(|v| v - ybar).collect(), ybar })
    }

    /// Coordinate descent from `gamma` (standardized scale), in place.
    #[allow(clippy::too_many_arguments)]
    fn fit(
        &self,
        gamma: &mut [f64],
        pf: &[f64],
        excluded: &[bool],
        lambda: f64,
        mix: f64,
        opts: &ElnetOptions,
        passes: &mut usize,
    ) -> Result<()> {
        let n = self.std.n as f64;
        let eta = self.std.eta(gamma);
        let mut resid: Vec<f64> = self.yc.iter().zip(&eta).map(|(y, e)| y - e).collect();
        let v: Vec<f64> = self.std.cols.iter().map(|c| dot(c, c) / n).collect();
        let skip: Vec<bool> = (0..self.std.p()).map(|j| self.std.constant[j] || excluded[j]).collect();
        let problem = CdProblem { cols: &self.std.cols, weights: None, v, pf, skip, lambda, mix, n };
        problem.solve(gamma, &mut resid, opts.tol, passes, opts.max_passes)
    }

    fn result(&self, gamma: &[f64], passes: usize) -> GaussianElnetFit {
        let beta = self.std.to_original(gamma);
        let intercept = self.ybar - beta.iter().zip(&self.std.means).map(|(b, m)| b * m).sum::<f64>();
        GaussianElnetFit { intercept, beta, passes }
    }

    /// Score `z_j . r / n` of every column at `gamma`.
    fn scores(&self, gamma: &[f64]) -> Vec<f64> {
        let n = self.std.n as f64;
        let eta = self.std.eta(gamma);
        let resid: Vec<f64> = self.yc.iter().zip(&eta).map(|(y, e)| y - e).collect();
        self.std.cols.iter().map(|c| dot(c, &resid) / n).collect()
    }
}

struct CoxState<'a> {
    std: &'a Standardized,
    index: RiskSetIndex,
    /// Row-major copy of the standardized design.
    rows: Vec<f64>,
}

impl<'a> CoxState<'a> {
    fn new(std: &'a Standardized, resp: &SurvResponse) -> Self {
        let p = std.p();
        let mut rows = vec![0.0; std.n * p];
        for (j, col) in std.cols.iter().enumerate() {
            for (i, x) in col.iter().enumerate() {
                rows[i * p + j] = *x;
            }
        }
        Self { std, index: RiskSetIndex::new(resp), rows }
    }

    /// Outer quadratic approximation of `-loglik / n` from the score and
    /// information, minimized with the penalty by coordinate descent; outer
    /// steps are halved until the penalized objective does not increase.
    ///
    /// `info` carries the information matrix between calls along a path. It
    /// is recomputed after large moves or whenever a step built on a stale
    /// copy fails to descend; the fixed point does not depend on it.
    #[allow(clippy::too_many_arguments)]
    fn fit(
        &self,
        gamma: &mut [f64],
        pf: &[f64],
        excluded: &[bool],
        lambda: f64,
        mix: f64,
        opts: &ElnetOptions,
        passes: &mut usize,
        info: &mut Option<Vec<f64>>,
    ) -> Result<usize> {
        let p = self.std.p();
        let nf = self.std.n as f64;
        let base_skip: Vec<bool> = (0..p).map(|j| self.std.constant[j] || excluded[j]).collect();
        let mut eta = self.std.eta(gamma);
        let (mut ll, mut score, _) = self.index.loglik_score_info_rows(&self.rows, p, &eta, false);
        let mut outer = 0;
        let mut last_change = f64::INFINITY;
        let mut force_fresh = false;
        loop {
            if !ll.is_finite() {
                return Err(Error::Evaluation("penalized partial likelihood"));
            }
            if outer >= MAX_OUTER_ITER {
                return Err(Error::Convergence { iterations: outer, last: gamma.to_vec() });
            }
            outer += 1;
            let fresh = info.is_none() || force_fresh || last_change > INFO_REUSE_LIMIT;
            if fresh {
                *info = self.index.loglik_score_info_rows(&self.rows, p, &eta, true).2;
            }
            let h = info.as_deref().expect("information available");
            let obj = -ll / nf + penalty(gamma, pf, lambda, mix);
            let a: Vec<f64> = (0..p).map(|j| h[j * p + j] / nf).collect();
            let skip: Vec<bool> = (0..p).map(|j| base_skip[j] || !(a[j] > 0.0)).collect();

            // r = gradient of loglik/n less the quadratic's curvature times the move so far
            let start = gamma.to_vec();
            let mut r: Vec<f64> = score.iter().map(|g| g / nf).collect();
            loop {
                if *passes >= opts.max_passes {
                    return Err(Error::Convergence { iterations: *passes, last: gamma.to_vec() });
                }
                *passes += 1;
                let mut max_change: f64 = 0.0;
                for j in (0..p).filter(|&j| !skip[j]) {
                    let z = r[j] + a[j] * gamma[j];
                    let new = soft_threshold(z, lambda * mix * pf[j]) / (a[j] + lambda * (1.0 - mix) * pf[j]);
                    let delta = new - gamma[j];
                    if delta != 0.0 {
                        gamma[j] = new;
                        for (rk, hk) in r.iter_mut().zip(&h[j * p..(j + 1) * p]) {
                            *rk -= hk / nf * delta;
                        }
                        max_change = max_change.max(a[j].sqrt() * delta.abs());
                    }
                }
                if max_change < 0.1 * opts.tol {
                    break;
                }
            }

            let change = (0..p)
                .filter(|&j| !skip[j])
                .map(|j| a[j].sqrt() * (gamma[j] - start[j]).abs())
                .fold(0.0, f64::max);
            let direction: Vec<f64> = gamma.iter().zip(&start).map(|(g, s)| g - s).collect();
            let mut t = 1.0;
            let mut halvings = 0;
            let accepted = loop {
                let cand_eta = self.std.eta(gamma);
                let (cand_ll, cand_score, _) = self.index.loglik_score_info_rows(&self.rows, p, &cand_eta, false);
                let cand_obj = -cand_ll / nf + penalty(gamma, pf, lambda, mix);
                if cand_obj <= obj + 1e-13 * obj.abs() {
                    break Some((cand_eta, cand_ll, cand_score));
                }
                if halvings == 30 {
                    break None;
                }
                t *= 0.5;
                halvings += 1;
                for j in 0..p {
                    gamma[j] = start[j] + t * direction[j];
                }
            };
            let Some((cand_eta, cand_ll, cand_score)) = accepted else {
                gamma.copy_from_slice(&start);
                if !fresh {
                    force_fresh = true;
                    continue;
                }
                // no descent even with exact curvature: numerically stationary
                return Ok(outer);
            };
            force_fresh = false;
            last_change = t * change;
            eta = cand_eta;
            ll = cand_ll;
            score = cand_score;
            if lambda == 0.0 {
                let beta = self.std.to_original(gamma);
                if let Some((j, b)) = beta.iter().enumerate().find(|(_, b)| !(b.abs() <= DIVERGENCE_THRESHOLD)) {
                    return Err(Error::Divergence { column: j, value: b.abs() });
                }
            }
            if change < opts.tol {
                return Ok(outer);
            }
        }
    }

    fn scores(&self, gamma: &[f64]) -> Result<Vec<f64>> {
        let n = self.std.n;
        let eta = self.std.eta(gamma);
        let mut u = vec![0.0; n];
        let mut w = vec![0.0; n];
        self.index.eta_derivatives(&eta, &mut u, &mut w)?;
        Ok(self.std.cols.iter().map(|c| dot(c, &u) / n as f64).collect())
    }
}

fn check_rows(design: &DMatrix<f64>, n_target: usize) -> Result<()> {
    if design.nrows() != n_target {
        return Err(Error::InvalidParameter(format!(
            "design has {} rows but response has {}",
            design.nrows(),
            n_target
        )));
    }
    if design.ncols() == 0 {
        return Err(Error::InvalidParameter("design needs at least one column".into()));
    }
    Ok(())
}

/// Elastic-net least squares with an unpenalized intercept; coefficients on
/// the original column scale.
pub fn fit_gaussian_elnet(
    design: &DMatrix<f64>,
    response: &[f64],
    spec: &PenaltySpec,
    opts: &ElnetOptions,
) -> Result<GaussianElnetFit> {
    check_rows(design, response.len())?;
    if design.nrows() < 2 {
        return Err(Error::InsufficientData("penalized Gaussian fit needs n >= 2".into()));
    }
    spec.validate(design.ncols())?;
    let std = Standardized::new(design, opts.standardize)?;
    let state = GaussianState::new(&std, response)?;
    let pf = spec.factors(std.p());
    let excluded = vec![false; std.p()];
    let mut gamma = vec![0.0; std.p()];
    let mut passes = 0;
    state
        .fit(&mut gamma, &pf, &excluded, spec.lambda, spec.mix, opts, &mut passes)
        .map_err(|e| std.original_scale_error(e))?;
    Ok(state.result(&gamma, passes))
}

/// Elastic-net penalized Cox regression; coefficients on the original scale.
pub fn fit_cox_elnet(
    design: &DMatrix<f64>,
    resp: &SurvResponse,
    spec: &PenaltySpec,
    opts: &ElnetOptions,
) -> Result<CoxElnetFit> {
    fit_cox_elnet_from(design, resp, spec, opts, None)
}

/// [`fit_cox_elnet`] warm-started from `start` (original scale).
pub fn fit_cox_elnet_from(
    design: &DMatrix<f64>,
    resp: &SurvResponse,
    spec: &PenaltySpec,
    opts: &ElnetOptions,
    start: Option<&[f64]>,
) -> Result<CoxElnetFit> {
    check_rows(design, resp.len())?;
    spec.validate(design.ncols())?;
    let std = Standardized::new(design, opts.standardize)?;
    let state = CoxState::new(&std, resp);
    let pf = spec.factors(std.p());
    let excluded = vec![false; std.p()];
    let mut gamma = match start {
        Some(b) if b.len() == std.p() => std.to_standardized(b),
        Some(b) => {
            return Err(Error::InvalidParameter(format!("warm start has {} entries for {} columns", b.len(), std.p())))
        }
        None => vec![0.0; std.p()],
    };
    let mut passes = 0;
    let outer = state
        .fit(&mut gamma, &pf, &excluded, spec.lambda, spec.mix, opts, &mut passes, &mut None)
        .map_err(|e| std.original_scale_error(e))?;
    Ok(CoxElnetFit { beta: std.to_original(&gamma), outer_iterations: outer, passes })
}

/// Smallest penalty at which every penalized coefficient is zero.
fn lambda_max_std(std: &Standardized, target: Target<'_>, mix: f64, pf: &[f64], opts: &ElnetOptions) -> Result<f64> {
    let p = std.p();
    let unpenalized: Vec<bool> = pf.iter().map(|&f| f == 0.0).collect();
    let excluded: Vec<bool> = unpenalized.iter().map(|u| !u).collect();
    let mut gamma = vec![0.0; p];
    let mut passes = 0;
    let scores = match target {
        Target::Gaussian(y) => {
            let state = GaussianState::new(std, y)?;
            if unpenalized.iter().any(|&u| u) {
                state.fit(&mut gamma, pf, &excluded, 0.0, 1.0, opts, &mut passes)?;
            }
            state.scores(&gamma)
        }
        Target::Cox(resp) => {
            let state = CoxState::new(std, resp);
            if unpenalized.iter().any(|&u| u) {
                state.fit(&mut gamma, pf, &excluded, 0.0, 1.0, opts, &mut passes, &mut None)?;
            }
            state.scores(&gamma)?
        }
    };
    let lmax = (0..p)
        .filter(|&j| pf[j] > 0.0 && !std.constant[j])
        .map(|j| scores[j].abs() / (mix * pf[j]))
        .fold(0.0, f64::max);
    if !(lmax > 0.0 && lmax.is_finite()) {
        return Err(Error::DegeneratePath("no penalized column has a nonzero null-model score".into()));
    }
    // guard the exact-zero property at lambda_max against rounding
    Ok(lmax * (1.0 + 8.0 * f64::EPSILON))
}

fn log_grid(lambda_max: f64, n_lambda: usize, eps_ratio: f64) -> Vec<f64> {
    let step = eps_ratio.ln() / (n_lambda - 1) as f64;
    let mut grid: Vec<f64> = (0..n_lambda).map(|k| lambda_max * (step * k as f64).exp()).collect();
    grid[0] = lambda_max;
    grid[n_lambda - 1] = lambda_max * eps_ratio;
    grid
}

/// `n_lambda` log-spaced penalties from `lambda_max` down to
/// `lambda_max * eps_ratio`.
pub fn lambda_path(
    design: &DMatrix<f64>,
    target: Target<'_>,
    mix: f64,
    penalize_mask: &[bool],
    n_lambda: usize,
    eps_ratio: f64,
    opts: &ElnetOptions,
) -> Result<Vec<f64>> {
    check_rows(design, target.len())?;
    check_mix(mix)?;
    if n_lambda < 2 {
        return Err(Error::InvalidParameter(format!("n_lambda must be >= 2, got {n_lambda}")));
    }
    if !(eps_ratio > 0.0 && eps_ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("eps_ratio must lie in (0, 1), got {eps_ratio}")));
    }
    let std = Standardized::new(design, opts.standardize)?;
    let pf = penalty_factors(penalize_mask, std.p());
    let lmax = lambda_max_std(&std, target, mix, &pf, opts)?;
    Ok(log_grid(lmax, n_lambda, eps_ratio))
}

/// Coefficients along a lambda path (original scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFit {
    pub lambdas: Vec<f64>,
    /// Gaussian intercepts; zeros for Cox.
    pub intercepts: Vec<f64>,
    pub coefs: Vec<Vec<f64>>,
}

/// Warm-started fits along `lambdas` (expected in decreasing order).
pub fn fit_path(
    design: &DMatrix<f64>,
    target: Target<'_>,
    mix: f64,
    penalize_mask: &[bool],
    lambdas: &[f64],
    opts: &ElnetOptions,
) -> Result<PathFit> {
    check_rows(design, target.len())?;
    check_mix(mix)?;
    let std = Standardized::new(design, opts.standardize)?;
    let p = std.p();
    let pf = penalty_factors(penalize_mask, p);
    let excluded = vec![false; p];
    let mut gamma = vec![0.0; p];
    let mut intercepts = Vec::with_capacity(lambdas.len());
    let mut coefs = Vec::with_capacity(lambdas.len());
    match target {
        Target::Gaussian(y) => {
            let state = GaussianState::new(&std, y)?;
            for &lambda in lambdas {
                let mut passes = 0;
                state.fit(&mut gamma, &pf, &excluded, lambda, mix, opts, &mut passes)?;
                let fit = state.result(&gamma, passes);
                intercepts.push(fit.intercept);
                coefs.push(fit.beta);
            }
        }
        Target::Cox(resp) => {
            let state = CoxState::new(&std, resp);
            let mut info = None;
            for &lambda in lambdas {
                let mut passes = 0;
                state.fit(&mut gamma, &pf, &excluded, lambda, mix, opts, &mut passes, &mut info)?;
                intercepts.push(0.0);
                coefs.push(std.to_original(&gamma));
            }
        }
    }
    Ok(PathFit { lambdas: lambdas.to_vec(), intercepts, coefs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub folds: usize,
    pub n_lambda: usize,
    pub eps_ratio: f64,
    pub options: ElnetOptions,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self { folds: 10, n_lambda: 100, eps_ratio: 0.01, options: ElnetOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_grid: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_1se: f64,
    pub index_min: usize,
    pub index_1se: usize,
    /// Fold label (0-based) of every subject.
    pub fold_assignment: Vec<usize>,
    /// Full-data fits along `lambda_grid`.
    pub path: PathFit,
}

impl CvResult {
    pub fn coef_min(&self) -> &[f64] {
        &self.path.coefs[self.index_min]
    }

    pub fn coef_1se(&self) -> &[f64] {
        &self.path.coefs[self.index_1se]
    }
}

/// Near-equal random folds: labels `i mod k` shuffled, so the remainder goes
/// one subject per fold.
pub fn assign_folds<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(rng);
    labels
}

fn folds_valid_for_cox(labels: &[usize], k: usize, status: &[bool]) -> bool {
    let total = status.iter().filter(|&&s| s).count();
    let mut per_fold = vec![0usize; k];
    for (l, &s) in labels.iter().zip(status) {
        if s {
            per_fold[*l] += 1;
        }
    }
    per_fold.iter().all(|&d| d >= 1 && d < total)
}

fn rows_of(design: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), design.ncols(), |i, j| design[(rows[i], j)])
}

fn linear_predictor(design: &DMatrix<f64>, intercept: f64, beta: &[f64]) -> Vec<f64> {
    let mut eta = vec![intercept; design.nrows()];
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (e, x) in eta.iter_mut().zip(design.column(j).iter()) {
                *e += b * x;
            }
        }
    }
    eta
}

/// K-fold cross-validation over the full-data lambda path.
///
/// Gaussian loss is held-out mean squared error. Cox loss for fold `f` is the
/// partial-likelihood deviance `2 * (loglik_train(b_-f) - loglik_all(b_-f))`
/// divided by the fold's event count. Fold losses are averaged with weights
/// (fold size or fold events) and the standard error is
/// `sqrt(weighted mean of squared deviations / (k - 1))`.
pub fn cv_select_lambda<R: Rng + ?Sized>(
    design: &DMatrix<f64>,
    target: Target<'_>,
    mix: f64,
    penalize_mask: &[bool],
    settings: &CvSettings,
    rng: &mut R,
) -> Result<CvResult> {
    let n = target.len();
    check_rows(design, n)?;
    check_mix(mix)?;
    let k = settings.folds;
    if k < 2 {
        return Err(Error::InvalidParameter(format!("fold count must be >= 2, got {k}")));
    }
    if n < 2 * k {
        return Err(Error::InsufficientData(format!("{k}-fold cross-validation needs n >= {}, got {n}", 2 * k)));
    }

    let mut labels = assign_folds(n, k, rng);
    if let Target::Cox(resp) = target {
        let mut attempts = 1;
        while !folds_valid_for_cox(&labels, k, resp.status()) {
            if attempts > MAX_FOLD_RETRIES {
                return Err(Error::FoldFailure { attempts });
            }
            labels = assign_folds(n, k, rng);
            attempts += 1;
        }
    }

    let lambdas = lambda_path(design, target, mix, penalize_mask, settings.n_lambda, settings.eps_ratio, &settings.options)?;
    let full = fit_path(design, target, mix, penalize_mask, &lambdas, &settings.options)?;
    let nl = lambdas.len();

    let all_index = match target {
        Target::Cox(resp) => Some(RiskSetIndex::new(resp)),
        Target::Gaussian(_) => None,
    };
    let mut fold_loss = vec![vec![0.0; nl]; k];
    let mut fold_weight = vec![0.0; k];
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
        let x_train = rows_of(design, &train);
        match target {
            Target::Gaussian(y) => {
                let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                let path = fit_path(&x_train, Target::Gaussian(&y_train), mix, penalize_mask, &lambdas, &settings.options)?;
                let x_test = rows_of(design, &test);
                for l in 0..nl {
                    let pred = linear_predictor(&x_test, path.intercepts[l], &path.coefs[l]);
                    let mse = test.iter().zip(&pred).map(|(&i, yh)| (y[i] - yh).powi(2)).sum::<f64>() / test.len() as f64;
                    fold_loss[f][l] = mse;
                }
                fold_weight[f] = test.len() as f64;
            }
            Target::Cox(resp) => {
                let resp_train = resp.subset(&train)?;
                let path = fit_path(&x_train, Target::Cox(&resp_train), mix, penalize_mask, &lambdas, &settings.options)?;
                let train_index = RiskSetIndex::new(&resp_train);
                let all_index = all_index.as_ref().expect("cox index");
                let events = test.iter().filter(|&&i| resp.status()[i]).count() as f64;
                for l in 0..nl {
                    let eta_all = linear_predictor(design, 0.0, &path.coefs[l]);
                    let eta_train: Vec<f64> = train.iter().map(|&i| eta_all[i]).collect();
                    let dev = 2.0 * (train_index.loglik(&eta_train) - all_index.loglik(&eta_all));
                    if !dev.is_finite() {
                        return Err(Error::Evaluation("cross-validated deviance"));
                    }
                    fold_loss[f][l] = dev / events;
                }
                fold_weight[f] = events;
            }
        }
    }

    let wsum: f64 = fold_weight.iter().sum();
    let mut cv_mean = vec![0.0; nl];
    let mut cv_se = vec![0.0; nl];
    for l in 0..nl {
        let m = (0..k).map(|f| fold_weight[f] * fold_loss[f][l]).sum::<f64>() / wsum;
        let var = (0..k).map(|f| fold_weight[f] * (fold_loss[f][l] - m).powi(2)).sum::<f64>() / wsum;
        cv_mean[l] = m;
        cv_se[l] = (var / (k - 1) as f64).sqrt();
    }
    let min_val = cv_mean.iter().cloned().fold(f64::INFINITY, f64::min);
    // largest lambda attaining the minimum, then the largest within one SE of it
    let index_min = cv_mean.iter().position(|&m| m <= min_val).expect("nonempty grid");
    let bound = min_val + cv_se[index_min];
    let index_1se = cv_mean.iter().position(|&m| m <= bound).expect("minimum is within bound");

    Ok(CvResult {
        lambda_min: lambdas[index_min],
        lambda_1se: lambdas[index_1se],
        lambda_grid: lambdas,
        cv_mean,
        cv_se,
        index_min,
        index_1se,
        fold_assignment: labels,
        path: full,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{Purpose, StreamKey};
    use rand_distr::StandardNormal;

    fn random_problem(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = StreamKey::new(seed, 9, 9).rng(Purpose::Dataset);
        let x = DMatrix::from_fn(n, p, |_, j| rng.sample::<f64, _>(StandardNormal) * (1.0 + j as f64));
        let y = (0..n)
            .map(|i| 1.0 + 0.5 * x[(i, 0)] - 0.25 * x[(i, 1)] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        (x, y)
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(5.0, 2.0), 3.0);
        assert_eq!(soft_threshold(1.0, 2.0), 0.0);
        assert_eq!(soft_threshold(-5.0, 2.0), -3.0);
        assert_eq!(soft_threshold(-2.0, 2.0), 0.0);
    }

    #[test]
    fn path_is_log_spaced() {
        let (x, y) = random_problem(60, 4, 1);
        let grid = lambda_path(&x, Target::Gaussian(&y), 1.0, &[], 100, 0.01, &ElnetOptions::default()).unwrap();
        assert_eq!(grid.len(), 100);
        let ratio = grid[1] / grid[0];
        for w in grid.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
        assert!((grid[99] / (grid[0] / 100.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let (x, y) = random_problem(60, 4, 2);
        for mix in [1.0, 0.5] {
            let grid = lambda_path(&x, Target::Gaussian(&y), mix, &[], 10, 0.01, &ElnetOptions::default()).unwrap();
            let fit = fit_gaussian_elnet(&x, &y, &PenaltySpec::new(mix, grid[0]), &ElnetOptions::default()).unwrap();
            assert!(fit.beta.iter().all(|&b| b == 0.0), "{:?}", fit.beta);
            let fit = fit_gaussian_elnet(&x, &y, &PenaltySpec::new(mix, grid[1]), &ElnetOptions::default()).unwrap();
            assert!(fit.beta.iter().any(|&b| b != 0.0));
        }
    }

    #[test]
    fn all_zero_design_is_degenerate() {
        let x = DMatrix::zeros(10, 2);
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let err = lambda_path(&x, Target::Gaussian(&y), 1.0, &[], 10, 0.01, &ElnetOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DegeneratePath(_)));
    }

    #[test]
    fn unpenalized_column_survives_lambda_max() {
        let (x, y) = random_problem(80, 3, 3);
        let mask = vec![false, true, true];
        let grid = lambda_path(&x, Target::Gaussian(&y), 1.0, &mask, 10, 0.01, &ElnetOptions::default()).unwrap();
        let spec = PenaltySpec::new(1.0, grid[0]).with_mask(mask);
        let fit = fit_gaussian_elnet(&x, &y, &spec, &ElnetOptions::default()).unwrap();
        assert!(fit.beta[0] != 0.0);
        assert_eq!(&fit.beta[1..], &[0.0, 0.0]);
    }

    #[test]
    fn pass_budget_exhaustion_reports_last_iterate() {
        let (x, y) = random_problem(50, 3, 4);
        let opts = ElnetOptions { tol: 1e-30, max_passes: 3, standardize: true };
        let err = fit_gaussian_elnet(&x, &y, &PenaltySpec::new(1.0, 0.0), &opts).unwrap_err();
        match err {
            Error::Convergence { last, .. } => assert_eq!(last.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fold_labels_are_balanced() {
        let mut rng = StreamKey::new(1, 1, 1).rng(Purpose::Folds);
        let labels = assign_folds(23, 10, &mut rng);
        let mut counts = [0usize; 10];
        for l in labels {
            counts[l] += 1;
        }
        assert_eq!(counts.iter().filter(|&&c| c == 3).count(), 3);
        assert_eq!(counts.iter().filter(|&&c| c == 2).count(), 7);
    }

    #[test]
    fn cv_requires_enough_rows() {
        let (x, y) = random_problem(15, 2, 5);
        let mut rng = StreamKey::new(1, 1, 1).rng(Purpose::Folds);
        let err = cv_select_lambda(&x, Target::Gaussian(&y), 1.0, &[], &CvSettings::default(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn cox_fold_failure_when_events_are_too_rare() {
        let (x, _) = random_problem(40, 2, 6);
        let mut status = vec![false; 40];
        status[0] = true;
        status[1] = true;
        let time: Vec<f64> = (1..=40).map(f64::from).collect();
        let resp = SurvResponse::new(time, status).unwrap();
        let mut rng = StreamKey::new(1, 1, 1).rng(Purpose::Folds);
        let err = cv_select_lambda(&x, Target::Cox(&resp), 1.0, &[], &CvSettings::default(), &mut rng).unwrap_err();
        assert_eq!(err, Error::FoldFailure { attempts: MAX_FOLD_RETRIES + 1 });
    }
}
