//! Cox proportional hazards: Breslow partial likelihood and Newton-Raphson.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::FitSummary;
use crate::linalg::spd_solve_and_inverse;
use crate::stats::normal_two_sided_p;

/// Coefficient magnitude beyond which the likelihood is declared monotone.
pub const DIVERGENCE_THRESHOLD: f64 = 50.0;

/// Right-censored survival response.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvResponse {
    time: Vec<f64>,
    status: Vec<bool>,
}

impl SurvResponse {
    pub fn new(time: Vec<f64>, status: Vec<bool>) -> Result<Self> {
        if time.len() != status.len() {
            return Err(Error::InvalidParameter(format!(
                "time has {} entries but status has {}",
                time.len(),
                status.len()
            )));
        }
        if time.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidParameter("survival times must be positive and finite".into()));
        }
        if !status.iter().any(|&s| s) {
            return Err(Error::InsufficientData("no events: the partial likelihood is void".into()));
        }
        Ok(Self { time, status })
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }

    /// Response restricted to `rows` (in the given order).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        Self::new(rows.iter().map(|&i| self.time[i]).collect(), rows.iter().map(|&i| self.status[i]).collect())
    }
}

/// Subjects sorted by decreasing time, grouped into tied-time blocks.
#[derive(Debug, Clone)]
pub(crate) struct RiskSetIndex {
    order: Vec<usize>,
    /// Exclusive end of each tie block within `order`.
    block_end: Vec<usize>,
    /// Event count of each block.
    block_events: Vec<f64>,
    status: Vec<bool>,
}

impl RiskSetIndex {
    pub(crate) fn new(resp: &SurvResponse) -> Self {
        let time = resp.time();
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]).then(a.cmp(&b)));
        let mut block_end = Vec::new();
        let mut block_events = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let t = time[order[start]];
            let mut end = start;
            let mut d = 0.0;
            while end < order.len() && time[order[end]] == t {
                if resp.status()[order[end]] {
                    d += 1.0;
                }
                end += 1;
            }
            block_end.push(end);
            block_events.push(d);
            start = end;
        }
        Self { order, block_end, block_events, status: resp.status().to_vec() }
    }

    /// Breslow log partial likelihood of the linear predictor `eta`, swept in
    /// decreasing time with a running-maximum shift.
    pub(crate) fn loglik(&self, eta: &[f64]) -> f64 {
        let mut run_max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut ll = 0.0;
        let mut start = 0;
        for (&end, &d) in self.block_end.iter().zip(&self.block_events) {
            for &i in &self.order[start..end] {
                let e = eta[i];
                if e > run_max {
                    sum *= (run_max - e).exp();
                    run_max = e;
                }
                sum += (e - run_max).exp();
            }
            if d > 0.0 {
                let log_risk = run_max + sum.ln();
                for &i in &self.order[start..end] {
                    if self.status[i] {
                        ll += eta[i] - log_risk;
                    }
                }
            }
            start = end;
        }
        ll
    }

    /// First derivative `u` and diagonal second derivative `w` (negated) of the
    /// log partial likelihood with respect to each subject's linear predictor.
    pub(crate) fn eta_derivatives(&self, eta: &[f64], u: &mut [f64], w: &mut [f64]) -> Result<()> {
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let nb = self.block_end.len();
        // risk-set sums per block, from the latest time backwards
        let mut risk = vec![0.0; nb];
        let mut acc = 0.0;
        let mut start = 0;
        for (b, &end) in self.block_end.iter().enumerate() {
            for &i in &self.order[start..end] {
                acc += (eta[i] - shift).exp();
            }
            risk[b] = acc;
            start = end;
        }
        // cumulative hazard increments from the earliest time forwards
        let mut a = 0.0;
        let mut b2 = 0.0;
        for b in (0..nb).rev() {
            let d = self.block_events[b];
            if d > 0.0 {
                a += d / risk[b];
                b2 += d / (risk[b] * risk[b]);
            }
            let start = if b == 0 { 0 } else { self.block_end[b - 1] };
            for &i in &self.order[start..self.block_end[b]] {
                let e = (eta[i] - shift).exp();
                let delta = if self.status[i] { 1.0 } else { 0.0 };
                u[i] = delta - e * a;
                w[i] = e * a - e * e * b2;
            }
        }
        if u.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("partial-likelihood derivatives"));
        }
        Ok(())
    }

    /// Log likelihood, score and observed information for a `p`-column design.
    fn loglik_score_info(&self, x: &DMatrix<f64>, eta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let p = x.ncols();
        let rows: Vec<f64> = (0..x.nrows()).flat_map(|i| (0..p).map(move |j| x[(i, j)])).collect();
        let (ll, score, info) = self.loglik_score_info_rows(&rows, p, eta, true);
        (ll, DVector::from_vec(score), DMatrix::from_row_slice(p, p, &info.expect("information requested")))
    }

    /// [`Self::loglik_score_info`] on a row-major `n x p` buffer; the
    /// information, when requested, comes back row-major and symmetric.
    pub(crate) fn loglik_score_info_rows(
        &self,
        rows: &[f64],
        p: usize,
        eta: &[f64],
        with_info: bool,
    ) -> (f64, Vec<f64>, Option<Vec<f64>>) {
        // lower triangles are packed row by row: entry (j, k <= j) at j(j+1)/2 + k
        let tri = p * (p + 1) / 2;
        let mut run_max = f64::NEG_INFINITY;
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; if with_info { tri } else { 0 }];
        let mut ll = 0.0;
        let mut score = vec![0.0; p];
        let mut info_tri = vec![0.0; tri];
        let mut start = 0;
        for (&end, &d) in self.block_end.iter().zip(&self.block_events) {
            for &i in &self.order[start..end] {
                let e = eta[i];
                if e > run_max {
                    let f = (run_max - e).exp();
                    s0 *= f;
                    s1.iter_mut().for_each(|v| *v *= f);
                    s2.iter_mut().for_each(|v| *v *= f);
                    run_max = e;
                }
                let r = (e - run_max).exp();
                s0 += r;
                let xi = &rows[i * p..(i + 1) * p];
                if with_info {
                    let mut off = 0;
                    for j in 0..p {
                        let rx = r * xi[j];
                        s1[j] += rx;
                        for (acc, xk) in s2[off..off + j + 1].iter_mut().zip(&xi[..j + 1]) {
                            *acc += rx * xk;
                        }
                        off += j + 1;
                    }
                } else {
                    for (acc, x) in s1.iter_mut().zip(xi) {
                        *acc += r * x;
                    }
                }
            }
            if d > 0.0 {
                let log_risk = run_max + s0.ln();
                let inv = 1.0 / s0;
                for &i in &self.order[start..end] {
                    if self.status[i] {
                        ll += eta[i] - log_risk;
                        let xi = &rows[i * p..(i + 1) * p];
                        for j in 0..p {
                            score[j] += xi[j] - s1[j] * inv;
                        }
                    }
                }
                if !with_info {
                    start = end;
                    continue;
                }
                let di = d * inv;
                let dii = di * inv;
                let mut off = 0;
                for j in 0..p {
                    let cj = dii * s1[j];
                    for ((acc, s2k), s1k) in info_tri[off..off + j + 1].iter_mut().zip(&s2[off..off + j + 1]).zip(&s1) {
                        *acc += di * s2k - cj * s1k;
                    }
                    off += j + 1;
                }
            }
            start = end;
        }
        if !with_info {
            return (ll, score, None);
        }
        let mut info = vec![0.0; p * p];
        let mut off = 0;
        for j in 0..p {
            for k in 0..=j {
                info[j * p + k] = info_tri[off + k];
                info[k * p + j] = info_tri[off + k];
            }
            off += j + 1;
        }
        (ll, score, Some(info))
    }
}

fn linear_predictor(design: &DMatrix<f64>, beta: &[f64]) -> Result<Vec<f64>> {
    let mut eta = vec![0.0; design.nrows()];
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (e, x) in eta.iter_mut().zip(design.column(j).iter()) {
                *e += b * x;
            }
        }
    }
    if let Some(row) = eta.iter().position(|e| !e.is_finite()) {
        return Err(Error::NonFiniteLinearPredictor { row });
    }
    Ok(eta)
}

fn check_dims(beta_len: usize, design: &DMatrix<f64>, resp: &SurvResponse) -> Result<()> {
    if design.nrows() != resp.len() {
        return Err(Error::InvalidParameter(format!(
            "design has {} rows but response has {}",
            design.nrows(),
            resp.len()
        )));
    }
    if design.ncols() != beta_len {
        return Err(Error::InvalidParameter(format!(
            "design has {} columns but beta has {}",
            design.ncols(),
            beta_len
        )));
    }
    Ok(())
}

/// Breslow log partial likelihood.
pub fn cox_partial_loglik(beta: &[f64], design: &DMatrix<f64>, resp: &SurvResponse) -> Result<f64> {
    check_dims(beta.len(), design, resp)?;
    let eta = linear_predictor(design, beta)?;
    let ll = RiskSetIndex::new(resp).loglik(&eta);
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(Error::Evaluation("partial likelihood"))
    }
}

/// Newton-Raphson maximization of the Breslow partial likelihood from zero,
/// with step-halving, Wald standard errors and normal p-values.
///
/// Requires at least `p + 1` events. A non-met tolerance yields
/// `converged = false` rather than an error.
pub fn fit_cox_nr(design: &DMatrix<f64>, resp: &SurvResponse, tol: f64, max_iter: usize) -> Result<FitSummary> {
    let p = design.ncols();
    if p == 0 {
        return Err(Error::InvalidParameter("design needs at least one column".into()));
    }
    check_dims(p, design, resp)?;
    if design.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("design contains non-finite values".into()));
    }
    let events = resp.n_events();
    if events < p + 1 {
        return Err(Error::InsufficientData(format!("Cox model with {p} covariates needs at least {} events, got {events}", p + 1)));
    }
    let index = RiskSetIndex::new(resp);
    let mut beta: Vec<f64> = vec![0.0; p];
    let eta = vec![0.0; design.nrows()];
    let (mut ll, mut score, mut info) = index.loglik_score_info(design, &eta);

    for j in 0..p {
        let col_scale = design.column(j).iter().map(|v| v * v).sum::<f64>() / design.nrows() as f64;
        if !(info[(j, j)] > 1e-12 * col_scale.max(f64::MIN_POSITIVE) * events as f64) {
            return Err(Error::NonIdentifiable {
                column: Some(j),
                reason: format!("partial likelihood is flat in column {j}"),
            });
        }
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        let g_inf = score.amax();
        let Some((step, _)) = spd_solve_and_inverse(&info, &score) else {
            return Err(singular_information(&beta));
        };
        // in a monotone likelihood the gradient vanishes while Newton steps stay O(1)
        let beta_inf = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        if g_inf < tol && step.amax() <= 1e-6 * (1.0 + beta_inf) {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let eta = linear_predictor(design, &cand)?;
            let cand_ll = index.loglik(&eta);
            // near the optimum the change sinks below the rounding of ll itself
            if cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) {
                accepted = Some((cand, eta));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, eta)) = accepted else {
            // no ascent possible: numerically stationary
            converged = g_inf < tol.sqrt();
            break;
        };
        if let Some((j, v)) = cand.iter().enumerate().map(|(j, b)| (j, b.abs())).find(|(_, v)| !(*v <= DIVERGENCE_THRESHOLD)) {
            return Err(Error::Divergence { column: j, value: v });
        }
        beta = cand;
        (ll, score, info) = index.loglik_score_info(design, &eta);
        if !ll.is_finite() {
            return Err(Error::Evaluation("partial likelihood"));
        }
    }

    let (_, cov) = spd_solve_and_inverse(&info, &DVector::zeros(p)).ok_or_else(|| singular_information(&beta))?;
    let se = (0..p).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
    Ok(FitSummary::from_estimates(beta, se, normal_two_sided_p, converged, design.nrows(), iterations))
}

/// At the origin a singular information means collinear columns; away from
/// it, information lost along the path means an estimate is running off to
/// infinity.
fn singular_information(beta: &[f64]) -> Error {
    match beta.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())) {
        Some((j, b)) if *b != 0.0 => Error::Divergence { column: j, value: b.abs() },
        _ => Error::NonIdentifiable { column: None, reason: "collinear covariates".into() },
    }
}
