//! Data generation: equicorrelated Gaussian features, Cox survival times
//! under a Weibull-type baseline, exact-count uniform censoring, and assembly
//! of partially observed datasets.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Exp1, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};

/// Observed true features per dataset.
pub const N_OBSERVED_TRUE: usize = 5;
/// Noise features appended to each dataset.
pub const N_NOISE: usize = 5;
/// Columns of every observed design.
pub const N_FEATURES: usize = N_OBSERVED_TRUE + N_NOISE;

/// Redraw budget for exponential variates whose survival time underflows.
const MAX_UNDERFLOW_REDRAWS: usize = 64;

/// Parameters of the baseline cumulative hazard `H0(t) = scale * t^shape`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub shape_alpha: f64,
    pub scale_lambda: f64,
}

impl BaselineParams {
    pub fn new(shape_alpha: f64, scale_lambda: f64) -> Result<Self> {
        if !(shape_alpha > 0.0 && shape_alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("shape_alpha must be > 0, got {shape_alpha}")));
        }
        if !(scale_lambda > 0.0 && scale_lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale_lambda must be > 0, got {scale_lambda}")));
        }
        Ok(Self { shape_alpha, scale_lambda })
    }
}

/// Generating Cox model: log-hazard coefficients and common feature correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub beta: Vec<f64>,
    pub rho: f64,
}

impl TrueModel {
    /// `beta = (1, 2, ..., 10)`.
    pub fn standard(rho: f64) -> Self {
        Self { beta: (1..=10).map(f64::from).collect(), rho }
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() < N_OBSERVED_TRUE {
            return Err(Error::InvalidParameter(format!(
                "true model needs at least {N_OBSERVED_TRUE} coefficients, got {}",
                self.dim()
            )));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("beta must be finite".into()));
        }
        check_rho(self.rho)
    }
}

/// One simulated replicate as seen by the selectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    /// `n x 10`; columns 0..5 are the observed true features, 5..10 noise.
    pub x_obs: DMatrix<f64>,
    pub time_obs: Vec<f64>,
    /// `true` = event observed.
    pub status: Vec<bool>,
    /// Zero-based indices into the true `beta` of observed columns 0..5.
    pub true_ids: Vec<usize>,
    pub true_beta_obs: Vec<f64>,
    pub baseline: BaselineParams,
}

impl SimDataset {
    pub fn n(&self) -> usize {
        self.time_obs.len()
    }

    pub fn n_events(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }

    /// Observed-column indices holding true features.
    pub fn true_columns(&self) -> std::ops::Range<usize> {
        0..N_OBSERVED_TRUE
    }

    pub fn noise_columns(&self) -> std::ops::Range<usize> {
        N_OBSERVED_TRUE..N_FEATURES
    }

    /// Observed true columns ordered by decreasing |true coefficient|.
    pub fn true_order(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.true_columns().collect();
        cols.sort_by(|&a, &b| {
            self.true_beta_obs[b].abs().total_cmp(&self.true_beta_obs[a].abs()).then(a.cmp(&b))
        });
        cols
    }

    pub fn log_time(&self) -> Vec<f64> {
        self.time_obs.iter().map(|t| t.ln()).collect()
    }
}

/// `{2.0, 2.2, ..., 40.0}`: the integers 10..=200 divided by 5.
pub fn default_baseline_grid() -> Vec<f64> {
    (10..=200).map(|k| k as f64 / 5.0).collect()
}

fn check_rho(rho: f64) -> Result<()> {
    if rho >= 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("rho must lie in [0, 1), got {rho}")))
    }
}

/// Draws `n` rows from a `dim`-variate standard Gaussian with common pairwise
/// correlation `rho`, via the Cholesky factor of the covariance.
pub fn sample_mvn<R: Rng + ?Sized>(n: usize, dim: usize, rho: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if n == 0 || dim == 0 {
        return Err(Error::InvalidParameter("sample_mvn needs n >= 1 and dim >= 1".into()));
    }
    check_rho(rho)?;
    let cov = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { rho });
    let factor = Cholesky::new(cov)
        .ok_or_else(|| Error::InvalidParameter(format!("covariance with rho = {rho} is not positive definite")))?
        .unpack();
    let mut out = DMatrix::zeros(n, dim);
    let mut z = DVector::<f64>::zeros(dim);
    for i in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for r in 0..dim {
            let mut acc = 0.0;
            for c in 0..=r {
                acc += factor[(r, c)] * z[c];
            }
            out[(i, r)] = acc;
        }
    }
    Ok(out)
}

/// Draws shape and scale independently and uniformly from `grid`.
pub fn draw_baseline_params<R: Rng + ?Sized>(grid: &[f64], rng: &mut R) -> Result<BaselineParams> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("baseline grid is empty".into()));
    }
    let shape = grid[rng.random_range(0..grid.len())];
    let scale = grid[rng.random_range(0..grid.len())];
    BaselineParams::new(shape, scale)
}

/// Inverse-transform sampling under `H(t | x) = scale * t^shape * exp(x.beta)`:
/// `T = (E / (scale * exp(x.beta)))^(1/shape)` with `E ~ Exp(1)`.
///
/// Computed on the log scale. A time that underflows to zero has its
/// exponential variate redrawn; if that keeps failing the time is pinned to the
/// smallest positive normal double. Overflow is pinned to `f64::MAX`.
pub fn gen_survival_times<R: Rng + ?Sized>(
    x_true: &DMatrix<f64>,
    beta: &[f64],
    params: BaselineParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if x_true.ncols() != beta.len() {
        return Err(Error::InvalidParameter(format!(
            "design has {} columns but beta has {} entries",
            x_true.ncols(),
            beta.len()
        )));
    }
    let params = BaselineParams::new(params.shape_alpha, params.scale_lambda)?;
    let ln_scale = params.scale_lambda.ln();
    let inv_shape = params.shape_alpha.recip();
    let mut times = Vec::with_capacity(x_true.nrows());
    for i in 0..x_true.nrows() {
        let eta: f64 = (0..beta.len()).map(|j| x_true[(i, j)] * beta[j]).sum();
        if !eta.is_finite() {
            return Err(Error::NonFiniteLinearPredictor { row: i });
        }
        let mut t = 0.0;
        for _ in 0..=MAX_UNDERFLOW_REDRAWS {
            let e: f64 = rng.sample(Exp1);
            t = ((e.ln() - ln_scale - eta) * inv_shape).exp();
            if t > 0.0 {
                break;
            }
        }
        if t == 0.0 {
            t = f64::MIN_POSITIVE;
        } else if t.is_infinite() {
            t = f64::MAX;
        }
        times.push(t);
    }
    Ok(times)
}

/// Censors exactly `round(n * censor_rate)` subjects chosen uniformly without
/// replacement; each censored time is uniform on `(0, T)`.
pub fn apply_censoring<R: Rng + ?Sized>(
    times: &[f64],
    censor_rate: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<bool>)> {
    if !(censor_rate >= 0.0 && censor_rate < 1.0) {
        return Err(Error::InvalidParameter(format!("censor_rate must lie in [0, 1), got {censor_rate}")));
    }
    if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidParameter("event times must be positive and finite".into()));
    }
    let n = times.len();
    let k = ((n as f64) * censor_rate).round() as usize;
    let mut time_obs = times.to_vec();
    let mut status = vec![true; n];
    for i in index::sample(rng, n, k.min(n)).into_iter() {
        let mut c = 0.0;
        for _ in 0..8 {
            let u: f64 = rng.sample(Open01);
            c = u * times[i];
            if c > 0.0 {
                break;
            }
        }
        // a subnormal event time can leave no representable point below it
        time_obs[i] = if c > 0.0 { c } else { times[i] };
        status[i] = false;
    }
    Ok((time_obs, status))
}

/// Full replicate: true features, times from all of them, censoring, then a
/// uniformly random choice of which true features are observed, plus noise.
pub fn assemble_dataset<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    model: &TrueModel,
    rng: &mut R,
) -> Result<SimDataset> {
    config.validate()?;
    model.validate()?;
    let baseline = draw_baseline_params(&config.alpha_grid, rng)?;
    generate_with_baseline(config.n, config.censor_rate, model, baseline, rng)
}

/// [`assemble_dataset`] with the baseline fixed by the caller.
pub fn generate_with_baseline<R: Rng + ?Sized>(
    n: usize,
    censor_rate: f64,
    model: &TrueModel,
    baseline: BaselineParams,
    rng: &mut R,
) -> Result<SimDataset> {
    model.validate()?;
    let dim = model.dim();
    let x_true = sample_mvn(n, dim, model.rho, rng)?;
    let times = gen_survival_times(&x_true, &model.beta, baseline, rng)?;
    let (time_obs, status) = apply_censoring(&times, censor_rate, rng)?;
    let true_ids = index::sample(rng, dim, N_OBSERVED_TRUE).into_vec();
    let noise = sample_mvn(n, N_NOISE, model.rho, rng)?;

    let mut x_obs = DMatrix::zeros(n, N_FEATURES);
    for (col, &id) in true_ids.iter().enumerate() {
        x_obs.set_column(col, &x_true.column(id));
    }
    for k in 0..N_NOISE {
        x_obs.set_column(N_OBSERVED_TRUE + k, &noise.column(k));
    }
    let true_beta_obs = true_ids.iter().map(|&id| model.beta[id]).collect();
    Ok(SimDataset { x_obs, time_obs, status, true_ids, true_beta_obs, baseline })
}
