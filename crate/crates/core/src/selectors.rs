//! The ten selection procedures. Feature indices are 0-based columns of
//! `SimDataset::x_obs`.
//!
//! Rankings order features by decreasing effect strength. For Wald-test
//! based selectors the strength is the absolute test statistic, which orders
//! features exactly as increasing p-value does but keeps its resolution when
//! p-values underflow to zero.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SolverSettings;
use crate::cox::{fit_cox_nr, SurvResponse};
use crate::elnet::{cv_select_lambda, fit_gaussian_elnet, CvResult, CvSettings, ElnetOptions, PenaltySpec, Target};
use crate::error::{Error, Result};
use crate::glm::{fit_logistic, fit_ols};
use crate::sim::{SimDataset, N_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    UnivariateCox,
    OracleMultivariateCox,
    CoxElnetLambdaMin,
    #[serde(rename = "cox_elnet_lambda_1se")]
    CoxElnetLambda1se,
    UnivariateLogistic,
    GaussianTwoCov,
    MultivariateGaussian,
    GaussianElnet,
    PipelineIndependent,
    PipelineCorrelated,
}

impl MethodId {
    pub const ALL: [MethodId; 10] = [
        MethodId::UnivariateCox,
        MethodId::OracleMultivariateCox,
        MethodId::CoxElnetLambdaMin,
        MethodId::CoxElnetLambda1se,
        MethodId::UnivariateLogistic,
        MethodId::GaussianTwoCov,
        MethodId::MultivariateGaussian,
        MethodId::GaussianElnet,
        MethodId::PipelineIndependent,
        MethodId::PipelineCorrelated,
    ];

    /// Single-model selectors whose selected sets are compared against
    /// each other (everything except the oracle and the two pipelines).
    pub const SELECTION_SCORED: [MethodId; 7] = [
        MethodId::UnivariateCox,
        MethodId::CoxElnetLambdaMin,
        MethodId::CoxElnetLambda1se,
        MethodId::UnivariateLogistic,
        MethodId::GaussianTwoCov,
        MethodId::MultivariateGaussian,
        MethodId::GaussianElnet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::UnivariateCox => "univariate_cox",
            MethodId::OracleMultivariateCox => "oracle_multivariate_cox",
            MethodId::CoxElnetLambdaMin => "cox_elnet_lambda_min",
            MethodId::CoxElnetLambda1se => "cox_elnet_lambda_1se",
            MethodId::UnivariateLogistic => "univariate_logistic",
            MethodId::GaussianTwoCov => "gaussian_two_cov",
            MethodId::MultivariateGaussian => "multivariate_gaussian",
            MethodId::GaussianElnet => "gaussian_elnet",
            MethodId::PipelineIndependent => "pipeline_independent",
            MethodId::PipelineCorrelated => "pipeline_correlated",
        }
    }

    /// The oracle sees which features are true, so it is scored on ranking only.
    pub fn has_selection_metrics(self) -> bool {
        self != MethodId::OracleMultivariateCox
    }

    /// Selectors whose `scores` are p-values thresholded at `p_threshold`.
    pub fn is_p_value_selector(self) -> bool {
        matches!(self, MethodId::UnivariateCox | MethodId::UnivariateLogistic | MethodId::GaussianTwoCov)
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: MethodId,
    /// Selected feature columns, ascending.
    pub selected: Vec<usize>,
    /// Strongest first; may omit features.
    pub ranking: Vec<usize>,
    /// Per feature: p-value or |coefficient|; NaN where not estimated.
    pub scores: Vec<f64>,
    /// Per feature ranking key (larger is stronger); NaN where not estimated.
    pub strength: Vec<f64>,
    pub fit_failed: bool,
    /// Univariate screens: number of per-feature fits that failed.
    pub feature_failures: usize,
}

impl SelectionResult {
    pub fn failed(method: MethodId) -> Self {
        Self {
            method,
            selected: Vec::new(),
            ranking: Vec::new(),
            scores: vec![f64::NAN; N_FEATURES],
            strength: vec![f64::NAN; N_FEATURES],
            fit_failed: true,
            feature_failures: 0,
        }
    }
}

/// Order `candidates` by decreasing strength; NaN sorts last, ties keep
/// index order.
pub fn rank_by_strength(candidates: &[usize], strength: &[f64]) -> Vec<usize> {
    let mut out = candidates.to_vec();
    out.sort_by(|&a, &b| {
        let (sa, sb) = (strength[a], strength[b]);
        match (sa.is_nan(), sb.is_nan()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            _ => sb.partial_cmp(&sa).unwrap_or(Ordering::Equal),
        }
    });
    out
}

fn surv_response(ds: &SimDataset) -> Result<SurvResponse> {
    SurvResponse::new(ds.time_obs.clone(), ds.status.clone())
}

fn status_column(ds: &SimDataset) -> Vec<f64> {
    ds.status.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect()
}

fn design_from(ds: &SimDataset, features: &[usize], extra: &[&[f64]]) -> DMatrix<f64> {
    let n = ds.n();
    let mut m = DMatrix::zeros(n, features.len() + extra.len());
    for (k, &j) in features.iter().enumerate() {
        m.set_column(k, &ds.x_obs.column(j));
    }
    for (k, col) in extra.iter().enumerate() {
        for i in 0..n {
            m[(i, features.len() + k)] = col[i];
        }
    }
    m
}

/// Shared body of the three univariate screens. `fit` returns
/// `(p_value, |statistic|)` of the feature under screening.
fn univariate_screen(
    method: MethodId,
    p_threshold: f64,
    mut fit: impl FnMut(usize) -> Result<(f64, f64)>,
) -> SelectionResult {
    let mut scores = vec![f64::NAN; N_FEATURES];
    let mut strength = vec![f64::NAN; N_FEATURES];
    let mut failures = 0;
    for j in 0..N_FEATURES {
        match fit(j) {
            Ok((p, s)) => {
                scores[j] = p;
                strength[j] = s;
            }
            Err(_) => failures += 1,
        }
    }
    if failures == N_FEATURES {
        return SelectionResult { feature_failures: failures, ..SelectionResult::failed(method) };
    }
    let selected: Vec<usize> = (0..N_FEATURES).filter(|&j| scores[j] < p_threshold).collect();
    let all: Vec<usize> = (0..N_FEATURES).collect();
    SelectionResult {
        method,
        selected,
        ranking: rank_by_strength(&all, &strength),
        scores,
        strength,
        fit_failed: false,
        feature_failures: failures,
    }
}

/// One single-covariate Cox model per feature.
pub fn select_univariate_cox(ds: &SimDataset, settings: &SolverSettings) -> SelectionResult {
    let resp = match surv_response(ds) {
        Ok(r) => r,
        Err(_) => return SelectionResult::failed(MethodId::UnivariateCox),
    };
    univariate_screen(MethodId::UnivariateCox, settings.p_threshold, |j| {
        let fit = fit_cox_nr(&design_from(ds, &[j], &[]), &resp, settings.cox_tol, settings.cox_max_iter)?;
        Ok((fit.p_value[0], fit.statistic[0].abs()))
    })
}

/// Multivariate Cox model on the observed true features only.
pub fn rank_oracle_multivariate_cox(ds: &SimDataset, settings: &SolverSettings) -> SelectionResult {
    let method = MethodId::OracleMultivariateCox;
    let truth: Vec<usize> = ds.true_columns().collect();
    let fit = surv_response(ds)
        .and_then(|resp| fit_cox_nr(&design_from(ds, &truth, &[]), &resp, settings.cox_tol, settings.cox_max_iter));
    let fit = match fit {
        Ok(f) => f,
        Err(_) => return SelectionResult::failed(method),
    };
    let mut scores = vec![f64::NAN; N_FEATURES];
    let mut strength = vec![f64::NAN; N_FEATURES];
    for (k, &j) in truth.iter().enumerate() {
        scores[j] = fit.p_value[k];
        strength[j] = fit.statistic[k].abs();
    }
    SelectionResult {
        method,
        ranking: rank_by_strength(&truth, &strength),
        selected: truth,
        scores,
        strength,
        fit_failed: false,
        feature_failures: 0,
    }
}

pub fn cv_settings(settings: &SolverSettings) -> CvSettings {
    CvSettings {
        folds: settings.cv_folds,
        n_lambda: settings.n_lambda,
        eps_ratio: settings.eps_ratio,
        options: elnet_options(settings),
    }
}

fn elnet_options(settings: &SolverSettings) -> ElnetOptions {
    ElnetOptions { tol: settings.cd_tol, max_passes: settings.cd_max_passes, standardize: true }
}

/// Cross-validated elastic-net Cox path on all features (plus the event
/// indicator when configured).
pub fn cox_elnet_cv<R: Rng + ?Sized>(ds: &SimDataset, settings: &SolverSettings, rng: &mut R) -> Result<CvResult> {
    let resp = surv_response(ds)?;
    let all: Vec<usize> = (0..N_FEATURES).collect();
    let status = status_column(ds);
    let design = if settings.include_event_indicator_in_cox {
        design_from(ds, &all, &[&status])
    } else {
        design_from(ds, &all, &[])
    };
    cv_select_lambda(&design, Target::Cox(&resp), settings.mix, &[], &cv_settings(settings), rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaChoice {
    Min,
    OneSe,
}

/// Selected set and ranking from nonzero coefficients of the first
/// `N_FEATURES` entries of `coef`.
fn from_coefficients(method: MethodId, coef: &[f64]) -> SelectionResult {
    let strength: Vec<f64> = coef[..N_FEATURES].iter().map(|c| c.abs()).collect();
    let selected: Vec<usize> = (0..N_FEATURES).filter(|&j| coef[j] != 0.0).collect();
    SelectionResult {
        method,
        ranking: rank_by_strength(&selected, &strength),
        selected,
        scores: strength.clone(),
        strength,
        fit_failed: false,
        feature_failures: 0,
    }
}

pub fn select_cox_elnet_from_cv(cv: &Result<CvResult>, which: LambdaChoice) -> SelectionResult {
    let method = match which {
        LambdaChoice::Min => MethodId::CoxElnetLambdaMin,
        LambdaChoice::OneSe => MethodId::CoxElnetLambda1se,
    };
    match cv {
        Ok(cv) => from_coefficients(
            method,
            match which {
                LambdaChoice::Min => cv.coef_min(),
                LambdaChoice::OneSe => cv.coef_1se(),
            },
        ),
        Err(_) => SelectionResult::failed(method),
    }
}

/// 10-fold cross-validated elastic-net Cox; selection at `which`.
pub fn select_cox_elnet<R: Rng + ?Sized>(
    ds: &SimDataset,
    which: LambdaChoice,
    settings: &SolverSettings,
    rng: &mut R,
) -> SelectionResult {
    select_cox_elnet_from_cv(&cox_elnet_cv(ds, settings, rng), which)
}

/// Logistic regression of the event indicator on each feature and the
/// observed time.
pub fn select_univariate_logistic(ds: &SimDataset, settings: &SolverSettings) -> SelectionResult {
    let time = ds.time_obs.clone();
    univariate_screen(MethodId::UnivariateLogistic, settings.p_threshold, |j| {
        let design = design_from(ds, &[j], &[&time]);
        let fit = fit_logistic(&design, &ds.status, settings.logistic_max_iter, settings.logistic_tol)?;
        // coefficient 0 is the intercept
        Ok((fit.p_value[1], fit.statistic[1].abs()))
    })
}

/// Least squares of log time on each feature and the event indicator.
pub fn select_gaussian_two_cov(ds: &SimDataset, settings: &SolverSettings) -> SelectionResult {
    let log_time = ds.log_time();
    let status = status_column(ds);
    univariate_screen(MethodId::GaussianTwoCov, settings.p_threshold, |j| {
        let fit = fit_ols(&design_from(ds, &[j], &[&status]), &log_time)?;
        Ok((fit.p_value[1], fit.statistic[1].abs()))
    })
}

/// Least squares of log time on the event indicator and the features kept by
/// the two-covariate screen; the selected set passes through.
pub fn rank_multivariate_gaussian(ds: &SimDataset, prior: &SelectionResult) -> SelectionResult {
    let method = MethodId::MultivariateGaussian;
    if prior.fit_failed {
        return SelectionResult::failed(method);
    }
    let mut scores = vec![f64::NAN; N_FEATURES];
    let mut strength = vec![f64::NAN; N_FEATURES];
    let mut ranking = Vec::new();
    if !prior.selected.is_empty() {
        let status = status_column(ds);
        let design = design_from(ds, &prior.selected, &[&status]);
        let fit = match fit_ols(&design, &ds.log_time()) {
            Ok(f) => f,
            Err(_) => return SelectionResult::failed(method),
        };
        for (k, &j) in prior.selected.iter().enumerate() {
            scores[j] = fit.p_value[k + 1];
            strength[j] = fit.statistic[k + 1].abs();
        }
        ranking = rank_by_strength(&prior.selected, &strength);
    }
    SelectionResult {
        method,
        selected: prior.selected.clone(),
        ranking,
        scores,
        strength,
        fit_failed: false,
        feature_failures: 0,
    }
}

/// Elastic-net least squares of log time on all features and the event
/// indicator at the fixed penalty `settings.gaussian_lambda`.
pub fn select_gaussian_elnet(ds: &SimDataset, settings: &SolverSettings) -> SelectionResult {
    let all: Vec<usize> = (0..N_FEATURES).collect();
    let status = status_column(ds);
    let design = design_from(ds, &all, &[&status]);
    let spec = PenaltySpec::new(settings.mix, settings.gaussian_lambda);
    match fit_gaussian_elnet(&design, &ds.log_time(), &spec, &elnet_options(settings)) {
        Ok(fit) => from_coefficients(MethodId::GaussianElnet, &fit.beta),
        Err(_) => SelectionResult::failed(MethodId::GaussianElnet),
    }
}

/// Step-2 features ordered by Step-1 strength; features with zero Step-1
/// strength go last in index order.
fn compose(method: MethodId, ranker: &SelectionResult, chooser: &SelectionResult) -> SelectionResult {
    if ranker.fit_failed || chooser.fit_failed {
        return SelectionResult::failed(method);
    }
    let strength = ranker.strength.clone();
    SelectionResult {
        method,
        selected: chooser.selected.clone(),
        ranking: rank_by_strength(&chooser.selected, &strength),
        scores: strength.clone(),
        strength,
        fit_failed: false,
        feature_failures: 0,
    }
}

/// Cox-elnet (lambda_1se) selection ranked by Gaussian-elnet magnitudes.
pub fn pipeline_independent(gaussian_elnet: &SelectionResult, cox_1se: &SelectionResult) -> SelectionResult {
    compose(MethodId::PipelineIndependent, gaussian_elnet, cox_1se)
}

/// Gaussian selection (two-covariate screen below `event_threshold` events,
/// elastic net otherwise) ranked by Cox-elnet (lambda_1se) magnitudes.
pub fn pipeline_correlated(
    ds: &SimDataset,
    event_threshold: usize,
    cox_1se: &SelectionResult,
    two_cov: &SelectionResult,
    gaussian_elnet: &SelectionResult,
) -> SelectionResult {
    let chooser = if ds.n_events() < event_threshold { two_cov } else { gaussian_elnet };
    compose(MethodId::PipelineCorrelated, cox_1se, chooser)
}

/// Runs `methods` on one dataset, sharing intermediate fits. Cross-validation
/// folds are drawn from `rng` once and shared by every Cox-elnet consumer.
pub fn select_all<R: Rng + ?Sized>(
    ds: &SimDataset,
    settings: &SolverSettings,
    methods: &[MethodId],
    rng: &mut R,
) -> Vec<SelectionResult> {
    let needs = |m: MethodId| methods.contains(&m);
    let needs_cv = needs(MethodId::CoxElnetLambdaMin)
        || needs(MethodId::CoxElnetLambda1se)
        || needs(MethodId::PipelineIndependent)
        || needs(MethodId::PipelineCorrelated);
    let cv = needs_cv.then(|| cox_elnet_cv(ds, settings, rng));
    let cox_1se = cv.as_ref().map(|cv| select_cox_elnet_from_cv(cv, LambdaChoice::OneSe));

    let needs_two_cov =
        needs(MethodId::GaussianTwoCov) || needs(MethodId::MultivariateGaussian) || needs(MethodId::PipelineCorrelated);
    let two_cov = needs_two_cov.then(|| select_gaussian_two_cov(ds, settings));
    let needs_gelnet =
        needs(MethodId::GaussianElnet) || needs(MethodId::PipelineIndependent) || needs(MethodId::PipelineCorrelated);
    let gelnet = needs_gelnet.then(|| select_gaussian_elnet(ds, settings));

    methods
        .iter()
        .map(|&m| match m {
            MethodId::UnivariateCox => select_univariate_cox(ds, settings),
            MethodId::OracleMultivariateCox => rank_oracle_multivariate_cox(ds, settings),
            MethodId::CoxElnetLambdaMin => {
                select_cox_elnet_from_cv(cv.as_ref().expect("cv computed"), LambdaChoice::Min)
            }
            MethodId::CoxElnetLambda1se => cox_1se.clone().expect("cv computed"),
            MethodId::UnivariateLogistic => select_univariate_logistic(ds, settings),
            MethodId::GaussianTwoCov => two_cov.clone().expect("screen computed"),
            MethodId::MultivariateGaussian => rank_multivariate_gaussian(ds, two_cov.as_ref().expect("screen computed")),
            MethodId::GaussianElnet => gelnet.clone().expect("elnet computed"),
            MethodId::PipelineIndependent => {
                pipeline_independent(gelnet.as_ref().expect("elnet computed"), cox_1se.as_ref().expect("cv computed"))
            }
            MethodId::PipelineCorrelated => pipeline_correlated(
                ds,
                settings.event_threshold,
                cox_1se.as_ref().expect("cv computed"),
                two_cov.as_ref().expect("screen computed"),
                gelnet.as_ref().expect("elnet computed"),
            ),
        })
        .collect()
}
