//! Per-replicate scoring, aggregation into proportions with Wilson
//! intervals, the parallel scenario runner and the baseline-shape probe.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::cox::{fit_cox_nr, SurvResponse};
use crate::error::{Error, Result};
use crate::selectors::{select_all, MethodId, SelectionResult};
use crate::sim::{
    apply_censoring, assemble_dataset, draw_baseline_params, gen_survival_times, sample_mvn, BaselineParams,
    SimDataset, TrueModel,
};
use crate::stats::wilson_interval;
use crate::stream::{Purpose, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitScore {
    pub method: MethodId,
    pub all_true_selected: bool,
    pub all_noise_rejected: bool,
    pub ranking_correct: bool,
    pub fit_failed: bool,
}

impl UnitScore {
    pub fn failed(method: MethodId) -> Self {
        Self { method, all_true_selected: false, all_noise_rejected: true, ranking_correct: false, fit_failed: true }
    }
}

/// All-or-nothing scoring of one selection on one dataset. The ranking is
/// correct when every observed true feature appears, their relative order
/// follows decreasing true |beta|, and no two of them share a strength.
pub fn score_dataset(ds: &SimDataset, result: &SelectionResult) -> UnitScore {
    if result.fit_failed {
        return UnitScore::failed(result.method);
    }
    let all_true_selected = ds.true_columns().all(|j| result.selected.contains(&j));
    let all_noise_rejected = ds.noise_columns().all(|j| !result.selected.contains(&j));

    let ranked_truth: Vec<usize> = result.ranking.iter().copied().filter(|j| ds.true_columns().contains(j)).collect();
    let mut ranking_correct = ranked_truth == ds.true_order();
    if ranking_correct {
        let s: Vec<f64> = ranked_truth.iter().map(|&j| result.strength[j]).collect();
        let distinct = s.iter().all(|v| !v.is_nan())
            && s.iter().enumerate().all(|(a, x)| s[a + 1..].iter().all(|y| x != y));
        ranking_correct = distinct;
    }
    UnitScore { method: result.method, all_true_selected, all_noise_rejected, ranking_correct, fit_failed: false }
}

/// Point estimate with a 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub successes: usize,
}

impl Proportion {
    pub fn new(successes: usize, trials: usize) -> Self {
        let (ci_low, ci_high) = wilson_interval(successes, trials);
        Self { estimate: successes as f64 / trials as f64, ci_low, ci_high, successes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: MethodId,
    /// `None` for the oracle.
    pub sensitivity: Option<Proportion>,
    pub specificity: Option<Proportion>,
    pub selection_accuracy: Option<f64>,
    pub ranking_accuracy: Proportion,
    pub n_replicates: usize,
    pub n_fit_failures: usize,
}

pub fn aggregate(scores: &[UnitScore]) -> Result<MethodMetrics> {
    let first = scores.first().ok_or_else(|| Error::EmptyInput("no scores to aggregate".into()))?;
    let method = first.method;
    if scores.iter().any(|s| s.method != method) {
        return Err(Error::InvalidParameter("scores mix several methods".into()));
    }
    let n = scores.len();
    let count = |f: fn(&UnitScore) -> bool| scores.iter().filter(|s| f(s)).count();
    let ranking_accuracy = Proportion::new(count(|s| s.ranking_correct), n);
    let (sensitivity, specificity, selection_accuracy) = if method.has_selection_metrics() {
        let sens = Proportion::new(count(|s| s.all_true_selected), n);
        let spec = Proportion::new(count(|s| s.all_noise_rejected), n);
        (Some(sens), Some(spec), Some((sens.estimate + spec.estimate) / 2.0))
    } else {
        (None, None, None)
    };
    Ok(MethodMetrics {
        method,
        sensitivity,
        specificity,
        selection_accuracy,
        ranking_accuracy,
        n_replicates: n,
        n_fit_failures: count(|s| s.fit_failed),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub n_events: usize,
    pub per_method: Vec<MethodMetrics>,
    pub wall_time_secs: f64,
}

impl ScenarioReport {
    pub fn metrics(&self, method: MethodId) -> Option<&MethodMetrics> {
        self.per_method.iter().find(|m| m.method == method)
    }
}

/// Dataset of replicate `r` of a scenario.
pub fn replicate_dataset(config: &ScenarioConfig, model: &TrueModel, r: usize) -> Result<SimDataset> {
    let key = StreamKey::new(config.master_seed, config.scenario_id, r as u64);
    assemble_dataset(config, model, &mut key.rng(Purpose::Dataset))
}

/// Selection results of every configured method on replicate `r`.
pub fn run_replicate(config: &ScenarioConfig, model: &TrueModel, r: usize) -> Result<(SimDataset, Vec<SelectionResult>)> {
    let ds = replicate_dataset(config, model, r)?;
    let key = StreamKey::new(config.master_seed, config.scenario_id, r as u64);
    let results = select_all(&ds, &config.solver, &config.methods, &mut key.rng(Purpose::Folds));
    Ok((ds, results))
}

/// Runs every replicate on the current rayon pool. Each replicate owns its
/// streams, so the report does not depend on the thread count.
pub fn run_scenario(config: &ScenarioConfig, model: &TrueModel) -> Result<ScenarioReport> {
    config.validate()?;
    model.validate()?;
    let start = Instant::now();
    let per_replicate: Vec<Vec<UnitScore>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| match run_replicate(config, model, r) {
            Ok((ds, results)) => results.iter().map(|res| score_dataset(&ds, res)).collect(),
            Err(_) => config.methods.iter().map(|&m| UnitScore::failed(m)).collect(),
        })
        .collect();
    let per_method = config
        .methods
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let scores: Vec<UnitScore> = per_replicate.iter().map(|row| row[k]).collect();
            aggregate(&scores)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioReport {
        config: config.clone(),
        n_events: config.n_events(),
        per_method,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeOutcome {
    Converged,
    Divergence,
    NonIdentifiable,
    Convergence,
    /// Any other fit error, e.g. too few events.
    OtherFailure,
}

impl ProbeOutcome {
    pub fn is_failure(self) -> bool {
        self != ProbeOutcome::Converged
    }

    pub fn classify(result: &Result<crate::glm::FitSummary>) -> Self {
        match result {
            Ok(fit) if fit.converged => ProbeOutcome::Converged,
            Ok(_) => ProbeOutcome::Convergence,
            Err(Error::Divergence { .. }) => ProbeOutcome::Divergence,
            Err(Error::NonIdentifiable { .. }) | Err(Error::Singular) => ProbeOutcome::NonIdentifiable,
            Err(Error::Convergence { .. }) => ProbeOutcome::Convergence,
            Err(_) => ProbeOutcome::OtherFailure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub shape_alpha: f64,
    pub replicates: usize,
    pub failures: usize,
    pub failure_rate: f64,
}

/// Unpenalized Cox fit on all true covariates of one replicate with the
/// baseline shape fixed at `shape_alpha` (scale still drawn from the grid).
/// The replicate stream does not depend on `shape_alpha`, so every shape sees
/// the same covariates and uniforms.
pub fn probe_replicate(shape_alpha: f64, config: &ScenarioConfig, model: &TrueModel, r: usize) -> Result<ProbeOutcome> {
    let key = StreamKey::new(config.master_seed, config.scenario_id, r as u64);
    let mut rng = key.rng(Purpose::Probe);
    let drawn = draw_baseline_params(&config.alpha_grid, &mut rng)?;
    let baseline = BaselineParams::new(shape_alpha, drawn.scale_lambda)?;
    let x = sample_mvn(config.n, model.dim(), model.rho, &mut rng)?;
    let times = gen_survival_times(&x, &model.beta, baseline, &mut rng)?;
    let (time_obs, status) = apply_censoring(&times, config.censor_rate, &mut rng)?;
    let fit = SurvResponse::new(time_obs, status)
        .and_then(|resp| fit_cox_nr(&x, &resp, config.solver.cox_tol, config.solver.cox_max_iter));
    Ok(ProbeOutcome::classify(&fit))
}

/// Cox fit-failure rate for each fixed baseline shape.
pub fn degenerate_alpha_probe(alpha_values: &[f64], config: &ScenarioConfig, model: &TrueModel) -> Result<Vec<ProbeRow>> {
    config.validate()?;
    model.validate()?;
    if alpha_values.is_empty() {
        return Err(Error::EmptyInput("no shape values to probe".into()));
    }
    if let Some(a) = alpha_values.iter().find(|&&a| !(a > 0.0 && a <= 4.0)) {
        return Err(Error::InvalidParameter(format!("probe shape must lie in (0, 4], got {a}")));
    }
    alpha_values
        .iter()
        .map(|&alpha| {
            let outcomes = (0..config.replicates)
                .into_par_iter()
                .map(|r| probe_replicate(alpha, config, model, r))
                .collect::<Result<Vec<_>>>()?;
            let failures = outcomes.iter().filter(|o| o.is_failure()).count();
            Ok(ProbeRow {
                shape_alpha: alpha,
                replicates: config.replicates,
                failures,
                failure_rate: failures as f64 / config.replicates as f64,
            })
        })
        .collect()
}
