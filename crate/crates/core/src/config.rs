use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selectors::MethodId;
use crate::sim::default_baseline_grid;

/// Solver knobs shared by every selector in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Elastic-net mixing weight on the L1 term, in (0, 1].
    pub mix: f64,
    /// Feed the event indicator to the penalized Cox models as a covariate.
    pub include_event_indicator_in_cox: bool,
    /// Event count at or above which the correlated pipeline screens with the
    /// penalized Gaussian model instead of the two-covariate Gaussian models.
    pub event_threshold: usize,
    /// Fixed penalty of the penalized Gaussian model.
    pub gaussian_lambda: f64,
    /// Significance threshold of the p-value screens.
    pub p_threshold: f64,
    pub cv_folds: usize,
    pub n_lambda: usize,
    pub eps_ratio: f64,
    /// Coordinate-descent tolerance on the maximum weighted coefficient change.
    pub cd_tol: f64,
    pub cd_max_passes: usize,
    pub cox_tol: f64,
    pub cox_max_iter: usize,
    pub logistic_tol: f64,
    pub logistic_max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            mix: 1.0,
            include_event_indicator_in_cox: false,
            event_threshold: 900,
            gaussian_lambda: 0.05,
            p_threshold: 0.05,
            cv_folds: 10,
            n_lambda: 100,
            eps_ratio: 0.01,
            cd_tol: 1e-7,
            cd_max_passes: 100_000,
            cox_tol: 1e-9,
            cox_max_iter: 100,
            logistic_tol: 1e-9,
            logistic_max_iter: 100,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.mix > 0.0 && self.mix <= 1.0) {
            return bad(format!("mix must lie in (0, 1], got {}", self.mix));
        }
        if !(self.gaussian_lambda >= 0.0 && self.gaussian_lambda.is_finite()) {
            return bad(format!("gaussian_lambda must be >= 0, got {}", self.gaussian_lambda));
        }
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return bad(format!("p_threshold must lie in (0, 1), got {}", self.p_threshold));
        }
        if self.cv_folds < 2 {
            return bad(format!("cv_folds must be >= 2, got {}", self.cv_folds));
        }
        if self.n_lambda < 2 {
            return bad(format!("n_lambda must be >= 2, got {}", self.n_lambda));
        }
        if !(self.eps_ratio > 0.0 && self.eps_ratio < 1.0) {
            return bad(format!("eps_ratio must lie in (0, 1), got {}", self.eps_ratio));
        }
        if !(self.cd_tol > 0.0 && self.cox_tol > 0.0 && self.logistic_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if self.cd_max_passes == 0 || self.cox_max_iter == 0 || self.logistic_max_iter == 0 {
            return bad("iteration budgets must be positive".into());
        }
        Ok(())
    }
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    pub censor_rate: f64,
    pub rho: f64,
    pub replicates: usize,
    pub master_seed: u64,
    /// Mixed into every replicate stream; distinct scenarios of one study
    /// should carry distinct ids.
    pub scenario_id: u64,
    /// Grid from which both baseline parameters are drawn.
    pub alpha_grid: Vec<f64>,
    pub solver: SolverSettings,
    /// Selectors to run. Defaults to all ten.
    pub methods: Vec<MethodId>,
}

impl ScenarioConfig {
    pub fn new(n: usize, censor_rate: f64, rho: f64, replicates: usize, master_seed: u64) -> Self {
        Self {
            n,
            censor_rate,
            rho,
            replicates,
            master_seed,
            scenario_id: 0,
            alpha_grid: default_baseline_grid(),
            solver: SolverSettings::default(),
            methods: MethodId::ALL.to_vec(),
        }
    }

    pub fn with_scenario_id(mut self, id: u64) -> Self {
        self.scenario_id = id;
        self
    }

    pub fn with_methods(mut self, methods: &[MethodId]) -> Self {
        self.methods = methods.to_vec();
        self
    }

    /// Number of censored subjects, `round(n * censor_rate)`.
    pub fn n_censored(&self) -> usize {
        (self.n as f64 * self.censor_rate).round() as usize
    }

    pub fn n_events(&self) -> usize {
        self.n - self.n_censored().min(self.n)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.censor_rate >= 0.0 && self.censor_rate < 1.0) {
            return bad(format!("censor_rate must lie in [0, 1), got {}", self.censor_rate));
        }
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if self.n_events() < 1 {
            return bad(format!(
                "expected event count n*(1-censor_rate) must be >= 1 (n = {}, censor_rate = {})",
                self.n, self.censor_rate
            ));
        }
        if self.alpha_grid.is_empty() {
            return bad("alpha_grid must be nonempty".into());
        }
        if self.alpha_grid.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return bad("alpha_grid values must be positive and finite".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method must be selected".into());
        }
        self.solver.validate()
    }
}
