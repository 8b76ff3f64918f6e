use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use survsel::selectors::MethodId;
use survsel::sim::TrueModel;
use survsel::{ScenarioConfig, SolverSettings};

use crate::{CliError, Result};

pub const DEFAULT_REPLICATES: usize = 1000;
pub const FULL_SCALE_REPLICATES: usize = 10_000;

/// A study: the cartesian grid `n x censor_rate x rho`, each cell run with the
/// same replicate count, seed and solver settings.
///
/// ```json
/// { "n": [500, 1000], "censor_rate": [0.1, 0.5], "rho": [0.0, 0.8],
///   "replicates": 1000, "master_seed": 20240101,
///   "solver": { "mix": 1.0, "event_threshold": 900 } }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub n: Vec<usize>,
    pub censor_rate: Vec<f64>,
    pub rho: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub solver: SolverSettings,
    /// True coefficients; defaults to 1..=10.
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    /// Subset of selectors to run; defaults to all.
    #[serde(default)]
    pub methods: Option<Vec<MethodId>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

/// One expanded grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: TrueModel,
}

impl RunManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: RunManifest =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, len) in [("n", self.n.len()), ("censor_rate", self.censor_rate.len()), ("rho", self.rho.len())] {
            if len == 0 {
                return Err(CliError::Config(format!("field `{name}` must list at least one value")));
            }
        }
        if let Some(beta) = &self.beta {
            if beta.len() != 10 {
                return Err(CliError::Config(format!("field `beta` must have 10 entries, got {}", beta.len())));
            }
        }
        if matches!(&self.methods, Some(m) if m.is_empty()) {
            return Err(CliError::Config("field `methods` must not be empty".into()));
        }
        self.solver.validate().map_err(|e| CliError::Config(format!("field `solver`: {e}")))?;
        for s in self.scenarios() {
            s.config.validate().map_err(|e| {
                CliError::Config(format!(
                    "grid cell (n = {}, censor_rate = {}, rho = {}): {e}",
                    s.config.n, s.config.censor_rate, s.config.rho
                ))
            })?;
            s.model.validate().map_err(|e| CliError::Config(format!("field `beta`: {e}")))?;
        }
        Ok(())
    }

    /// Grid cells in `n`-major order; the position is the scenario id.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &c in &self.censor_rate {
                for &rho in &self.rho {
                    let id = out.len() as u64;
                    let mut config = ScenarioConfig::new(n, c, rho, self.replicates, self.master_seed).with_scenario_id(id);
                    config.solver = self.solver.clone();
                    if let Some(methods) = &self.methods {
                        config.methods = methods.clone();
                    }
                    let model = match &self.beta {
                        Some(beta) => TrueModel { beta: beta.clone(), rho },
                        None => TrueModel::standard(rho),
                    };
                    out.push(Scenario { config, model });
                }
            }
        }
        out
    }

    pub fn scenario(&self, id: usize) -> Result<Scenario> {
        let all = self.scenarios();
        let count = all.len();
        all.into_iter()
            .nth(id)
            .ok_or_else(|| CliError::Config(format!("scenario id {id} out of range (manifest has {count} scenarios)")))
    }
}
