use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use survsel::bench::{MethodMetrics, ProbeRow, ScenarioReport};
use survsel::sim::{BaselineParams, SimDataset};

use crate::{CliError, Result};

pub const RESULT_COLUMNS: [&str; 18] = [
    "scenario_id",
    "n",
    "censor_rate",
    "rho",
    "n_events",
    "method",
    "sensitivity",
    "sens_ci_low",
    "sens_ci_high",
    "specificity",
    "spec_ci_low",
    "spec_ci_high",
    "selection_accuracy",
    "ranking_accuracy",
    "rank_ci_low",
    "rank_ci_high",
    "n_replicates",
    "n_fit_failures",
];

/// Six significant digits, plain decimal notation.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return "NA".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Shortest round-trip text; exponent form outside `[1e-6, 1e15)`.
fn plain_or_exp(x: f64) -> String {
    if (1e-6..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_else(|| "NA".into())
}

fn metric_row(report: &ScenarioReport, m: &MethodMetrics) -> Vec<String> {
    let c = &report.config;
    let sens = m.sensitivity;
    let spec = m.specificity;
    let rank = m.ranking_accuracy;
    vec![
        c.scenario_id.to_string(),
        c.n.to_string(),
        sig6(c.censor_rate),
        sig6(c.rho),
        report.n_events.to_string(),
        m.method.name().to_string(),
        opt(sens.map(|p| p.estimate)),
        opt(sens.map(|p| p.ci_low)),
        opt(sens.map(|p| p.ci_high)),
        opt(spec.map(|p| p.estimate)),
        opt(spec.map(|p| p.ci_low)),
        opt(spec.map(|p| p.ci_high)),
        opt(m.selection_accuracy),
        sig6(rank.estimate),
        sig6(rank.ci_low),
        sig6(rank.ci_high),
        m.n_replicates.to_string(),
        m.n_fit_failures.to_string(),
    ]
}

pub fn results_csv(reports: &[ScenarioReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Runtime(format!("CSV encoding failed: {e}"));
    w.write_record(RESULT_COLUMNS).map_err(err)?;
    for report in reports {
        for m in &report.per_method {
            w.write_record(metric_row(report, m)).map_err(err)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Runtime(format!("CSV encoding failed: {e}")))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn scenario_json_path(dir: &Path, id: u64) -> PathBuf {
    dir.join(format!("scenario_{id:03}.json"))
}

/// Dataset CSV: `time_obs, status, f1..f10` with full round-trip precision.
pub fn dataset_csv(ds: &SimDataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Runtime(format!("CSV encoding failed: {e}"));
    let mut header = vec!["time_obs".to_string(), "status".to_string()];
    header.extend((1..=ds.x_obs.ncols()).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(err)?;
    for i in 0..ds.n() {
        let mut row = vec![plain_or_exp(ds.time_obs[i]), u8::from(ds.status[i]).to_string()];
        row.extend((0..ds.x_obs.ncols()).map(|j| format!("{}", ds.x_obs[(i, j)])));
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(format!("CSV encoding failed: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct DatasetSidecar {
    pub scenario_id: u64,
    pub replicate: usize,
    pub n: usize,
    pub n_events: usize,
    /// One-based indices into the true coefficient vector of columns f1..f5.
    pub true_ids: Vec<usize>,
    pub true_beta_obs: Vec<f64>,
    pub baseline: BaselineParams,
}

impl DatasetSidecar {
    pub fn new(ds: &SimDataset, scenario_id: u64, replicate: usize) -> Self {
        Self {
            scenario_id,
            replicate,
            n: ds.n(),
            n_events: ds.n_events(),
            true_ids: ds.true_ids.iter().map(|i| i + 1).collect(),
            true_beta_obs: ds.true_beta_obs.clone(),
            baseline: ds.baseline,
        }
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn probe_csv(rows: &[ProbeRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Runtime(format!("CSV encoding failed: {e}"));
    w.write_record(["shape_alpha", "replicates", "failures", "failure_rate"]).map_err(err)?;
    for r in rows {
        w.write_record([sig6(r.shape_alpha), r.replicates.to_string(), r.failures.to_string(), sig6(r.failure_rate)])
            .map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(format!("CSV encoding failed: {e}")))
}
