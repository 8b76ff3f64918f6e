use std::path::{Path, PathBuf};
use std::time::Instant;

use survsel::bench::{degenerate_alpha_probe, replicate_dataset, run_scenario, ProbeRow, ScenarioReport};
use survsel::sim::TrueModel;
use survsel::ScenarioConfig;

use crate::manifest::{RunManifest, FULL_SCALE_REPLICATES};
use crate::output::{
    dataset_csv, probe_csv, results_csv, scenario_json_path, sidecar_path, write_file, write_json, DatasetSidecar,
};
use crate::plot::{load_series, render_svg, Panel};
use crate::{CliError, Result};

pub const RESULTS_FILE: &str = "results.csv";

/// Command-line adjustments applied on top of a loaded manifest.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub full_scale: bool,
    pub rho: Option<f64>,
    pub include_event_indicator: bool,
    pub mix: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, mut m: RunManifest) -> Result<RunManifest> {
        if let Some(seed) = self.seed {
            m.master_seed = seed;
        }
        if self.full_scale && self.replicates.is_some() {
            return Err(CliError::Config("--full-scale and --replicates are mutually exclusive".into()));
        }
        if self.full_scale {
            m.replicates = FULL_SCALE_REPLICATES;
        }
        if let Some(r) = self.replicates {
            m.replicates = r;
        }
        if let Some(rho) = self.rho {
            m.rho = vec![rho];
        }
        if self.include_event_indicator {
            m.solver.include_event_indicator_in_cox = true;
        }
        if let Some(mix) = self.mix {
            m.solver.mix = mix;
        }
        m.validate()?;
        Ok(m)
    }
}

/// Runs every grid cell, writing `scenario_NNN.json` reports and
/// `results.csv` into `out_dir`. Returns the reports in grid order.
pub fn cmd_run(manifest: &RunManifest, out_dir: &Path, mut progress: impl FnMut(&str)) -> Result<Vec<ScenarioReport>> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let scenarios = manifest.scenarios();
    let total = scenarios.len();
    let start = Instant::now();
    let mut reports = Vec::with_capacity(total);
    for (k, s) in scenarios.iter().enumerate() {
        let report = run_scenario(&s.config, &s.model)?;
        progress(&format!(
            "[{}/{}] n={} censor_rate={} rho={} events={} replicates={} ({:.1}s)",
            k + 1,
            total,
            s.config.n,
            s.config.censor_rate,
            s.config.rho,
            report.n_events,
            s.config.replicates,
            report.wall_time_secs
        ));
        write_json(&scenario_json_path(out_dir, s.config.scenario_id), &report)?;
        reports.push(report);
    }
    write_file(&out_dir.join(RESULTS_FILE), &results_csv(&reports)?)?;
    progress(&format!("wrote {} ({:.1}s total)", out_dir.join(RESULTS_FILE).display(), start.elapsed().as_secs_f64()));
    Ok(reports)
}

pub fn cmd_plot(csv_path: &Path, panel: Panel, rho: Option<f64>, svg_out: &Path) -> Result<()> {
    let bytes = std::fs::read(csv_path).map_err(|e| CliError::io(csv_path, e))?;
    let series = load_series(&bytes, panel, rho)?;
    write_file(svg_out, render_svg(&series, panel, rho).as_bytes())
}

/// Writes one replicate's dataset to `out` and its sidecar next to it.
pub fn cmd_gen(manifest: &RunManifest, scenario_id: usize, replicate: usize, out: &Path) -> Result<PathBuf> {
    let s = manifest.scenario(scenario_id)?;
    if replicate >= s.config.replicates {
        return Err(CliError::Config(format!(
            "replicate {replicate} out of range (scenario has {} replicates)",
            s.config.replicates
        )));
    }
    let ds = replicate_dataset(&s.config, &s.model, replicate)?;
    write_file(out, &dataset_csv(&ds)?)?;
    let sidecar = sidecar_path(out);
    write_json(&sidecar, &DatasetSidecar::new(&ds, s.config.scenario_id, replicate))?;
    Ok(sidecar)
}

#[derive(Debug, Clone)]
pub struct ProbeArgs {
    pub alphas: Vec<f64>,
    pub n: usize,
    pub censor_rate: f64,
    pub rho: f64,
    pub replicates: usize,
    pub seed: u64,
}

pub fn cmd_probe(args: &ProbeArgs, out: Option<&Path>) -> Result<(Vec<ProbeRow>, Vec<u8>)> {
    let config = ScenarioConfig::new(args.n, args.censor_rate, args.rho, args.replicates, args.seed);
    let rows = degenerate_alpha_probe(&args.alphas, &config, &TrueModel::standard(args.rho))?;
    let bytes = probe_csv(&rows)?;
    if let Some(path) = out {
        write_file(path, &bytes)?;
    }
    Ok((rows, bytes))
}
