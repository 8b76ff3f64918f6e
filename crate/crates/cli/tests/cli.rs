use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use survsel_cli::commands::{cmd_gen, cmd_plot, cmd_run, Overrides};
use survsel_cli::output::{DatasetSidecar, RESULT_COLUMNS};
use survsel_cli::plot::Panel;
use survsel_cli::RunManifest;

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_survsel")).args(args).current_dir(dir).output().unwrap()
}

fn write_manifest(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("manifest.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn minimal_run_writes_ten_rows() {
    let dir = tempfile::tempdir().unwrap();
    let m = RunManifest::from_json(r#"{"n":[120],"censor_rate":[0.5],"rho":[0.0],"replicates":1,"master_seed":1}"#).unwrap();
    let reports = cmd_run(&m, dir.path(), |_| {}).unwrap();
    assert_eq!(reports.len(), 1);
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), RESULT_COLUMNS.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    for row in &rows {
        assert_eq!(row.split(',').count(), RESULT_COLUMNS.len());
        assert!(row.starts_with("0,120,0.5,0,60,"));
    }
    let oracle = rows.iter().find(|r| r.contains("oracle_multivariate_cox")).unwrap();
    assert!(oracle.contains(",NA,NA,NA,NA,NA,NA,NA,"));
    assert!(dir.path().join("scenario_000.json").exists());
}

#[test]
fn full_grid_has_sixteen_scenarios() {
    let m = RunManifest::from_json(
        r#"{"n":[500,1000,2000,5000],"censor_rate":[0.1,0.5],"rho":[0,0.8],"replicates":1,"master_seed":1,
            "methods":["univariate_cox","gaussian_two_cov"]}"#,
    )
    .unwrap();
    assert_eq!(m.scenarios().len(), 16);
    let dir = tempfile::tempdir().unwrap();
    cmd_run(&m, dir.path(), |_| {}).unwrap();
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 16 * 2);
    let all = RunManifest { methods: None, ..m };
    assert!(all.scenarios().iter().all(|s| s.config.methods.len() == 10));
}

#[test]
fn rerun_is_byte_identical_and_seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path(), r#"{"n":[150],"censor_rate":[0.3],"rho":[0.8],"replicates":4,"master_seed":8}"#);
    let m = manifest.to_str().unwrap();
    for out in ["a", "b"] {
        assert!(bin(&["run", "--manifest", m, "--out", out], dir.path()).status.success());
    }
    let a = std::fs::read(dir.path().join("a/results.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/results.csv")).unwrap();
    assert_eq!(a, b);
    assert!(bin(&["--threads", "2", "run", "--manifest", m, "--out", "c", "--seed", "9"], dir.path()).status.success());
    let c = std::fs::read(dir.path().join("c/results.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn overrides_apply_on_top_of_the_manifest() {
    let m = RunManifest::from_json(r#"{"n":[100],"censor_rate":[0.5],"rho":[0,0.8],"replicates":5}"#).unwrap();
    let o = Overrides {
        seed: Some(4),
        rho: Some(0.8),
        include_event_indicator: true,
        mix: Some(0.5),
        full_scale: true,
        ..Overrides::default()
    };
    let m = o.apply(m).unwrap();
    assert_eq!(m.replicates, 10_000);
    assert_eq!(m.rho, vec![0.8]);
    assert_eq!(m.master_seed, 4);
    assert!(m.solver.include_event_indicator_in_cox);
    assert_eq!(m.solver.mix, 0.5);
    let bad = Overrides { mix: Some(1.5), ..Overrides::default() }.apply(m.clone()).unwrap_err();
    assert_eq!(bad.exit_code(), 2);
    let both = Overrides { full_scale: true, replicates: Some(3), ..Overrides::default() }.apply(m).unwrap_err();
    assert_eq!(both.exit_code(), 2);
}

#[test]
fn generated_dataset_matches_manifest_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let m = RunManifest::from_json(r#"{"n":[80,90],"censor_rate":[0.25],"rho":[0.8],"replicates":3,"master_seed":2}"#).unwrap();
    let out = dir.path().join("ds.csv");
    let sidecar = cmd_gen(&m, 1, 2, &out).unwrap();
    let first = std::fs::read(&out).unwrap();
    let first_side = std::fs::read(&sidecar).unwrap();
    cmd_gen(&m, 1, 2, &out).unwrap();
    assert_eq!(first, std::fs::read(&out).unwrap());
    assert_eq!(first_side, std::fs::read(&sidecar).unwrap());

    let text = String::from_utf8(first).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "time_obs,status,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 90);
    let censored = rows.iter().filter(|r| r.split(',').nth(1) == Some("0")).count();
    assert_eq!(censored, 23);
    assert!(rows.iter().all(|r| r.split(',').next().unwrap().parse::<f64>().unwrap() > 0.0));

    let side: DatasetSidecar = serde_json::from_slice(&first_side).unwrap();
    assert_eq!(side.true_ids.len(), 5);
    assert!(side.true_ids.iter().all(|&i| (1..=10).contains(&i)));
    for (id, b) in side.true_ids.iter().zip(&side.true_beta_obs) {
        assert_eq!(*id as f64, *b);
    }
    assert_eq!(side.n_events, 67);

    let err = cmd_gen(&m, 1, 3, &out).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert_eq!(cmd_gen(&m, 2, 0, &out).unwrap_err().exit_code(), 2);
}

#[test]
fn plot_draws_one_series_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let m = RunManifest::from_json(r#"{"n":[100,200],"censor_rate":[0.5],"rho":[0,0.8],"replicates":2,"master_seed":3}"#).unwrap();
    cmd_run(&m, dir.path(), |_| {}).unwrap();
    let csv = dir.path().join("results.csv");
    let svg = dir.path().join("fig.svg");
    cmd_plot(&csv, Panel::SelectionAccuracy, Some(0.8), &svg).unwrap();
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg"));
    assert_eq!(text.matches("class=\"series\"").count(), 9);
    assert_eq!(text.matches("<polyline").count(), 9);
    assert!(!text.contains("oracle_multivariate_cox"));
    cmd_plot(&csv, Panel::RankingAccuracy, Some(0.0), &svg).unwrap();
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("class=\"series\"").count(), 10);
    assert!(text.contains("oracle_multivariate_cox"));
    assert_eq!(cmd_plot(&csv, Panel::Sensitivity, Some(0.5), &svg).unwrap_err().exit_code(), 3);
}

#[test]
fn exit_codes_distinguish_configuration_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_manifest(dir.path(), r#"{"n":[60],"censor_rate":[0.5],"rho":[0],"replicates":1}"#);
    let out = bin(&["run", "--manifest", "missing.json", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"n":[60],"censor_rate":[0.5],"rho":[0],"replicates":0}"#).unwrap();
    let out = bin(&["run", "--manifest", bad.to_str().unwrap(), "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replicates"));
    let out = bin(&["run", "--manifest", ok.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = bin(&["plot", "--input", "nothing.csv", "--out", "f.svg"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let out = bin(&["probe", "--alpha", "5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = bin(&["run", "--manifest", ok.to_str().unwrap(), "--out", "r", "--replicates", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn probe_prints_one_row_per_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["probe", "--alpha", "0.5,2", "--n", "80", "--replicates", "3"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "shape_alpha,replicates,failures,failure_rate");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.5,3,"));
}
