use std::path::{Path, PathBuf};

use rhpi::dynamics::{HybridModel, QuadParams};
use rhpi::flightlog::{write_log_file, BASE_COLUMNS};
use rhpi::harness::bench::bench_settings;
use rhpi::harness::experiment::{report_from_dir, report_paths, SettingRow};
use rhpi::harness::training::model_paths;
use rhpi::harness::*;
use rhpi::simworld::Task;
use rhpi::Error;

fn fitted_model() -> HybridModel {
    let params = QuadParams::default();
    HybridModel::fit_analytic_grid(&params, HybridModel::default_config(), 0.4, 1).unwrap()
}

/// A quick configuration: waypoints close enough together that trials
/// finish in a few dozen steps, and small rollout counts.
fn quick_config(out: &Path) -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.out_dir = out.to_path_buf();
    config.task = Task { waypoints: vec![[0.0, 0.0, 1.0], [0.2, 0.0, 1.0], [0.1, 0.15, 1.0]], ..Task::default() };
    let quick = |s: Setting| Setting { rollouts: Some(60), iterations: Some(1), ..s };
    config.sweep.settings = vec![quick(Setting::analytic()), quick(Setting::learned(1)), quick(Setting::learned(4))];
    config.sweep.trials = 2;
    config.sweep.max_steps = 80;
    config
}

fn same(a: f64, b: f64, tol: f64) -> bool {
    (a.is_nan() && b.is_nan()) || (a - b).abs() <= tol
}

fn rows_close(a: &SettingRow, b: &SettingRow) -> bool {
    a.setting == b.setting
        && a.trials == b.trials
        && a.completed == b.completed
        && a.seeds == b.seeds
        && [
            (a.avg_completion_time, b.avg_completion_time),
            (a.avg_total_cost, b.avg_total_cost),
            (a.avg_cost_per_sec, b.avg_cost_per_sec),
            (a.avg_8_closest, b.avg_8_closest),
            (a.var_ax, b.var_ax),
            (a.var_ay, b.var_ay),
            (a.var_az, b.var_az),
        ]
        .iter()
        .all(|&(x, y)| same(x, y, 1e-6))
}

#[test]
fn sweep_bookkeeping_and_replay() {
    let model = fitted_model();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_experiment(&quick_config(d1.path()), Some(&model), None, |_| {}).unwrap();
    assert_eq!(first.rows.len(), 3);
    for row in &first.rows {
        assert_eq!(row.trials, 2);
        assert_eq!(row.seeds, "0;1");
        let outcomes = row.completed + row.crashed + row.out_of_bounds + row.timeout + row.failed;
        assert_eq!(outcomes, 2);
    }
    assert!(first.rows[0].var_ax.is_nan());
    assert!(first.rows.iter().any(|r| r.completed > 0));
    assert!(first.rows[1..].iter().filter(|r| r.completed > 0).all(|r| r.var_ax > 0.0));

    run_experiment(&quick_config(d2.path()), Some(&model), None, |_| {}).unwrap();
    let (csv1, txt1) = report_paths(d1.path());
    let (csv2, txt2) = report_paths(d2.path());
    assert_eq!(std::fs::read(csv1).unwrap(), std::fs::read(csv2).unwrap());
    assert_eq!(std::fs::read(txt1).unwrap(), std::fs::read(txt2).unwrap());

    let rebuilt = report_from_dir(&quick_config(d1.path()), d1.path()).unwrap();
    assert_eq!(rebuilt.rows.len(), first.rows.len());
    for (a, b) in rebuilt.rows.iter().zip(&first.rows) {
        assert!(rows_close(a, b), "{a:?}\n{b:?}");
    }
}

#[test]
fn learned_setting_without_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&quick_config(dir.path()), None, None, |_| {});
    assert!(matches!(r, Err(Error::Config(_))));
}

fn flight_log(config: &ExperimentConfig, dir: &Path) -> PathBuf {
    let record = experiment::fly_setting(config, &config.sweep.settings[0], None, 4).unwrap();
    let path = dir.join("flight.csv");
    write_log_file(&path, &record.rows).unwrap();
    path
}

#[test]
fn ingest_counts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = quick_config(dir.path());
    config.task = Task::default();
    let path = flight_log(&config, dir.path());
    let clean = ingest_logs(&[&path]).unwrap();
    let lines = std::fs::read_to_string(&path).unwrap().lines().count() - 1;
    assert_eq!(clean.samples.len(), lines);
    assert!(clean.rejected.is_empty());

    // corrupt the thrust of the third data row
    let text = std::fs::read_to_string(&path).unwrap();
    let col = BASE_COLUMNS.iter().position(|c| *c == "thrust").unwrap();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 3 {
            let mut fields: Vec<&str> = line.split(',').collect();
            fields[col] = "inf";
            out.push(fields.join(","));
        } else {
            out.push(line.to_string());
        }
    }
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, out.join("\n") + "\n").unwrap();
    let ingested = ingest_logs(&[&bad]).unwrap();
    assert_eq!(ingested.samples.len(), lines - 1);
    assert_eq!(ingested.rejected.len(), 1);
    assert_eq!(ingested.rejected[0].1.line, 4);
    assert!(ingested.rejected[0].1.reason.contains("thrust"));

    let missing = dir.path().join("missing.csv");
    let header: Vec<&str> = BASE_COLUMNS.iter().copied().filter(|c| *c != "pitch").collect();
    std::fs::write(&missing, header.join(",") + "\n").unwrap();
    match ingest_logs(&[&missing]) {
        Err(e @ Error::MissingColumn { .. }) => assert!(e.to_string().contains("pitch")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = quick_config(dir.path());
    config.task = Task::default();
    config.training.logs = vec![flight_log(&config, dir.path())];
    let read_all = |d: &Path| model_paths(d).map(|p| std::fs::read(p).unwrap());

    config.training.model_dir = PathBuf::from("a");
    let a = train(&config).unwrap();
    config.training.model_dir = PathBuf::from("b");
    let b = train(&config).unwrap();
    assert_eq!(read_all(&a.model_dir), read_all(&b.model_dir));
    assert!(a.field_counts.iter().all(|&n| n >= 1));
    assert_eq!(a.samples, b.samples);

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, BASE_COLUMNS.join(",") + "\n").unwrap();
    config.training.logs = vec![empty];
    assert!(matches!(train(&config), Err(Error::EmptyTrainingSet)));
}

#[test]
fn bench_reports_every_case() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = quick_config(dir.path());
    config.task = Task::default();
    config.bench.repeats = 1;
    config.bench.iterations = 1;
    let report = benchmark(&config, &fitted_model()).unwrap();
    assert!(report.identical_across_workers);
    let cases: Vec<String> = bench_settings().iter().map(|s| s.label()).collect();
    for case in &cases {
        assert!(report.rows.iter().any(|r| &r.case == case));
    }
    let one = report.rows.iter().find(|r| r.workers == 1 && r.case == "analytic").unwrap();
    assert_eq!((one.rollouts, one.horizon_steps), (1000, 50));
    assert!(report.rows.iter().all(|r| r.ms_per_iteration > 0.0 && r.rollout_steps_per_sec > 0.0));
}

#[test]
fn config_file_layers_under_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, "seed = 9\n[controller]\ntemperature = 0.5\n[sweep]\ntrials = 3\n").unwrap();
    let config = ExperimentConfig::load(Some(&path), &["controller.temperature=0.25".into()]).unwrap();
    assert_eq!(config.seed, 9);
    assert_eq!(config.sweep.trials, 3);
    assert_eq!(config.controller.temperature, 0.25);
    let back: ExperimentConfig = toml::from_str(&config.to_toml()).unwrap();
    assert_eq!(back, config);

    std::fs::write(&path, "[controller]\ntemprature = 0.5\n").unwrap();
    assert!(matches!(ExperimentConfig::load(Some(&path), &[]), Err(Error::Config(_))));
}
