use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command;

use greenrec::data::{generate_synthetic, ColumnMapping, SyntheticConfig};
use greenrec::ensemble::Pipeline;
use greenrec_harness::config::{DatasetConfig, ModelEntry};
use greenrec_harness::record::{mask_timings, read_results};
use greenrec_harness::report::report_comparison;
use greenrec_harness::*;

fn synthetic_file(dir: &Path) -> PathBuf {
    let d = generate_synthetic(&SyntheticConfig {
        seed: 4,
        n_users: 60,
        n_items: 45,
        density: 0.4,
        noise_std: 0.3,
        ..Default::default()
    })
    .unwrap();
    let p = dir.join("synth.tsv");
    d.write_tsv(&p).unwrap();
    p
}

fn config(dir: &Path, pipeline: Pipeline) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetConfig {
            name: "synth".into(),
            path: synthetic_file(dir),
            mapping: ColumnMapping {
                user_column: "user".into(),
                item_column: "item".into(),
                rating_column: "rating".into(),
                timestamp_column: None,
                delimiter: '\t',
            },
            ..Default::default()
        },
        pipeline,
        implicit_threshold: Some(2.5),
        out_dir: dir.join("out"),
        ..Default::default()
    }
}

fn names(models: &[&str]) -> Vec<ModelEntry> {
    models.iter().map(|m| ModelEntry::Name(m.to_string())).collect()
}

#[test]
fn rating_suite_is_metered_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), Pipeline::Rating);
    let recs = run_suite(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(recs.len(), 13);
    for r in &recs {
        assert_eq!(r.status, Status::Ok, "{}: {:?}", r.model, r.detail);
        let e = r.energy.as_ref().unwrap();
        assert!(e.e_experiment_wh > 0.0);
        assert_eq!(r.carbon.unwrap().grams_co2e, e.e_experiment_wh / 1000.0 * 420.0);
        assert!(r.primary().unwrap().1 > 0.0);
    }
    let results = cfg.out_dir.join(RESULTS_FILE);
    let before = std::fs::read_to_string(&results).unwrap();
    assert_eq!(before.lines().count(), 14);
    let manifests = std::fs::read_dir(cfg.out_dir.join("runs/synth")).unwrap().count();
    assert_eq!(manifests, 13);

    // Everything is recorded: a second run does nothing.
    assert!(run_suite(&cfg, &RunOptions::default()).unwrap().is_empty());
    assert_eq!(std::fs::read_to_string(&results).unwrap(), before);

    // Reports reproduce the persisted numbers exactly.
    let rows = read_results(&results).unwrap();
    let c = report_comparison(&rows, Pipeline::Rating, "svd").unwrap();
    let svd = recs.iter().find(|r| r.model == "svd").unwrap();
    let knn = recs.iter().find(|r| r.model == "knn_baseline").unwrap();
    let row = c.rows.iter().find(|r| r.model == "knn_baseline").unwrap();
    let (a, b) = (knn.primary().unwrap().1, svd.primary().unwrap().1);
    assert_eq!(row.metric_pct.unwrap(), 100.0 * (a - b) / b);
}

#[test]
fn interrupted_suite_resumes_where_it_stopped() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), Pipeline::Rating);
    cfg.meter = None;
    cfg.models = names(&["global_mean", "bias_baseline"]);
    assert_eq!(run_suite(&cfg, &RunOptions::default()).unwrap().len(), 2);
    cfg.models = names(&["global_mean", "bias_baseline", "svd", "slope_one"]);
    let recs = run_suite(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(recs.iter().map(|r| r.model.as_str()).collect::<Vec<_>>(), ["svd", "slope_one"]);
    let forced = run_suite(&cfg, &RunOptions { force: true }).unwrap();
    assert_eq!(forced.len(), 4);
}

#[test]
fn unmetered_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let mut cfg = config(tmp.path(), Pipeline::Ranking);
        cfg.meter = None;
        cfg.out_dir = tmp.path().join(sub);
        let recs = run_suite(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(recs.len(), 12);
        assert!(recs.iter().all(|r| r.status == Status::Ok && r.energy.is_none()));
        std::fs::read_to_string(cfg.out_dir.join(RESULTS_FILE)).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(mask_timings(&a), mask_timings(&b));
}

#[test]
fn capacity_failure_is_recorded_and_suite_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), Pipeline::Rating);
    cfg.models = serde_json::from_str(
        r#"[{"model": "knn_baseline", "memory_budget": 64},
            {"model": "ensemble", "strategy": "average", "base_models": ["svd", "knn_baseline"]},
            "svd"]"#,
    )
    .unwrap();
    let recs = run_suite(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(recs[0].status, Status::Failed("capacity".into()));
    assert_eq!(recs[1].status, Status::Failed("capacity".into()));
    assert!(recs[1].detail.as_ref().unwrap().contains("knn_baseline"));
    assert!(recs[1].metrics.is_empty() && recs[1].energy.is_none());
    assert_eq!(recs[2].status, Status::Ok);
    let tsv = std::fs::read_to_string(cfg.out_dir.join(RESULTS_FILE)).unwrap();
    assert!(tsv.contains("ensemble_average\tsynth\trating\t\t\t\t\t\t\t"));
    assert!(tsv.lines().nth(2).unwrap().ends_with("failed(capacity)"));
}

#[test]
fn unreachable_meter_leaves_metrics_intact() {
    let tmp = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut cfg = config(tmp.path(), Pipeline::Rating);
    cfg.models = names(&["bias_baseline"]);
    cfg.meter = Some(
        serde_json::from_value(serde_json::json!({
            "kind": "shelly-gen2",
            "device": "dead-plug",
            "endpoint": format!("127.0.0.1:{port}"),
            "timeout_ms": 200,
            "poll_interval_s": 0.05
        }))
        .unwrap(),
    );
    let recs = run_suite(&cfg, &RunOptions::default()).unwrap();
    let r = &recs[0];
    assert_eq!(r.status, Status::Ok);
    assert!(r.primary().is_some());
    assert!(r.energy.is_none() && r.carbon.is_none());
    assert!(r.energy_error.as_ref().unwrap().contains("energy undefined"));
}

#[test]
fn cross_validation_summarises_folds() {
    let tmp = tempfile::tempdir().unwrap();
    for pipeline in [Pipeline::Rating, Pipeline::Ranking] {
        let mut cfg = config(tmp.path(), pipeline);
        cfg.meter = None;
        cfg.cv.enabled = true;
        cfg.models = names(&["popular", "bias_baseline"][match pipeline {
            Pipeline::Ranking => 0..1,
            Pipeline::Rating => 1..2,
        }]);
        let r = &run_suite(&cfg, &RunOptions::default()).unwrap()[0];
        let cv = r.cv.as_ref().unwrap();
        assert_eq!(cv.values.len(), 5);
        assert!(cv.mean > 0.0 && cv.std >= 0.0);
    }
}

#[test]
fn idle_check_gates_metered_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), Pipeline::Rating);
    cfg.models = names(&["global_mean"]);
    cfg.idle_check = Some(Default::default());
    cfg.meter.as_mut().unwrap().settings.watts = 120.0;
    assert!(matches!(
        run_suite(&cfg, &RunOptions::default()),
        Err(HarnessError::Energy(greenrec_energy::EnergyError::BaselineOutOfBand { .. }))
    ));
    cfg.meter.as_mut().unwrap().settings.watts = 71.2;
    assert_eq!(run_suite(&cfg, &RunOptions::default()).unwrap().len(), 1);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_greenrec"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), Pipeline::Rating);
    let cfg_path = tmp.path().join("c.json");
    let mut json = serde_json::to_value(&cfg).unwrap();
    json["models"] = serde_json::json!([{"model": "slope_one", "memory_budget": 8}, "global_mean"]);
    std::fs::write(&cfg_path, json.to_string()).unwrap();
    let c = cfg_path.to_str().unwrap();

    let out = cli(&["run", "--config", c, "--no-meter"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("failed(capacity)"));

    let out = cli(&["report", "--config", c, "--reference", "global_mean"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("model\trmse_synth"));
    assert_eq!(cli(&["report", "--config", c, "--reference", "svd"]).status.code(), Some(1));

    let out = cli(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(cli(&["run", "--bogus-flag"]).status.code(), Some(1));
    assert_eq!(cli(&["run", "--config", "/nonexistent.json"]).status.code(), Some(1));

    let out = cli(&["list-models", "--pipeline", "ranking"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 12);
    let out = cli(&["baseline", "--config", c, "--duration", "600"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "71.200");
}
