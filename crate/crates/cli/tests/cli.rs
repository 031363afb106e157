use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_narx");

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic.csv")
}

fn narx(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("run narx")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn train_small(out: &Path, extra: &[&str]) -> Output {
    let csv = fixture();
    let mut args = vec![
        "train",
        "--csv",
        csv.to_str().unwrap(),
        "--neurons",
        "5",
        "--restarts",
        "3",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    narx(&args)
}

#[test]
fn train_writes_four_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_small(dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["epochs.csv", "manifest.json", "model.json", "train_report.json"]
    );

    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);

    let report = read_json(&dir.path().join("train_report.json"));
    assert_eq!(report["restarts"].as_array().unwrap().len(), 3);
    assert!(report["diagnostics"]["r_value"].as_f64().unwrap() > 0.99);
    let epochs = std::fs::read_to_string(dir.path().join("epochs.csv")).unwrap();
    assert!(epochs.starts_with("epoch,performance,train_mse,validation_mse"));
}

#[test]
fn goal_is_reported_when_met() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_small(dir.path(), &["--xi", "1", "--goal", "1e-5"]);
    assert_eq!(code(&out), 0);
    let report = read_json(&dir.path().join("train_report.json"));
    assert_eq!(report["selected"]["stop_reason"], "goal-met");
}

#[test]
fn malformed_csv_leaves_no_model() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(
        &csv,
        "Date,Open,High,Low,Volume,Close\n2011-01-03,21.01,21.05,20.78,58223800,20.85\n2011-01-04,21.12,oops,21.05,75206200,21.15\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = narx(&[
        "train",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("oops"));
    assert!(!out_dir.join("model.json").exists());
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = narx(&["train", "--csv", dir.path().join("nope.csv").to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn retraining_reproduces_outputs_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&train_small(a.path(), &[])), 0);
    assert_eq!(code(&train_small(b.path(), &[])), 0);
    for name in ["model.json", "train_report.json", "epochs.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}

fn trained_model() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&train_small(dir.path(), &[])), 0);
    let model = dir.path().join("model.json");
    (dir, model)
}

#[test]
fn simulate_horizons() {
    let (dir, model) = trained_model();
    let csv = fixture();
    let sim = dir.path().join("sim");
    let out = narx(&[
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--horizon",
        "100",
        "--out",
        sim.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(sim.join("predictions.csv")).unwrap();
    assert_eq!(rows.lines().count(), 101);
    assert!(rows.starts_with("timestep,date,target,prediction,error"));
    let diag = read_json(&sim.join("diagnostics.json"));
    assert_eq!(diag["horizon"], 100);
    assert!(diag["diagnostics"]["verdict"]["accepted"].is_boolean());

    let empty = dir.path().join("empty");
    let out = narx(&[
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--horizon",
        "0",
        "--out",
        empty.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read_to_string(empty.join("predictions.csv"))
            .unwrap()
            .lines()
            .count(),
        1
    );
    assert!(read_json(&empty.join("diagnostics.json"))["diagnostics"].is_null());
}

#[test]
fn simulate_with_explicit_start() {
    let (dir, model) = trained_model();
    let csv = fixture();
    let out_dir = dir.path().join("sim");
    let out = narx(&[
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--from",
        "2011-03-01",
        "--horizon",
        "30",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(out_dir.join("predictions.csv")).unwrap();
    assert!(rows.lines().nth(1).unwrap().contains(",2011-03-01,"));
}

#[test]
fn channel_mismatch_is_reported() {
    let (dir, model) = trained_model();
    let csv = fixture();
    let out = narx(&[
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--exo-channels",
        "open,high,low",
    ]);
    assert_eq!(code(&out), 6);

    // the same data without its volume column
    let text = std::fs::read_to_string(&csv).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(4);
            f.join(",") + "\n"
        })
        .collect();
    let three = dir.path().join("three.csv");
    std::fs::write(&three, stripped).unwrap();
    let out = narx(&[
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--csv",
        three.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 6, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn singleton_sweep_and_config_handoff() {
    let dir = tempfile::tempdir().unwrap();
    let csv = fixture();
    let sweep = dir.path().join("sweep");
    let out = narx(&[
        "sweep",
        "--csv",
        csv.to_str().unwrap(),
        "--input-delays",
        "0:1",
        "--feedback-delays",
        "1",
        "--neurons",
        "4",
        "--restarts",
        "2",
        "--out",
        sweep.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(sweep.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().nth(1).unwrap().starts_with("0:1,1,4,"));
    let chosen = read_json(&sweep.join("chosen_config.json"));
    assert_eq!(chosen["neurons"], 4);

    let train = dir.path().join("train");
    let out = narx(&[
        "train",
        "--csv",
        csv.to_str().unwrap(),
        "--config",
        sweep.join("chosen_config.json").to_str().unwrap(),
        "--restarts",
        "1",
        "--out",
        train.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(read_json(&train.join("model.json"))["config"]["hidden"], 4);
}

#[test]
fn sweep_grid_syntax() {
    let dir = tempfile::tempdir().unwrap();
    let csv = fixture();
    let out = narx(&[
        "sweep",
        "--csv",
        csv.to_str().unwrap(),
        "--input-delays",
        "0:1,2:5",
        "--neurons",
        "3",
        "--restarts",
        "1",
        "--epochs",
        "20",
        "--jobs",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = read_json(&dir.path().join("sweep.json"));
    assert_eq!(sweep["grid"]["input_delays"], serde_json::json!([[0, 1], [2, 3, 4, 5]]));
    assert_eq!(sweep["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn empty_sweep_axis_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = fixture();
    for axis in ["--input-delays", "--feedback-delays", "--neurons"] {
        let out = narx(&[
            "sweep",
            "--csv",
            csv.to_str().unwrap(),
            axis,
            "",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 2, "{axis}");
    }
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn eval_accepts_and_rejects() {
    let (dir, model) = trained_model();
    let csv = fixture();
    let ok = dir.path().join("ok");
    let out = narx(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        ok.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_json(&ok.join("diagnostics.json"))["verdict"]["accepted"], true);
    let lags = std::fs::read_to_string(ok.join("error_autocorr.csv")).unwrap();
    assert_eq!(lags.lines().count(), 22);

    let strict = dir.path().join("strict");
    let out = narx(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--r-min",
        "0.999999",
        "--out",
        strict.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 7);
    let verdict = &read_json(&strict.join("diagnostics.json"))["verdict"];
    assert_eq!(verdict["accepted"], false);
    assert!(verdict["reasons"][0].as_str().unwrap().contains("regression R"));
}
