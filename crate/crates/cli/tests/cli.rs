use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use battlife::data::read_table_csv;
use battlife::featsel::{correlation_matrix, prune_multicollinear, PruneResult};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_battlife"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn small_synth(dir: &Path) -> String {
    assert_ok(&run(dir, &["synth", "--cells", "2", "--cycles", "60"]));
    dir.join("data.csv").to_string_lossy().into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_ok(&run(a.path(), &["synth"]));
    assert_ok(&run(b.path(), &["synth"]));
    let x = fs::read(a.path().join("data.csv")).unwrap();
    assert_eq!(x, fs::read(b.path().join("data.csv")).unwrap());
    assert_eq!(csv_rows(&a.path().join("data.csv")).len(), 800);
}

#[test]
fn synth_rejects_single_cycle() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["synth", "--cycles", "1"])), 2);
}

#[test]
fn missing_data_file_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["train", "--model", "ridge", "--data", "/nonexistent/x.csv"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn correlate_matches_library() {
    let d = tempfile::tempdir().unwrap();
    let data = small_synth(d.path());
    assert_ok(&run(d.path(), &["correlate", "--data", &data, "--threshold", "0.95"]));
    let got: PruneResult = serde_json::from_str(&fs::read_to_string(d.path().join("prune.json")).unwrap()).unwrap();
    let table = battlife::data::standardize(&read_table_csv(Path::new(&data)).unwrap().table, None).unwrap();
    let want = prune_multicollinear(&correlation_matrix(&table).unwrap(), 0.95).unwrap();
    assert_eq!(got, want);
    let n = table.schema().len();
    assert_eq!(csv_rows(&d.path().join("heatmap.csv")).len(), n * n);
}

#[test]
fn duplicated_column_drops_once() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("dup.csv");
    let mut s = String::from("source,cell_id,cycle,a,a_copy,b,target\n");
    for i in 0..30 {
        let a = (i as f64 * 0.37).sin();
        let b = (i as f64 * 1.3).cos();
        s += &format!("NASA,c{},{},{a},{a},{b},{}\n", i / 15, i % 15, 1.0 + 0.1 * a);
    }
    fs::write(&path, s).unwrap();
    assert_ok(&run(d.path(), &["correlate", "--data", path.to_str().unwrap()]));
    let got: PruneResult = serde_json::from_str(&fs::read_to_string(d.path().join("prune.json")).unwrap()).unwrap();
    assert_eq!(got.dropped.len(), 1);
    assert_eq!(got.retained.len(), 2);
}

#[test]
fn train_writes_convex_weights_and_reproduces() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let data = small_synth(a.path());
    assert_ok(&run(a.path(), &["train", "--data", &data]));
    assert_ok(&run(b.path(), &["train", "--data", &data]));
    let rows = csv_rows(&a.path().join("weights.csv"));
    assert_eq!(rows.len(), 3);
    let sum: f64 = rows.iter().map(|r| r[4].parse::<f64>().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-12);
    for f in ["model.json", "weights.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn compare_reports_requested_models() {
    let d = tempfile::tempdir().unwrap();
    let data = small_synth(d.path());
    assert_ok(&run(d.path(), &["compare", "--data", &data, "--models", "ridge,knn", "--folds", "3"]));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["cv"]["models"].as_array().unwrap().len(), 2);
    assert_eq!(csv_rows(&d.path().join("report.csv")).len(), 6);
    assert_eq!(csv_rows(&d.path().join("improvements.csv")).len(), 1);
}

#[test]
fn explain_outputs() {
    let d = tempfile::tempdir().unwrap();
    let data = small_synth(d.path());
    assert_ok(&run(d.path(), &["train", "--model", "gbt", "--data", &data]));
    let o = run(
        d.path(),
        &[
            "explain", "--data", &data, "--samples", "16", "--instances", "8", "--pdp", "SOH,CVCT", "--resolution",
            "20", "--verify",
        ],
    );
    assert_ok(&o);
    assert_eq!(csv_rows(&d.path().join("pdp_SOH_CVCT.csv")).len(), 400);
    let share: f64 = csv_rows(&d.path().join("importance.csv")).iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((share - 1.0).abs() < 1e-9);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("shap_summary.json")).unwrap()).unwrap();
    assert!(summary["max_efficiency_error"].as_f64().unwrap() <= 1e-9);
    assert!(d.path().join("residuals.csv").exists());
}

#[test]
fn tune_ledger_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let data = small_synth(a.path());
    let space = a.path().join("space.json");
    fs::write(&space, r#"{"params":[{"name":"lambda","kind":"real","low":0.0001,"high":10.0}]}"#).unwrap();
    for d in [&a, &b] {
        let o = run(
            d.path(),
            &["tune", "--data", &data, "--family", "ridge", "--space", space.to_str().unwrap(), "--trials", "5"],
        );
        assert_ok(&o);
    }
    let ledger = fs::read(a.path().join("trials.csv")).unwrap();
    assert_eq!(ledger, fs::read(b.path().join("trials.csv")).unwrap());
    assert_eq!(csv_rows(&a.path().join("trials.csv")).len(), 5);
}

#[test]
fn tune_rejects_empty_space() {
    let d = tempfile::tempdir().unwrap();
    let space = d.path().join("space.json");
    fs::write(&space, r#"{"params":[]}"#).unwrap();
    let o = run(d.path(), &["tune", "--space", space.to_str().unwrap(), "--trials", "5"]);
    assert_eq!(code(&o), 2);
}
