//! End-to-end runs of the `fair4free` binary on the shipped corpora.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY: [&str; 4] = ["--teacher.epochs=2", "--distill.epochs=2", "--eval.forest.n_trees=5", "--quiet"];
const STAGES: [&str; 5] = ["prepare", "teacher", "student", "synthetic", "eval"];

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn corpus(name: &str) -> (PathBuf, PathBuf) {
    (root().join(format!("data/{name}.csv")), root().join(format!("schemas/{name}.json")))
}

fn run(dataset: &Path, schema: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fair4free"))
        .arg("--dataset")
        .arg(dataset)
        .arg("--schema")
        .arg(schema)
        .arg("--output-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn prepare_splits_adult_80_20_and_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, schema) = corpus("adult");
    let o = run(&data, &schema, tmp.path(), &["prepare"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("prepare");
    let (train, test) = (csv_rows(&dir.join("train.csv")), csv_rows(&dir.join("test.csv")));
    assert_eq!(train + test, csv_rows(&data));
    assert_eq!((train, test), (36178, 9044));

    let snapshot = |name: &str| fs::read(dir.join(name)).unwrap();
    let before: Vec<_> = ["split.json", "train.csv", "test.csv"].map(snapshot).into();
    let o = run(&data, &schema, tmp.path(), &["prepare"]);
    assert!(o.status.success());
    let after: Vec<_> = ["split.json", "train.csv", "test.csv"].map(snapshot).into();
    assert!(before == after, "rerun changed prepare artifacts");
}

#[test]
fn corrupt_row_is_reported_with_its_position() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, schema) = corpus("compas");
    let mut lines: Vec<String> = fs::read_to_string(&data).unwrap().lines().map(String::from).collect();
    let mut fields: Vec<&str> = lines[5].split(',').collect();
    fields[1] = "abc";
    lines[5] = fields.join(",");
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, lines.join("\n")).unwrap();

    let o = run(&bad, &schema, &tmp.path().join("out"), &["prepare"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("row 5") && err.contains("age") && err.contains("abc"), "{err}");
}

#[test]
fn stage_without_its_prerequisite_names_the_missing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, schema) = corpus("compas");
    assert!(run(&data, &schema, tmp.path(), &["prepare", "--quiet"]).status.success());
    let o = run(&data, &schema, tmp.path(), &["distill", "--quiet"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("train-teacher"), "{}", stderr(&o));

    let fresh = tmp.path().join("fresh");
    let o = run(&data, &schema, &fresh, &["train-teacher", "--quiet"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`prepare`"), "{}", stderr(&o));
}

#[test]
fn invalid_configuration_exits_1_and_divergence_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, schema) = corpus("compas");
    for args in [&["prepare", "--teacher.nope=1"][..], &["prepare", "--beta", "12"], &["frobnicate"]] {
        assert_eq!(run(&data, &schema, tmp.path(), args).status.code(), Some(1), "{args:?}");
    }
    assert!(run(&data, &schema, tmp.path(), &["prepare", "-q"]).status.success());
    let o = run(&data, &schema, tmp.path(), &["train-teacher", "-q", "--teacher.epochs=3", "--teacher.adam.learning_rate=1e12"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn compas_pipeline_writes_every_artifact_and_a_seven_column_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, schema) = corpus("compas");
    let mut args = vec!["pipeline", "--seed", "3"];
    args.extend(TINY);
    let o = run(&data, &schema, tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    for stage in STAGES {
        let manifest = json(&tmp.path().join(stage).join("manifest.json"));
        assert!(manifest["config_hash"].as_str().is_some_and(|h| h.len() == 64), "{stage}");
        assert!(manifest["wall_time_secs"].as_f64().is_some(), "{stage}");
        assert!(manifest["seeds"].as_object().unwrap().values().all(|v| v == 3), "{stage}");
        for out in manifest["outputs"].as_array().unwrap() {
            assert!(Path::new(out.as_str().unwrap()).is_file(), "{stage}: {out}");
        }
    }
    assert_eq!(csv_rows(&tmp.path().join("synthetic/synthetic.csv")), csv_rows(&tmp.path().join("prepare/train.csv")));

    let summary = stdout(&o);
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3, "{summary}");
    let header: Vec<&str> = lines[0].split_whitespace().skip(1).collect();
    assert_eq!(header, ["DPR", "EOR", "ACC", "Recall", "F1", "Density", "Coverage"]);
    for line in &lines[1..] {
        let values: Vec<f64> = line.split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(values.len(), 7, "{line}");
    }

    let again = tempfile::tempdir().unwrap();
    let o2 = run(&data, &schema, again.path(), &args);
    assert_eq!(stdout(&o2), summary);
}

#[test]
fn evaluate_report_has_the_documented_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, schema) = corpus("compas");
    for stage in ["prepare", "train-teacher", "distill", "generate", "evaluate"] {
        let mut args = vec![stage];
        args.extend(TINY);
        let o = run(&data, &schema, tmp.path(), &args);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let columns: Vec<String> = json(&schema)["columns"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap().to_owned()).collect();
    for file in ["report.json", "baseline.json"] {
        let r = json(&tmp.path().join("eval").join(file));
        for key in ["dpr", "eor", "accuracy", "recall", "f1"] {
            let v = r[key].as_f64().unwrap_or_else(|| panic!("{file}: {key}"));
            assert!((0.0..=1.0).contains(&v), "{file}: {key} = {v}");
        }
        assert!(r["density"].as_f64().unwrap() >= 0.0);
        assert!((0.0..=1.0).contains(&r["coverage"].as_f64().unwrap()));
        assert!(r["n_train"].as_u64().unwrap() > 0 && r["n_test"].as_u64().unwrap() > 0);
        assert!(r["config"]["forest"]["n_trees"] == 5 && r["config"]["k"] == 5);
        let imp = r["feature_importances"].as_array().unwrap();
        let names: Vec<&str> = imp.iter().map(|c| c["column"].as_str().unwrap()).collect();
        let features: Vec<&str> = columns.iter().map(String::as_str).filter(|c| *c != "two_year_recid").collect();
        assert_eq!(names, features, "{file}");
        let total: f64 = imp.iter().map(|c| c["importance"].as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    let prov = &json(&tmp.path().join("eval/report.json"))["provenance"];
    assert_eq!(prov["decoding"], "sample_levels");
    assert_eq!(prov["s_strategy"]["kind"], "empirical");
    assert!(json(&tmp.path().join("eval/baseline.json"))["provenance"].is_null());
}

#[test]
fn beta_sweep_prints_ten_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, schema) = corpus("compas");
    let mut args = vec!["pipeline", "--beta-sweep", "--teacher.batch_size=512", "--distill.batch_size=512"];
    args.extend(TINY);
    let o = run(&data, &schema, tmp.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let labels: Vec<&str> = out.lines().skip(2).map(|l| l.split_whitespace().next().unwrap()).collect();
    let expected: Vec<String> = (0..=9).map(|b| format!("beta={b}")).collect();
    assert_eq!(labels, expected, "{out}");
    for b in 0..=9 {
        assert!(tmp.path().join(format!("beta{b}/eval/report.json")).is_file());
    }
}

#[test]
fn plot_pca_writes_projection_and_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, schema) = corpus("compas");
    let mut args = vec!["pipeline"];
    args.extend(TINY);
    assert!(run(&data, &schema, tmp.path(), &args).status.success());
    let o = run(&data, &schema, tmp.path(), &["plot-pca", "--n", "300", "--svg", "-q"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("pca");
    assert_eq!(csv_rows(&dir.join("pca.csv")), 600);
    assert!(fs::read_to_string(dir.join("pca.svg")).unwrap().starts_with("<svg"));
    let summary = json(&dir.join("summary.json"));
    assert!(summary["energy_distance"].as_f64().unwrap() >= 0.0);
    assert_eq!(summary["points_per_set"], 300);
}
