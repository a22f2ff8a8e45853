use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_restartsc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn blob_config(dir: &Path, name: &str, extra: &str) -> String {
    let path = dir.join(name);
    fs::write(
        &path,
        format!(
            "algorithm = \"alg1\"\nseed = 3\n{extra}\n[dataset]\nkind = \"blobs\"\nc = 3\nper_cluster = 40\nseparation = 8.0\nseed = 1\n"
        ),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn cluster_writes_all_reports_with_provenance() {
    let dir = TempDir::new().unwrap();
    let cfg = blob_config(dir.path(), "run.toml", "init = \"kmeans\"");
    let out = run(&["cluster", "--config", &cfg, "--out", "o"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let o = dir.path().join("o");
    let part = fs::read_to_string(o.join("partition.csv")).unwrap();
    assert!(part.starts_with("sample_index,cluster\n"));
    assert_eq!(part.lines().count(), 121);

    let m = json(&o.join("metrics.json"));
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 16);
    assert!(m["metrics"]["acc"].as_f64().unwrap() >= 0.98);

    let history = fs::read_to_string(o.join("history.jsonl")).unwrap();
    assert!(!history.is_empty());
    for line in history.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["config_hash"], m["config_hash"]);
        assert_eq!(v["seed"], 3);
    }

    let echoed = fs::read_to_string(o.join("config.toml")).unwrap();
    assert!(echoed.contains(m["config_hash"].as_str().unwrap()));
}

#[test]
fn echoed_config_reproduces_the_partition() {
    let dir = TempDir::new().unwrap();
    let cfg = blob_config(dir.path(), "run.toml", "");
    assert!(
        run(&["cluster", "--config", &cfg, "--out", "a"], dir.path())
            .status
            .success()
    );
    let echoed = dir.path().join("a/config.toml");
    let echoed = echoed.to_str().unwrap();
    assert!(
        run(&["cluster", "--config", echoed, "--out", "b"], dir.path())
            .status
            .success()
    );
    let a = fs::read(dir.path().join("a/partition.csv")).unwrap();
    let b = fs::read(dir.path().join("b/partition.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        json(&dir.path().join("a/metrics.json"))["config_hash"],
        json(&dir.path().join("b/metrics.json"))["config_hash"]
    );
}

#[test]
fn flags_override_the_file() {
    let dir = TempDir::new().unwrap();
    let cfg = blob_config(dir.path(), "run.toml", "");
    let out = run(
        &[
            "cluster",
            "--config",
            &cfg,
            "--algorithm",
            "alg2",
            "--seed",
            "11",
            "--lambda",
            "0.5",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let echoed = fs::read_to_string(dir.path().join("o/config.toml")).unwrap();
    assert!(echoed.contains("algorithm = \"alg2\""));
    assert!(echoed.contains("lambda = 0.5"));
    assert_eq!(json(&dir.path().join("o/metrics.json"))["seed"], 11);
}

#[test]
fn missing_dataset_is_a_validation_error_naming_the_field() {
    let dir = TempDir::new().unwrap();
    let out = run(&["cluster", "--data", "nope.csv", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dataset"), "{err}");
    assert!(err.contains("nope.csv"), "{err}");

    let out = run(&["cluster", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset"));
}

#[test]
fn bad_config_values_exit_one() {
    let dir = TempDir::new().unwrap();
    let cfg = blob_config(dir.path(), "run.toml", "lambda = -1.0");
    let out = run(&["cluster", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));

    let cfg = blob_config(dir.path(), "typo.toml", "itermx = 3");
    let out = run(&["cluster", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("itermx"));
}

#[test]
fn unlabeled_csv_needs_a_cluster_count() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("x.csv"), "1,0\n0,1\n1,0.1\n0.1,1\n").unwrap();
    let out = run(&["cluster", "--data", "x.csv", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = run(
        &[
            "cluster", "--data", "x.csv", "-c", "2", "--tau", "1", "--out", "o",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(json(&dir.path().join("o/metrics.json"))["metrics"].is_null());
}

#[test]
fn bench_writes_one_row_per_config() {
    let dir = TempDir::new().unwrap();
    let a = blob_config(dir.path(), "kmeans_init.toml", "init = \"kmeans\"");
    let b = blob_config(dir.path(), "random_init.toml", "");
    let out = run(
        &["bench", &a, &b, "--runs", "2", "--out", "bench.csv"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("Average") && table.contains("CPU"));

    let mut rdr = csv::Reader::from_path(dir.path().join("bench.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        [
            "name",
            "config_hash",
            "seed",
            "runs",
            "failed",
            "ACC",
            "NMI",
            "Purity",
            "ARI",
            "precision",
            "Recall",
            "F-score",
            "Average",
            "CPU"
        ]
    );
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "kmeans_init");
    for r in &rows {
        assert!(r[13].parse::<f64>().unwrap() > 0.0);
        assert!(r[12].parse::<f64>().is_ok());
    }
}

#[test]
fn bench_records_a_broken_dataset_without_aborting() {
    let dir = TempDir::new().unwrap();
    let good = blob_config(dir.path(), "good.toml", "");
    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        "algorithm = \"kmeans\"\n[dataset]\nkind = \"csv\"\npath = \"missing.csv\"\n",
    )
    .unwrap();
    let out = run(
        &["bench", &good, bad.to_str().unwrap(), "--runs", "1"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(text.lines().nth(2).unwrap().starts_with("bad,"));
}

#[test]
fn verify_theory_default_suite_passes_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = run(
        &["verify-theory", "--instances", "5", "--out", "a.json"],
        dir.path(),
    );
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    let b = run(
        &["verify-theory", "--instances", "5", "--out", "b.json"],
        dir.path(),
    );
    assert_eq!(b.status.code(), Some(0));
    let ra = json(&dir.path().join("a.json"));
    let rb = json(&dir.path().join("b.json"));
    assert_eq!(ra, rb);
    let reports = ra.as_array().unwrap();
    assert_eq!(reports.len(), 5);
    for r in reports {
        assert!(r["bound_holds"].as_bool().unwrap());
        assert_eq!(r["seed"], 0);
        assert!(r["config_hash"].is_string());
    }
}

#[test]
fn make_blobs_round_trips_through_cluster() {
    let dir = TempDir::new().unwrap();
    let out = run(
        &[
            "make-blobs",
            "-c",
            "2",
            "--per-cluster",
            "30",
            "--separation",
            "9",
            "--out",
            "b.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(text.lines().count(), 61);
    let out = run(
        &[
            "cluster",
            "--data",
            "b.csv",
            "--label-column",
            "2",
            "--algorithm",
            "kmeans",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        json(&dir.path().join("o/metrics.json"))["metrics"]["acc"],
        1.0
    );

    let out = run(&["make-blobs", "-c", "1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
