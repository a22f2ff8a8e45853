use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use restartsc::dataset;
use restartsc::runner::{self, BenchRow, RunConfig};
use restartsc::theory::{self, SuiteConfig};
use restartsc::MetricsReport;

use crate::args::{BenchArgs, BlobArgs, ClusterArgs, TheoryArgs};
use crate::config::{self, Provenance};
use crate::failure::Failure;

const TIMING_NOTE: &str =
    "seconds cover initialization and clustering; loading and preprocessing excluded";

type Outcome = Result<(), Failure>;

fn with_provenance(mut v: Value, prov: &Provenance) -> Value {
    if let Value::Object(map) = &mut v {
        map.insert("config_hash".into(), json!(prov.config_hash));
        map.insert("seed".into(), json!(prov.seed));
    }
    v
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::write(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::write(path, e))
}

fn write_json(path: &Path, v: &impl Serialize) -> Outcome {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, v).map_err(|e| Failure::Runtime(e.to_string()))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::write(path, e))
}

pub fn cluster(args: &ClusterArgs) -> Outcome {
    let cfg = config::load_run_config(args.config.as_deref(), &args.overrides)?;
    let prov = Provenance::of(&cfg);
    log::info!("config {} seed {}", prov.config_hash, prov.seed);

    let raw = runner::load_dataset(&cfg.dataset).map_err(|e| Failure::from_core("dataset", e))?;
    let ds = runner::prepare(&raw, cfg.zscore, cfg.normalize)
        .map_err(|e| Failure::from_core("dataset", e))?;
    let out = runner::run_prepared(&cfg, &ds).map_err(|e| Failure::from_core("run", e))?;

    fs::create_dir_all(&args.out).map_err(|e| Failure::write(&args.out, e))?;

    let path = args.out.join("partition.csv");
    let mut w = create(&path)?;
    runner::write_partition(&out.partition, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::write(&path, e))?;

    let summary = with_provenance(
        json!({
            "dataset": ds.name,
            "n": ds.n(),
            "c": out.partition.c(),
            "algorithm": cfg.algorithm,
            "cycles": out.cycles,
            "converged": out.converged,
            "tau": out.tau,
            "seconds": out.seconds,
            "timing": TIMING_NOTE,
            "metrics": out.metrics,
        }),
        &prov,
    );
    write_json(&args.out.join("metrics.json"), &summary)?;

    let path = args.out.join("history.jsonl");
    let mut w = create(&path)?;
    for rec in &out.history {
        let line = with_provenance(rec.clone(), &prov);
        writeln!(w, "{line}").map_err(|e| Failure::write(&path, e))?;
    }
    w.flush().map_err(|e| Failure::write(&path, e))?;

    let path = args.out.join("config.toml");
    let body =
        toml::to_string_pretty(&cfg).map_err(|e| Failure::Runtime(format!("config echo: {e}")))?;
    fs::write(
        &path,
        format!(
            "# config_hash = \"{}\"\n# seed = {}\n{body}",
            prov.config_hash, prov.seed
        ),
    )
    .map_err(|e| Failure::write(&path, e))?;

    println!(
        "{}: {} samples, {} clusters, {} cycle(s){}, {:.3}s",
        ds.name,
        ds.n(),
        out.partition.c(),
        out.cycles,
        if out.converged { ", converged" } else { "" },
        out.seconds
    );
    if let Some(m) = &out.metrics {
        println!(
            "ACC {:.4}  NMI {:.4}  ARI {:.4}  Average {:.4}",
            m.acc, m.nmi, m.ari, m.average
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

struct BenchLine {
    prov: Provenance,
    row: BenchRow,
}

pub fn bench(args: &BenchArgs) -> Outcome {
    if args.runs == 0 {
        return Err(Failure::Validation("runs: must be at least 1".into()));
    }
    let mut configs: Vec<(String, RunConfig)> = Vec::new();
    for path in &args.configs {
        let mut cfg: RunConfig = config::read_toml(path)?;
        config::apply(&mut cfg, &args.overrides)?;
        cfg.validate()
            .map_err(|e| Failure::from_core(&format!("config {}", path.display()), e))?;
        let name = path
            .file_stem()
            .map_or("config".into(), |s| s.to_string_lossy().into_owned());
        configs.push((name, cfg));
    }

    let mut lines = Vec::new();
    for (name, cfg) in &configs {
        let prov = Provenance::of(cfg);
        let row = runner::bench(name, cfg, args.runs).unwrap_or_else(|e| BenchRow {
            name: name.clone(),
            runs: args.runs,
            failures: vec![format!("dataset: {e}")],
            mean: None,
            mean_seconds: None,
        });
        for f in &row.failures {
            log::warn!("{name}: {f}");
        }
        lines.push(BenchLine { prov, row });
    }

    write_bench_csv(&args.out, &lines)?;
    print!("{}", bench_table(&lines));
    println!("wrote {}", args.out.display());
    if lines.iter().all(|l| l.row.mean_seconds.is_none()) {
        return Err(Failure::Runtime("every benchmark run failed".into()));
    }
    Ok(())
}

fn write_bench_csv(path: &Path, lines: &[BenchLine]) -> Outcome {
    let w = create(path)?;
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["name", "config_hash", "seed", "runs", "failed"];
    header.extend(MetricsReport::COLUMNS);
    header.push("CPU");
    let err = |e: csv::Error| Failure::Runtime(format!("cannot write {}: {e}", path.display()));
    csv.write_record(&header).map_err(err)?;
    for l in lines {
        let mut rec = vec![
            l.row.name.clone(),
            l.prov.config_hash.clone(),
            l.prov.seed.to_string(),
            l.row.runs.to_string(),
            l.row.failures.len().to_string(),
        ];
        match &l.row.mean {
            Some(m) => rec.extend(m.as_array().iter().map(|v| format!("{v:.4}"))),
            None => rec.extend(MetricsReport::COLUMNS.iter().map(|_| String::new())),
        }
        rec.push(
            l.row
                .mean_seconds
                .map_or(String::new(), |s| format!("{s:.4}")),
        );
        csv.write_record(&rec).map_err(err)?;
    }
    csv.flush().map_err(|e| Failure::write(path, e))
}

fn bench_table(lines: &[BenchLine]) -> String {
    let width = lines
        .iter()
        .map(|l| l.row.name.len())
        .max()
        .unwrap_or(4)
        .max(4);
    let mut s = format!("{:<width$}", "name");
    for c in MetricsReport::COLUMNS.iter().chain(["CPU"].iter()) {
        s.push_str(&format!(" {c:>9}"));
    }
    s.push('\n');
    for l in lines {
        s.push_str(&format!("{:<width$}", l.row.name));
        match &l.row.mean {
            Some(m) => m
                .as_array()
                .iter()
                .for_each(|v| s.push_str(&format!(" {v:>9.4}"))),
            None => MetricsReport::COLUMNS
                .iter()
                .for_each(|_| s.push_str(&format!(" {:>9}", "-"))),
        }
        match l.row.mean_seconds {
            Some(t) => s.push_str(&format!(" {t:>9.4}")),
            None => s.push_str(&format!(" {:>9}", "-")),
        }
        if !l.row.failures.is_empty() {
            s.push_str(&format!("  ({} failed)", l.row.failures.len()));
        }
        s.push('\n');
    }
    s
}

pub fn verify_theory(args: &TheoryArgs) -> Outcome {
    let mut cfg: SuiteConfig = match &args.config {
        Some(p) => config::read_toml(p)?,
        None => SuiteConfig::default(),
    };
    if let Some(v) = args.instances {
        cfg.instances = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.tau {
        cfg.tau = v;
    }
    if let Some(v) = args.rank {
        cfg.rank = v;
    }
    if !(cfg.tau > 0.0)
        || cfg.rank == 0
        || !(cfg.landmark_fraction > 0.0 && cfg.landmark_fraction <= 1.0)
    {
        return Err(Failure::Validation(
            "suite: tau and rank must be positive and landmark_fraction in (0, 1]".into(),
        ));
    }
    let prov = Provenance {
        config_hash: config::hash(&cfg),
        seed: cfg.seed,
    };

    let (reports, skipped) = theory::run_suite(&cfg).map_err(|e| Failure::from_core("suite", e))?;
    let json: Vec<Value> = reports
        .iter()
        .map(|r| with_provenance(serde_json::to_value(r).expect("reports serialize"), &prov))
        .collect();
    write_json(&args.out, &json)?;

    let failed: Vec<usize> = reports
        .iter()
        .filter(|r| !r.passes())
        .map(|r| r.instance)
        .collect();
    let gap_checked = reports.iter().filter(|r| r.gap_condition_met).count();
    println!(
        "theory: {} instance(s) checked, {} skipped (hypothesis unmet), {} with the eigengap condition",
        reports.len(),
        skipped,
        gap_checked
    );
    if reports.len() < cfg.instances {
        log::warn!(
            "only {} of {} instances met the hypothesis in {} attempts",
            reports.len(),
            cfg.instances,
            cfg.max_attempts
        );
    }
    println!("wrote {}", args.out.display());
    if failed.is_empty() {
        println!("all applicable bounds hold");
        Ok(())
    } else {
        Err(Failure::Theory(format!(
            "bound violated on instance(s) {failed:?}"
        )))
    }
}

pub fn make_blobs(args: &BlobArgs) -> Outcome {
    let ds = dataset::make_blobs(args.c, args.per_cluster, args.d, args.separation, args.seed)
        .map_err(|e| Failure::from_core("blobs", e))?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::write(dir, e))?;
    }
    dataset::write_csv(&ds, &args.out).map_err(|e| Failure::from_core("output", e))?;
    println!("wrote {} samples to {}", ds.n(), args.out.display());
    Ok(())
}
