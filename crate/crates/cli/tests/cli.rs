//! End-to-end tests of the `memexplorer` binary: exit statuses, output
//! files, column order and reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_memexplorer");

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(rel)
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("MEMEXPLORER_CATALOG")
        .output()
        .expect("binary runs")
}

fn status(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn workload() -> String {
    data("workloads/osworld_l.json").display().to_string()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn catalog_list_shows_every_technology() {
    let dir = TempDir::new().unwrap();
    let out = run(&["catalog", "list"], dir.path());
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["SRAM2D", "SRAM3D", "HBM3E", "HBM4", "HBF", "LPDDR5X", "LPDDR6", "GDDR6", "GDDR7"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
}

#[test]
fn catalog_validate_accepts_the_bundled_file_and_rejects_garbage() {
    let dir = TempDir::new().unwrap();
    let good = data("catalog.json").display().to_string();
    assert_eq!(status(&run(&["catalog", "validate", &good], dir.path())), 0);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "[{\"name\": \"X\"}]").unwrap();
    assert_eq!(status(&run(&["catalog", "validate", bad.to_str().unwrap()], dir.path())), 2);
}

#[test]
fn eval_writes_a_result_document() {
    let dir = TempDir::new().unwrap();
    let design = data("designs/p1.json").display().to_string();
    let w = workload();
    for stage in ["prefill", "decode", "combined", "breakdown"] {
        let out = run(&["eval", "--design", &design, "--workload", &w, "--stage", stage], dir.path());
        assert_eq!(status(&out), 0, "{stage}: {}", stderr(&out));
        let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
        assert_eq!(doc["stage"], stage);
        assert!(doc["tdp_w"].as_f64().unwrap() > 0.0);
        if stage != "breakdown" {
            assert!(doc["tokens_per_j"].as_f64().unwrap() > 0.0, "{doc}");
        }
    }
}

#[test]
fn eval_rejects_a_shoreline_violation_with_status_3() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("wide.json");
    let design = r#"{
        "compute": { "pe_rows": 128, "pe_cols": 128, "vlen": 2048 },
        "hierarchy": [{ "tech": "SRAM2D", "units": 1 }, { "tech": "HBM4", "units": 6 }],
        "precision": { "w": 8, "a": 8, "kv": 8 },
        "strategy": { "dataflow": "WS", "storage_priority": "Equal", "bw_priority": "Equal" }
    }"#;
    fs::write(&path, design).unwrap();
    let out = run(&["eval", "--design", path.to_str().unwrap(), "--workload", &workload()], dir.path());
    assert_eq!(status(&out), 3);
    assert!(stderr(&out).contains("shoreline"), "{}", stderr(&out));
    assert!(!dir.path().join("result.json").exists());
}

#[test]
fn input_problems_exit_with_status_2() {
    let dir = TempDir::new().unwrap();
    let design = data("designs/p1.json").display().to_string();
    let missing = run(&["eval", "--design", "missing.json", "--workload", &workload()], dir.path());
    assert_eq!(status(&missing), 2);
    assert!(stderr(&missing).contains("missing.json"));

    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{ not json").unwrap();
    let out = run(&["eval", "--design", &design, "--workload", broken.to_str().unwrap()], dir.path());
    assert_eq!(status(&out), 2);

    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, fs::read_to_string(&design).unwrap().replace("HBM4", "HBM9")).unwrap();
    let out = run(&["eval", "--design", unknown.to_str().unwrap(), "--workload", &workload()], dir.path());
    assert_eq!(status(&out), 2);
    assert!(stderr(&out).contains("HBM9"), "{}", stderr(&out));
}

#[test]
fn catalog_override_is_used_and_recorded() {
    let dir = TempDir::new().unwrap();
    let design = data("designs/p1.json").display().to_string();
    let w = workload();
    let eval = |catalog: Option<&Path>| {
        let mut cmd = Command::new(BIN);
        cmd.args(["eval", "--design", &design, "--workload", &w, "--stage", "decode"])
            .current_dir(dir.path())
            .env_remove("MEMEXPLORER_CATALOG");
        if let Some(c) = catalog {
            cmd.env("MEMEXPLORER_CATALOG", c);
        }
        let out = cmd.output().unwrap();
        assert_eq!(status(&out), 0, "{}", stderr(&out));
        let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
        doc["power"]["avg_power"].as_f64().unwrap()
    };
    let base = eval(None);

    // Doubling every access energy must raise the average power.
    let mut records: Vec<Value> = serde_json::from_str(&fs::read_to_string(data("catalog.json")).unwrap()).unwrap();
    for r in &mut records {
        for key in ["e_read", "e_write"] {
            r[key] = Value::from(r[key].as_f64().unwrap() * 2.0);
        }
    }
    let custom = dir.path().join("catalog.json");
    fs::write(&custom, serde_json::to_string(&records).unwrap()).unwrap();
    assert!(eval(Some(&custom)) > base);

    let out = Command::new(BIN)
        .args(["catalog", "list"])
        .env("MEMEXPLORER_CATALOG", dir.path().join("nope.json"))
        .output()
        .unwrap();
    assert_eq!(status(&out), 2);
}

#[test]
fn validate_reports_agreement_with_the_simulator() {
    let dir = TempDir::new().unwrap();
    let out = run(&["validate", "--cases", "10", "--out", "oracle.json"], dir.path());
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("oracle.json")).unwrap()).unwrap();
    assert_eq!(doc["n_cases"], 10);
    assert!(doc["max_rel_err"].as_f64().unwrap() <= 0.02);
}

fn explore(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let w = workload();
    let mut args = vec!["explore", "--workload", &w, "--out", out];
    args.extend_from_slice(extra);
    run(&args, dir)
}

const SMALL: &[&str] = &["--stage", "decode", "--method", "all", "--budget", "6", "--n-init", "4", "--seeds", "2"];

#[test]
fn explore_writes_the_run_directory_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    for name in ["a", "b"] {
        let out = explore(dir.path(), name, SMALL);
        assert_eq!(status(&out), 0, "{}", stderr(&out));
    }
    let a = dir.path().join("a");
    let b = dir.path().join("b");

    let mut csvs: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    csvs.sort();
    let mut expected = vec!["evaluations.csv".to_string(), "frontier.csv".into(), "hv_summary.csv".into()];
    for m in ["ehvi", "nsga2", "random"] {
        for s in 0..2 {
            expected.push(format!("history_{m}_{s}.csv"));
        }
    }
    expected.sort();
    assert_eq!(csvs, expected);
    for name in &csvs {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name} differs between identical runs");
        assert!(!x.contains(&b'\r'), "{name} has CR line endings");
    }

    // The manifests differ only in their timestamps.
    let ma: Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let mb: Value = serde_json::from_str(&fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["inputs"]["workload"]["sha256"], mb["inputs"]["workload"]["sha256"]);
    assert_eq!(ma["seeds"], serde_json::json!([0, 1]));

    assert_eq!(header(&a.join("history_ehvi_0.csv")), "step,hv,throughput_tps,power_w,design_id");
    assert_eq!(header(&a.join("hv_summary.csv")), "method,step,hv_mean,hv_std,n_seeds");
    assert_eq!(
        header(&a.join("frontier.csv")),
        "design_id,pe_array,vlen,on_chip,off_chip,precision,storage_priority,dataflow,bw_priority,\
         avg_power_w,tdp_w,batch,throughput_tps,tokens_per_j"
    );

    // Every design in the histories has a design file.
    let history = fs::read_to_string(a.join("history_nsga2_1.csv")).unwrap();
    for line in history.lines().skip(1) {
        let id = line.rsplit(',').next().unwrap();
        assert!(a.join("designs").join(format!("{id}.json")).exists(), "{id}");
    }
}

#[test]
fn a_budget_equal_to_the_prefix_evaluates_only_the_prefix() {
    let dir = TempDir::new().unwrap();
    let args = ["--stage", "prefill", "--method", "all", "--budget", "5", "--n-init", "5", "--seeds", "1"];
    let out = explore(dir.path(), "run", &args);
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    let read = |m: &str| fs::read_to_string(dir.path().join("run").join(format!("history_{m}_0.csv"))).unwrap();
    let ehvi = read("ehvi");
    assert_eq!(ehvi.lines().count(), 6);
    assert_eq!(ehvi, read("nsga2"));
    assert_eq!(ehvi, read("random"));
}

#[test]
fn explore_rejects_bad_options() {
    let dir = TempDir::new().unwrap();
    let out = explore(dir.path(), "run", &["--stage", "decode", "--budget", "3", "--n-init", "5"]);
    assert_eq!(status(&out), 2, "{}", stderr(&out));
    let out = explore(dir.path(), "run", &["--stage", "decode", "--seeds", "0"]);
    assert_eq!(status(&out), 2, "{}", stderr(&out));
    let space = dir.path().join("space.json");
    fs::write(&space, r#"{"weight_bits": []}"#).unwrap();
    let out = explore(dir.path(), "run", &["--stage", "decode", "--space", space.to_str().unwrap()]);
    assert_eq!(status(&out), 2, "{}", stderr(&out));
}

#[test]
fn report_rebuilds_the_frontier_and_point_table() {
    let dir = TempDir::new().unwrap();
    let out = explore(dir.path(), "run", SMALL);
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    let run_dir = dir.path().join("run");
    let frontier = fs::read(run_dir.join("frontier.csv")).unwrap();

    let out = run(&["report", "--run", "run", "--out", "again"], dir.path());
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    let again = dir.path().join("again");
    assert_eq!(fs::read(again.join("frontier.csv")).unwrap(), frontier);
    assert_eq!(
        header(&again.join("pareto_points.csv")),
        "design_id,throughput_tps,power_w,tokens_per_j,tdp_w,feasible,pareto"
    );

    // The front of the point table is mutually non-dominated and every
    // other feasible point is dominated by one of its members.
    let table = fs::read_to_string(again.join("pareto_points.csv")).unwrap();
    let rows: Vec<(f64, f64, bool, bool)> = table
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap(), f[5] == "true", f[6] == "true")
        })
        .collect();
    let dominated = |p: &(f64, f64, bool, bool)| {
        rows.iter()
            .any(|q| q.2 && q.0 >= p.0 && q.1 <= p.1 && (q.0 > p.0 || q.1 < p.1))
    };
    assert!(rows.iter().any(|r| r.3));
    for r in &rows {
        if r.2 {
            assert_eq!(r.3, !dominated(r), "{r:?}");
        } else {
            assert!(!r.3);
        }
    }

    let out = run(&["report", "--run", "run", "--method", "random", "--top", "2", "--out", "random"], dir.path());
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    let lines = fs::read_to_string(dir.path().join("random/frontier.csv")).unwrap().lines().count();
    assert!((2..=3).contains(&lines), "{lines}");
}

#[test]
fn report_on_an_empty_archive_exits_with_status_4() {
    let dir = TempDir::new().unwrap();
    let out = explore(dir.path(), "run", &["--stage", "decode", "--method", "random", "--budget", "3", "--n-init", "3", "--seeds", "1"]);
    assert_eq!(status(&out), 0, "{}", stderr(&out));
    let run_dir = dir.path().join("run");
    let frontier = fs::read(run_dir.join("frontier.csv")).unwrap();

    // No design fits a 1 W budget; the existing files are left alone.
    let out = run(&["report", "--run", "run", "--tdp", "1"], dir.path());
    assert_eq!(status(&out), 4);
    assert_eq!(fs::read(run_dir.join("frontier.csv")).unwrap(), frontier);

    let evals = run_dir.join("evaluations.csv");
    let head = header(&evals);
    fs::write(&evals, format!("{head}\n")).unwrap();
    let out = run(&["report", "--run", "run"], dir.path());
    assert_eq!(status(&out), 4, "{}", stderr(&out));

    let out = run(&["report", "--run", "nowhere"], dir.path());
    assert_eq!(status(&out), 2);
}
