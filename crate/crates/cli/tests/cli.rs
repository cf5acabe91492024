use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_redmule-sim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn acceptance_run_reports_utilization() {
    let o = run(&["run", "--L", "12", "--H", "4", "--P", "3", "--kernel", "matmul", "--dims", "96x96x96", "--check"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let u = v["utilization"].as_f64().unwrap();
    assert!((0.990..=0.996).contains(&u), "{u}");
    assert_eq!(v["check_passed"], Value::Bool(true));
    assert_eq!(v["config"]["port_bits"], 288);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&run(&["run", "--dims", "0x1x1"])), 2);
    assert_eq!(code(&run(&["run", "--L", "12", "--H", "4", "--P", "0"])), 3);
    assert_eq!(code(&run(&["run", "--kernel", "bogus"])), 2);
    assert_eq!(code(&run(&["run", "--port-bits", "64"])), 2);
    assert_eq!(code(&run(&["run", "--mem", "stalls:/nonexistent/file"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"L": 8, "H": 2, "P": 2, "dims": "16x16x16", "kernel": "apsp", "seed": 5}"#).unwrap();
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--L", "6", "--check"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["config"]["rows"], 6);
    assert_eq!(v["config"]["cols"], 2);
    assert_eq!(v["dims"]["m"], 16);
    assert_eq!(v["kernel"], "all-pairs-shortest-paths");
    assert_eq!(v["seed"], 5);

    fs::write(&cfg, r#"{"L": 8, "colour": "blue"}"#).unwrap();
    assert_eq!(code(&run(&["run", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn traces_and_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let stalls = dir.path().join("stalls.txt");
    fs::write(&stalls, "# port busy\n30-34\n100\n").unwrap();
    let mem = format!("stalls:{}", stalls.display());
    let o = run(&["run", "--dims", "20x30x40", "--mem", &mem, "--trace", "--check", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let total = report["total_cycles"].as_u64().unwrap();
    let cycles = fs::read_to_string(dir.path().join("r.cycles.txt")).unwrap();
    assert_eq!(cycles.lines().count() as u64, total);
    assert!(cycles.lines().nth(30).unwrap().contains("STALL"));
    let access = fs::read_to_string(dir.path().join("r.access.csv")).unwrap();
    assert_eq!(access.lines().next(), Some("cycle,kind,elems,addr"));
    let beats: u64 = report["streams"].as_array().unwrap().iter().map(|s| s["beats"].as_u64().unwrap()).sum();
    assert_eq!(access.lines().count() as u64, beats + 1);
}

#[test]
fn output_is_deterministic() {
    let args = ["run", "--dims", "25x31x17", "--kernel", "mst", "--seed", "9", "--mem", "lat:2"];
    let (a, b) = (run(&args), run(&args));
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn shape_list_runs_every_shape() {
    let shapes = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/resnet8_like_shapes.txt");
    let o = run(&["run", "--shapes", shapes.to_str().unwrap(), "--check"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v.as_array().unwrap().len(), 10);
    assert!(v.as_array().unwrap().iter().all(|r| r["check_passed"] == Value::Bool(true)));
}

fn sweep_spec(dir: &Path, body: &str) -> String {
    let p = dir.join("sweep.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn fp8_sweep_doubles_throughput() {
    let dir = tempfile::tempdir().unwrap();
    let spec = sweep_spec(dir.path(), r#"{"L": [12], "H": [8, 4], "P": [3], "io": "fp8"}"#);
    let o = run(&["sweep", &spec]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows = csv_rows(&text);
    assert_eq!(rows.iter().map(|r| r[1].as_str()).collect::<Vec<_>>(), ["4", "8"]);
    let opc = |r: &Vec<String>| r[14].parse::<f64>().unwrap();
    let ratio = opc(&rows[1]) / opc(&rows[0]);
    assert!((1.94..=2.06).contains(&ratio), "{ratio}");
}

#[test]
fn sweep_rows_flag_infeasible_and_keep_high_utilization() {
    let dir = tempfile::tempdir().unwrap();
    let spec = sweep_spec(dir.path(), r#"{"L": [16, 12], "H": [4], "P": [3, 0]}"#);
    let o = bin().args(["sweep", &spec]).env("REDMULE_SIM_THREADS", "1").output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&String::from_utf8(o.stdout).unwrap());
    let keys: Vec<_> = rows.iter().map(|r| (r[0].clone(), r[2].clone(), r[10].clone())).collect();
    let s = |a: &str, b: &str, c: &str| (a.to_string(), b.to_string(), c.to_string());
    assert_eq!(keys, [s("12", "0", "false"), s("12", "3", "true"), s("16", "0", "false"), s("16", "3", "true")]);
    for r in rows.iter().filter(|r| r[10] == "true") {
        assert!(r[13].parse::<f64>().unwrap() >= 0.99, "{r:?}");
    }
    assert!(rows[0].last().unwrap().contains("bandwidth"));

    let bad = bin().args(["sweep", &spec]).env("REDMULE_SIM_THREADS", "many").output().unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn single_config_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = sweep_spec(
        dir.path(),
        r#"{"L": [6], "H": [3], "P": [2], "workload": {"dims": {"m": 20, "n": 21, "k": 22}, "kernel": "max-capacity-path", "seed": 4}}"#,
    );
    let sweep = run(&["sweep", &spec]);
    let single = run(&["run", "--L", "6", "--H", "3", "--P", "2", "--dims", "20x21x22", "--kernel", "max-capacity", "--seed", "4", "--format", "csv"]);
    assert_eq!(code(&sweep), 0, "{}", String::from_utf8_lossy(&sweep.stderr));
    assert_eq!(code(&single), 0, "{}", String::from_utf8_lossy(&single.stderr));
    assert_eq!(sweep.stdout, single.stdout);
}

#[test]
fn malformed_sweep_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["sweep", &sweep_spec(dir.path(), "{\"L\": [12], ")])), 2);
    assert_eq!(code(&run(&["sweep", &sweep_spec(dir.path(), r#"{"L": [12], "H": [4]}"#)])), 2);
    assert_eq!(code(&run(&["sweep", "/nonexistent/spec.json"])), 2);
}

#[test]
fn empty_sweep_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep", &sweep_spec(dir.path(), r#"{"L": [], "H": [4], "P": [3]}"#)]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 1);
}

#[test]
fn quick_verify_passes() {
    let o = run(&["verify", "--quick"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 7);
    assert!(!text.contains("FAIL"));
}
