use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pwlab::grid::read_fields;
use pwlab_cli::artifact::read_binary;
use serde_json::{json, Value};
use tempfile::TempDir;

const GLANCING: &str = r#"{
  "system": { "kind": "explicit", "roots": ["norm_xi", "(1+sin(x1)^2)*norm_xi"], "b": { "re": [["0", "1"], ["1", "0"]] } }
}"#;

fn pw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pw")).args(args).output().expect("pw runs")
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    pw(&args)
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("error JSON on stderr")
}

#[test]
fn published_schema_is_current() {
    let o = pw(&["schema"]);
    assert!(o.status.success());
    let live: Value = serde_json::from_slice(&o.stdout).unwrap();
    let published = json_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/run_config.schema.json"));
    assert_eq!(live, published, "regenerate with `pw schema > crates/cli/schema/run_config.schema.json`");
}

#[test]
fn check_reports_order_two_on_the_glancing_pair() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "g.json", GLANCING);
    let o = run("check", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0));
    let doc = json_file(&tmp.path().join("out/check.json"));
    assert_eq!(doc["report"]["M"], json!(2));
    assert_eq!(doc["config"]["tolerances"]["bracket_tol"], json!(1e-8));
    assert_eq!(doc["system"]["groups"], json!([[0], [1]]));
}

#[test]
fn free_solve_matches_the_reference() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "free.json", r#"{ "system": { "kind": "explicit", "roots": ["norm_xi"] } }"#);
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json_file(&tmp.path().join("out/solve.json"));
    assert!(doc["solve"]["residual"].as_f64().unwrap() <= 1e-9);
    let bytes = fs::read(tmp.path().join("out/solution.bin")).unwrap();
    let (embedded, payload) = read_binary(&bytes).expect("config header");
    assert_eq!(embedded, doc["config"]);
    let u = read_fields(payload).unwrap();
    assert!((u.l2_norm() - doc["solve"]["u_norm"].as_f64().unwrap()).abs() <= 1e-12);
}

#[test]
fn lpscan_uses_the_two_dimensional_alpha() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "lp.json",
        r#"{ "dimension": 2, "grid": [64, 64], "system": { "kind": "explicit", "roots": ["norm_xi"] },
             "lpscan": { "p_values": [4.0], "bands": [3, 4], "N": 1, "nodes": 8 } }"#,
    );
    let o = run("lpscan", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json_file(&tmp.path().join("out/lpscan.json"));
    for row in doc["scan"]["rows"].as_array().unwrap() {
        assert_eq!(row["alpha"], json!(0.25));
    }
    let csv = fs::read_to_string(tmp.path().join("out/lpscan.csv")).unwrap();
    assert!(csv.starts_with("# config: {"));
}

#[test]
fn unknown_fields_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "g.json", GLANCING);
    let o = run("solve", &cfg, &tmp.path().join("out"), &["--set", "solve.bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_json(&o);
    assert_eq!(err["error"], json!("config"));
    assert!(err["message"].as_str().unwrap().contains("bogus"));
    assert!(!tmp.path().join("out/solve.json").exists());
}

#[test]
fn invalid_symbols_and_unsupported_commands_exit_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "g.json", GLANCING);
    let out = tmp.path().join("out");
    let bad_symbol = run("check", &cfg, &out, &["--set", r#"system.roots=["norm_xi", "reg(xi1)"]"#]);
    assert_eq!(bad_symbol.status.code(), Some(2));
    let wave = r#"system={"kind":"second_order","b":"0","c":"-xi1^2"}"#;
    assert_eq!(run("solve", &cfg, &out, &["--set", wave]).status.code(), Some(2));
    let o = run("check", &cfg, &out, &["--set", wave]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json_file(&out.join("check.json"))["report"]["M"], json!(0));
}

#[test]
fn computation_failures_exit_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "x.json", r#"{ "grid": [128], "system": { "kind": "explicit", "roots": ["(1+0.5*sin(x1))*norm_xi"] } }"#);
    let o = run("solve", &cfg, &tmp.path().join("out"), &["--set", "tolerances.cfl=3"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], json!("computation"));
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_from_the_embedded_config_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "g.json", GLANCING);
    let smoothing = ["--set", "grid=[64]", "--set", "smoothing.levels=[1,2]", "--set", "smoothing.bands=[2,3,4]", "--set", "smoothing.nodes=32"];
    for (cmd, extra) in [("smoothing", &smoothing[..]), ("solve", &["--set", "grid=[64]"][..]), ("flow", &[][..])] {
        let first = tmp.path().join(format!("{cmd}-1"));
        assert_eq!(run(cmd, &cfg, &first, extra).status.code(), Some(0));
        let report = fs::read_dir(&first).unwrap().map(|e| e.unwrap().path()).find(|p| p.extension().is_some_and(|x| x == "json")).unwrap();
        let embedded = json_file(&report)["config"].clone();
        let replay = config(tmp.path(), &format!("{cmd}-replay.json"), &embedded.to_string());
        let second = tmp.path().join(format!("{cmd}-2"));
        assert_eq!(run(cmd, &replay, &second, &[]).status.code(), Some(0));
        assert_eq!(artifacts(&first), artifacts(&second), "{cmd}");
    }
}

#[test]
fn seed_flag_changes_monte_carlo_output_only_through_the_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "g.json", GLANCING);
    let extra = ["--set", "grid=[64]", "--set", "smoothing.levels=[1]", "--set", "smoothing.bands=[2,3,4]", "--set", "smoothing.nodes=32"];
    let go = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        let mut args = extra.to_vec();
        args.extend(["--seed", seed]);
        assert_eq!(run("smoothing", &cfg, &out, &args).status.code(), Some(0));
        json_file(&out.join("smoothing.json"))
    };
    let (a, b) = (go("a", "1"), go("b", "2"));
    assert_eq!(a["config"]["seed"], json!(1));
    assert_ne!(a["tables"], b["tables"]);
    assert_eq!(go("c", "1")["tables"], a["tables"]);
}

#[test]
fn artifacts_leave_no_temporary_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "g.json", GLANCING);
    let out = tmp.path().join("out");
    assert_eq!(run("wavefront", &cfg, &out, &[]).status.code(), Some(0));
    let names: Vec<String> = artifacts(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, vec!["wavefront.json".to_string()]);
}

#[test]
fn companion_generator_solves_a_double_root() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(
        tmp.path(),
        "c.json",
        r#"{ "system": { "kind": "companion", "m": 2, "roots": ["norm_xi", "norm_xi"], "factorized_cauchy": true },
             "solve": { "N": 4, "nodes": 32, "initial": [
                 { "component": 0, "center": [2.0], "width": 0.4, "freq": [3.0] },
                 { "component": 1, "center": [4.0], "width": 0.3, "freq": [-2.0], "amplitude": [0.0, 1.0] } ] } }"#,
    );
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json_file(&tmp.path().join("out/solve.json"));
    assert_eq!(doc["system"]["size"], json!(3));
    assert_eq!(doc["system"]["groups"], json!([[0, 1, 2]]));
    assert!(doc["solve"]["residual"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn xi_default_ladder_supports_the_decay_fit() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "g.json", GLANCING);
    let o = run("xi", &cfg, &tmp.path().join("out"), &["--set", "xi.samples=20000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json_file(&tmp.path().join("out/xi.json"));
    assert!(doc["report"]["exponent"].as_f64().is_some(), "{doc}");
}
