use std::path::Path;
use std::process::{Command, Output};

fn osclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osclab")).args(args).env_remove("OSCLAB_SEED").output().expect("spawn osclab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn catalog_listing_and_usage_errors() {
    let o = osclab(&["catalog"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().count() > 6);
    let o = osclab(&["catalog", "--json", "d=2"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.as_array().unwrap().iter().all(|e| e["d"] == 2));
    assert_eq!(osclab(&["catalog", "size=3"]).status.code(), Some(2));
    assert_eq!(osclab(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn oscillation_prints_value_and_error() {
    let o = osclab(&["oscillation", "--function", "linear:d=1:v=1", "--a", "0.3", "--r", "1", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["value"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(v["std_error"], 0.0);
    let o =
        osclab(&["oscillation", "--function", "linear:d=3:v=1,2,2", "--a", "0,0,0", "--r", "1", "--samples", "20000"]);
    let text = stdout(&o);
    assert!(text.contains('±'), "{text}");
    assert_eq!(osclab(&["oscillation", "--function", "linear:d=1:v=1", "--a", "0", "--r", "0"]).status.code(), Some(2));
}

fn curve(dir: &Path, threads: &str, extra: &[&str]) -> (String, String) {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "--threads",
        threads,
        "curve",
        "--function",
        "plateau:d=2:a=1:ri=0.5:ro=1",
        "--p",
        "2",
        "--samples",
        "24",
        "--nodes",
        "128",
        "--kappa-min",
        "1e-3",
        "--kappa-max",
        "1",
        "--seed",
        "42",
        "--out-dir",
        out,
    ];
    args.extend_from_slice(extra);
    let o = osclab(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (
        std::fs::read_to_string(dir.join("curve.csv")).unwrap(),
        std::fs::read_to_string(dir.join("summary.json")).unwrap(),
    )
}

#[test]
fn curve_outputs_are_identical_across_thread_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (csv1, json1) = curve(a.path(), "1", &[]);
    let (csv4, json4) = curve(b.path(), "4", &[]);
    assert_eq!(csv1, csv4);
    let strip = |s: &str| {
        let mut v: serde_json::Value = serde_json::from_str(s).unwrap();
        v["config"]["csv_path"] = serde_json::Value::Null;
        v["config"]["summary_path"] = serde_json::Value::Null;
        v
    };
    assert_eq!(strip(&json1), strip(&json4));
    let v: serde_json::Value = serde_json::from_str(&json1).unwrap();
    for key in
        ["function_id", "d", "p", "domain", "sup_estimate", "limit_estimate", "reference_value", "seeds", "config"]
    {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["seeds"]["master"], 42);
    assert!(csv1.lines().next().unwrap().contains("schema"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_osclab"))
        .args(["curve", "--function", "linear:d=1:v=1", "--samples", "8", "--out-dir", out])
        .env("OSCLAB_SEED", "777")
        .output()
        .unwrap();
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["seeds"]["master"], 777);
}

#[test]
fn config_file_drives_a_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        format!(
            "function = \"linear:d=1:v=2\"\np = 3.0\nseed = 5\n[domain]\nlo = [0.0]\nhi = [1.0]\n[kappa]\nmin = 1e-4\nmax = 1e-1\n\
             [curve]\nsamples = 16\n[output]\ndir = \"{}\"\ncsv = \"lin.csv\"\n",
            dir.path().display()
        ),
    )
    .unwrap();
    let o = osclab(&["curve", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("lin.csv").exists());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    // c_{1,3} 2³ = 8 / 24
    let lim = v["limit_estimate"].as_f64().unwrap();
    assert!((lim - 1.0 / 3.0).abs() < 0.01 / 3.0, "{lim}");
}

#[test]
fn verify_exit_code_follows_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str]| {
        let mut args = vec!["verify", "--function", "linear:d=1:v=1", "--function", "plateau:d=1:a=1:ri=0.5:ro=1"];
        args.extend_from_slice(extra);
        let o = osclab(&args);
        let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        (o.status.code(), report)
    };
    let (code, report) = run(&[]);
    assert_eq!(code, Some(0), "{report}");
    assert_eq!(report["passed"], true);
    let (code, report) = run(&["--fault-inject", "c-d-prime"]);
    assert_eq!(code, Some(1));
    assert_eq!(report["passed"], false);

    let o = osclab(&["verify", "--function", "linear:d=1:v=1", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(dir.path().join("report.json").exists());
    assert_eq!(osclab(&["verify", "--config", "/no/such/file.toml"]).status.code(), Some(2));
}
