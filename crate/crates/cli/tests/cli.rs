use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sdsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdsynth"))
        .args(args)
        .env("SDSS_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const LINEAR_CONFIG: &str = r#"
[plant]
name = "linear-test"

[synthesis]
mode = "general"
max_degree = 2
boxes = [{ lo = [0.0, -1.0, -20.0, -1.0, -20.0], hi = [20.0, 1.0, 0.0, 1.0, 20.0] }]
threshold = 0.9
xi = 0.05
confidence = 0.99
alpha = 0.5
verify_substeps = 8
seed = 5

[synthesis.ce]
max_iterations = 3
max_samples = 30
"#;

#[test]
fn synth_writes_report_and_history_that_eval_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lt.toml");
    fs::write(&cfg, LINEAR_CONFIG).unwrap();
    let out = dir.path().join("out");
    let o = sdsynth(&[
        "synth",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let report = read_json(&out.join("report.json"));
    assert_eq!(report["schema"], "v1");
    assert_eq!(report["success"], true);
    for key in [
        "params",
        "interval",
        "degree",
        "history",
        "tool",
        "config",
        "master_seed",
    ] {
        assert!(!report[key].is_null(), "missing {key}");
    }
    assert_eq!(report["interval_source"], "verify");
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(
        history.starts_with("degree,iter,m,a_opt,b_opt,a_ver,b_ver,candidates,unstable,seconds\n")
    );
    assert_eq!(
        history.lines().count(),
        report["history"].as_array().unwrap().len() + 1
    );

    let seed = report["verify_seed"].as_u64().unwrap().to_string();
    let eval_path = dir.path().join("eval.json");
    let report_path = out.join("report.json");
    let o = sdsynth(&[
        "eval",
        cfg.to_str().unwrap(),
        "--controller",
        report_path.to_str().unwrap(),
        "--seed",
        &seed,
        "--out",
        eval_path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eval = read_json(&eval_path);
    assert_eq!(eval["interval"], report["interval"]);
}

#[test]
fn eval_reproduces_powertrain_gains() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eval.json");
    let o = sdsynth(&[
        "eval",
        "powertrain",
        "--kp",
        "0.2082",
        "--ki",
        "0.0759",
        "--kd",
        "-0.0049551",
        "--samples",
        "500",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eval = read_json(&path);
    assert!(eval["interval"]["lo"].as_f64().unwrap() >= 0.90, "{eval}");
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let o = sdsynth(&[
            "simulate",
            "ap",
            "--kp=-5.716e-3",
            "--ki=-1.88e-7",
            "--kd=-0.2002",
            "--seed",
            "7",
            "--substeps",
            "4",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(path).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let text = String::from_utf8(a).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("t,x1,") && header.ends_with("u1,y1"));
    assert_eq!(text.lines().count(), 1 + 288 * 4 + 1);
}

#[test]
fn stability_reports_spectrum() {
    let o = sdsynth(&[
        "stability",
        "quad-tank",
        "--controller",
        r#"{"channels": [{"degree": 1, "a": [-1.0], "b": [7.788, -6.555]}, {"degree": 1, "a": [-1.0], "b": [11.416, -10.057]}]}"#,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "accept");
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 8);

    let o = sdsynth(&["stability", "linear-test", "--kp=-1"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "reject");
}

#[test]
fn bounds_at_time_zero() {
    let o = sdsynth(&[
        "bounds",
        "lt",
        "--params",
        "12,-0.4,-9",
        "--gamma",
        "0.1",
        "--t",
        "0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["bounds"]["h1"], 1.0);
    assert_eq!(v["bounds"]["h2"], 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[plant]\nname = \"linear-test\"\nmystery = 1\n").unwrap();
    assert_eq!(
        sdsynth(&["eval", bad.to_str().unwrap(), "--kp", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        sdsynth(&["eval", "no-such-plant", "--kp", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(sdsynth(&["eval", "lt"]).status.code(), Some(2));
    assert_eq!(sdsynth(&["synth", "lt"]).status.code(), Some(2));
    assert_eq!(sdsynth(&["frobnicate"]).status.code(), Some(2));
    let o = sdsynth(&[
        "simulate",
        "lt",
        "--kp",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}
