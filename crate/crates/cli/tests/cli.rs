use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use hrdepth::analysis::ExperimentReport;
use hrdepth::depth::empirical_depth;
use hrdepth::models::simulate;
use hrdepth::{GridFunction, PathEnsemble64, ProcessModel};

fn hrdepth(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrdepth"))
        .current_dir(dir)
        .env_remove("HRDEPTH_JOBS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn simulate_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--model", "bm", "--n", "4", "--m", "8", "--seed", "7", "--out"];
    json(&hrdepth(dir.path(), &[&args[..], &["a.csv"]].concat()));
    json(&hrdepth(dir.path(), &[&args[..], &["b.csv", "--jobs", "1"]].concat()));
    let c = Command::new(env!("CARGO_BIN_EXE_hrdepth"))
        .current_dir(dir.path())
        .env("HRDEPTH_JOBS", "3")
        .args([&args[..], &["c.csv"]].concat())
        .output()
        .unwrap();
    assert!(c.status.success());
    let read = |f: &str| fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a.csv"), read("c.csv"));
    assert_eq!(read("a.json"), read("b.json"));
}

#[test]
fn constant_paths_fixture_has_depth_one_third() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.csv"), "0,0.5,1\n1,1,1\n2,2,2\n-1,-1,-1\n").unwrap();
    fs::write(dir.path().join("h.csv"), "t,value\n0,0\n0.5,0\n1,0\n").unwrap();
    let v = json(&hrdepth(dir.path(), &["depth", "--paths", "p.csv", "--query", "h.csv"]));
    assert_eq!(v["result"]["value"].as_f64(), Some(1.0 / 3.0));
    assert_eq!(v["result"]["count_above"].as_u64(), Some(2));
    assert!(v["config_hash"].as_str().is_some_and(|h| h.len() == 64));
    assert!(v.get("seed").is_some());
}

#[test]
fn sparre_check_prints_the_binomial_value() {
    let out = hrdepth(Path::new("."), &["check", "sparre", "--m", "10"]);
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert!(text.contains("0.176197"), "{text}");
    let value = json(&out)["result"]["value"].as_f64().unwrap();
    assert!((value - 184_756.0 / 1_048_576.0).abs() < 1e-14);
}

#[test]
fn csv_round_trip_matches_in_memory_depth() {
    let dir = tempfile::tempdir().unwrap();
    json(&hrdepth(
        dir.path(),
        &[
            "simulate", "--model", "bm", "--smooth", "gaussian", "--n", "500", "--m", "16", "--seed", "3", "--out",
            "p.csv",
        ],
    ));
    let v = json(&hrdepth(dir.path(), &["depth", "--paths", "p.csv", "--level", "-0.2"]));
    let model: ProcessModel = serde_json::from_value(v["result"]["model"].clone()).unwrap();
    let ens: PathEnsemble64 = simulate(&model, 500, 16, 3).unwrap();
    let d = empirical_depth(&ens, &GridFunction::constant(ens.grid().clone(), -0.2)).unwrap();
    assert_eq!(v["result"]["value"].as_f64(), Some(d.value));
    assert_eq!(v["seed"].as_u64(), Some(3));
}

#[test]
fn smooth_then_depth_of_zero_is_a_half_for_constant_paths() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..4000).map(|_| "0,0,0\n").collect();
    fs::write(dir.path().join("z.csv"), format!("0,0.5,1\n{rows}")).unwrap();
    json(&hrdepth(
        dir.path(),
        &["smooth", "--paths", "z.csv", "--family", "gaussian", "--seed", "1", "--out", "s.csv"],
    ));
    let again = hrdepth(dir.path(), &["smooth", "--paths", "s.csv", "--family", "gaussian", "--out", "t.csv"]);
    assert_eq!(again.status.code(), Some(2));
    let v = json(&hrdepth(dir.path(), &["depth", "--paths", "s.csv", "--level", "0"]));
    let above = v["result"]["count_above"].as_f64().unwrap() / 4000.0;
    assert!((above - 0.5).abs() < 0.03, "{above}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(hrdepth(p, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(hrdepth(p, &["simulate", "--model", "bm", "--n", "4"]).status.code(), Some(2));
    let bad_alpha =
        hrdepth(p, &["simulate", "--model", "stable", "--alpha", "3", "--n", "4", "--m", "4", "--out", "x.csv"]);
    assert_eq!(bad_alpha.status.code(), Some(2));
    let huge = hrdepth(p, &["simulate", "--model", "bm", "--n", "100000000", "--m", "1000", "--out", "x.csv"]);
    assert_eq!(huge.status.code(), Some(3), "{}", String::from_utf8_lossy(&huge.stderr));
    fs::write(
        p.join("bad.json"),
        r#"{"model":{"process":{"kind":"brownian_motion"}},"m_schedule":[4],"n":10,"seed":1,"colour":1}"#,
    )
    .unwrap();
    let unknown = hrdepth(p, &["experiment", "zero-trend", "--config", "bad.json"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("colour"));
    assert_eq!(hrdepth(p, &["depth", "--paths", "missing.csv", "--level", "0"]).status.code(), Some(2));
}

#[test]
fn exact_product_of_normals() {
    let dir = tempfile::tempdir().unwrap();
    let marginals = vec![serde_json::json!({"kind": "gaussian", "mu": 0.0, "sigma": 1.0}); 10];
    let cfg = serde_json::json!({"marginals": marginals, "a": vec![0.0; 10], "tail": {"kind": "constant", "q": 1.0, "below_share": 0.5}});
    fs::write(dir.path().join("e.json"), cfg.to_string()).unwrap();
    let v = json(&hrdepth(dir.path(), &["exact", "--config", "e.json"]));
    let d = v["result"]["depth"].as_f64().unwrap();
    assert!((d - 2f64.powi(-10)).abs() < 1e-15);
    assert_eq!(v["result"]["verdict"]["verdict"], "zero_by_divergence");
}

#[test]
fn embedded_config_reruns_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let cfg = serde_json::json!({
        "model": {"process": {"kind": "brownian_motion"}, "smoothing": {"family": "gaussian", "scale": 1.0}},
        "family": {"kind": "constants", "radius": 1.0},
        "eps": 0.25,
        "m": 8,
        "n_schedule": [50, 200],
        "reps": 5,
        "seed": 9
    });
    fs::write(p.join("c.json"), cfg.to_string()).unwrap();
    let pointer =
        json(&hrdepth(p, &["experiment", "consistency", "--config", "c.json", "--out", "r1.json", "--plot", "r1.svg"]));
    let first: ExperimentReport = serde_json::from_slice(&fs::read(p.join("r1.json")).unwrap()).unwrap();
    assert_eq!(pointer["config_hash"].as_str(), Some(first.config_hash.as_str()));
    assert!(fs::read_to_string(p.join("r1.svg")).unwrap().starts_with("<svg"));

    fs::write(p.join("embedded.json"), serde_json::to_string(&first.config).unwrap()).unwrap();
    json(&hrdepth(p, &["experiment", "consistency", "--config", "embedded.json", "--out", "r2.json"]));
    let second: ExperimentReport = serde_json::from_slice(&fs::read(p.join("r2.json")).unwrap()).unwrap();
    assert_eq!(first.without_timing(), second.without_timing());

    let wrong = hrdepth(p, &["experiment", "rate", "--config", "embedded.json"]);
    assert_eq!(wrong.status.code(), Some(2));
}
