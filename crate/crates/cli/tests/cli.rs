use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn certiq(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_certiq"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn setup_net(dir: &Path) {
    assert_ok(&certiq(
        &["gen", "--kind", "two-moons", "--n", "12", "--seed", "0", "--out", "moons.json"],
        dir,
    ));
    assert_ok(&certiq(
        &[
            "train", "--data", "moons.json", "--arch", "2,4,2", "--activation", "relu",
            "--epochs", "300", "--seed", "0", "--out", "net.json",
        ],
        dir,
    ));
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a.json", "b.json"] {
        assert_ok(&certiq(
            &["gen", "--kind", "two-moons", "--n", "20", "--seed", "3", "--out", out],
            dir.path(),
        ));
    }
    let a = fs::read_to_string(dir.path().join("a.json")).unwrap();
    let b = fs::read_to_string(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
    let parsed: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 20);
}

#[test]
fn gen_csv_reports_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "1.0,2.0,0\n1.0,x,1\n").unwrap();
    let out = certiq(
        &["gen", "--kind", "csv", "--path", "bad.csv"],
        dir.path(),
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn verify_outputs_verdict_json() {
    let dir = tempfile::tempdir().unwrap();
    setup_net(dir.path());
    let out = certiq(
        &[
            "verify", "--net", "net.json", "--x0", "0.5,0.5", "--eps", "0.05", "--label", "0",
            "--model", "1", "--solver", "enumerate", "--out", "verdict.json",
        ],
        dir.path(),
    );
    assert_ok(&out);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verdict.json")).unwrap())
            .unwrap();
    assert!(v.get("verdict").is_some());
    assert!(v.get("spins").is_some());
}

#[test]
fn verify_benders_includes_trail() {
    let dir = tempfile::tempdir().unwrap();
    setup_net(dir.path());
    let out = certiq(
        &[
            "verify", "--net", "net.json", "--x0", "1.2,0.3", "--eps", "0.2", "--label", "0",
            "--model", "1", "--solver", "benders", "--out", "verdict.json",
        ],
        dir.path(),
    );
    assert_ok(&out);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("verdict.json")).unwrap())
            .unwrap();
    assert!(v.get("report").is_some());
    assert!(v["trail"].as_array().is_some());
}

#[test]
fn verify_partition_flag() {
    let dir = tempfile::tempdir().unwrap();
    setup_net(dir.path());
    let out = certiq(
        &[
            "verify", "--net", "net.json", "--x0", "0.5,0.5", "--eps", "0.05", "--label", "0",
            "--partition-at", "1", "--out", "part.json",
        ],
        dir.path(),
    );
    assert_ok(&out);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("part.json")).unwrap()).unwrap();
    assert_eq!(v["cut"], 1);
    assert!(v.get("suffix_spins").is_some());
}

#[test]
fn encode_and_solve_qubo_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    setup_net(dir.path());
    assert_ok(&certiq(
        &[
            "encode", "--net", "net.json", "--x0", "0.5,0.5", "--eps", "0.02", "--label", "0",
            "--model", "1", "--as-qubo", "--bits-per-var", "1", "--bits-per-slack", "1",
            "--out", "q.txt",
        ],
        dir.path(),
    ));
    let text = fs::read_to_string(dir.path().join("q.txt")).unwrap();
    assert!(text.starts_with("# qubo dim"));
    let out = certiq(
        &["solve-qubo", "--qubo", "q.txt", "--budget-ms", "500", "--out", "sol.json"],
        dir.path(),
    );
    assert_ok(&out);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sol.json")).unwrap()).unwrap();
    assert!(v["energy"].is_f64() || v["energy"].is_i64());
    assert!(v["bits"].as_array().is_some());
}

#[test]
fn campaign_report_structure() {
    let dir = tempfile::tempdir().unwrap();
    setup_net(dir.path());
    let out = certiq(
        &[
            "campaign", "--net", "net.json", "--data", "moons.json", "--eps", "0.02,0.1",
            "--model", "1", "--solver", "enumerate", "--out", "report.json",
        ],
        dir.path(),
    );
    assert_ok(&out);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    for r in reports {
        assert!(r["certified_accuracy"].as_f64().unwrap() >= 0.0);
        assert!(r["samples"].as_array().unwrap().len() == 12);
    }
}

#[test]
fn transfer_emits_accuracy_bracket() {
    let dir = tempfile::tempdir().unwrap();
    setup_net(dir.path());
    let mask = serde_json::json!({
        "masks": [
            {"rows": 4, "cols": 2, "values": [1,1, 1,0, 1,1, 0,1]},
            {"rows": 2, "cols": 4, "values": [1,1,1,1, 1,1,0,1]},
        ]
    });
    fs::write(dir.path().join("mask.json"), mask.to_string()).unwrap();
    let out = certiq(
        &[
            "transfer", "--net", "net.json", "--mask", "mask.json", "--data", "moons.json",
            "--eps", "0.05", "--model", "1", "--out", "tr.json",
        ],
        dir.path(),
    );
    assert_ok(&out);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("tr.json")).unwrap()).unwrap();
    let lo = v["certified_accuracy_lower"].as_f64().unwrap();
    let hi = v["certified_accuracy_upper"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&lo) && lo <= hi);
    assert_eq!(v["certificates"].as_array().unwrap().len(), 12);
}

#[test]
fn missing_file_fails_without_internal_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = certiq(
        &["bounds", "--net", "nope.json", "--x0", "0.0", "--eps", "0.1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}
