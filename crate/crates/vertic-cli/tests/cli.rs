//! End-to-end checks of the `vertic` binary: exit codes, report layout,
//! and the shipped fixture files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn vertic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vertic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn verify_platoon_fixture_exits_zero_with_three_zero_rhos() {
    let out = vertic(&["verify", fixture("platoon_m2.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["verdict"], serde_json::json!(true));
    let results = report["results"].as_array().unwrap();
    assert_eq!(results.len(), 3);
    for r in results {
        let rho = r["rho"].as_f64().expect("finite rho");
        assert!(rho.abs() <= 1e-6, "rho {rho}");
    }
}

#[test]
fn verify_mutated_fixture_exits_one_with_witness() {
    let out = vertic(&["verify", fixture("platoon_m2_h25.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["verdict"], serde_json::json!(false));
    let omega = report["results"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["target"] == "omega")
        .unwrap();
    assert!(omega["rho"].as_f64().unwrap() > 1e-6);
    assert!(omega["witness"].is_object(), "witness section present");
}

#[test]
fn algebraic_loop_fixture_exits_two_and_names_the_cycle() {
    let out = vertic(&["verify", fixture("algebraic_loop.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("algebraic loop"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn summary_table_lists_targets() {
    let out = vertic(&[
        "verify",
        fixture("platoon_m2.json").to_str().unwrap(),
        "--summary",
        "--out",
        "/dev/null",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("target"));
    assert!(text.contains("veh2.phy"));
    assert!(text.contains("omega"));
    assert!(text.contains("verdict: true"));
}

#[test]
fn dump_lps_writes_listings() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("lps.txt");
    let out = vertic(&[
        "verify",
        fixture("platoon_m2.json").to_str().unwrap(),
        "--out",
        "/dev/null",
        "--dump-lps",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&dump).unwrap();
    assert!(text.contains("Maximize"));
    assert!(text.contains("Subject To"));
    assert!(text.contains("group omega"));
}

#[test]
fn platoon_verify_reports_nineteen_groups_at_m10() {
    let out = vertic(&["platoon", "--M", "10", "--verify", "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(
        stderr(&out).contains("groups=19"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn platoon_simulate_writes_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let out = vertic(&[
        "platoon",
        "--M",
        "2",
        "--simulate",
        "--steps",
        "300",
        "--seed",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    // Header plus 300 rows for each of the two vehicles.
    assert_eq!(text.lines().count(), 1 + 600);
    assert!(text.starts_with("step,vehicle,p,v,u,omega"));
    assert!(stderr(&out).contains("guarantees hold"));
}

#[test]
fn platoon_m1_is_an_input_error() {
    let out = vertic(&["platoon", "--M", "1", "--verify"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn graph_info_counts_fig1_orderings() {
    let out = vertic(&[
        "graph-info",
        fixture("fig1.json").to_str().unwrap(),
        "--count-orders",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("topological orderings: 11"), "{text}");
    assert!(text.contains("C: BR={A, B}"), "{text}");
    assert!(text.contains("F: BR={A, B, D, E}"), "{text}");
}

#[test]
fn graph_info_prints_cycle_certificate() {
    let out = vertic(&[
        "graph-info",
        fixture("algebraic_loop.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(
        stdout(&out).contains("cyclic graph; certificate"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn malformed_file_reports_pointer_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{ "contracts": {}, "network": { "nodes": [ { "id": 4 } ] } }"#,
    )
    .unwrap();
    let out = vertic(&["verify", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("/network/nodes/0"),
        "stderr: {}",
        stderr(&out)
    );
}
