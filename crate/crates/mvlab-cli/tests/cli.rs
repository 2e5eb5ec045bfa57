//! End-to-end checks of the binary: determinism across reruns and worker
//! counts, config round-trips, exit codes, and output files.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn mvlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let r = mvlab(&[
            "simulate", "--model", "linear_mf", "--n", "64", "--m", "256", "--t", "1",
            "--seed", "7", "--out", out.to_str().unwrap(),
        ]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    assert_eq!(read(&out1.join("paths.csv")), read(&out2.join("paths.csv")));
    assert_eq!(read(&out1.join("paths.bin")), read(&out2.join("paths.bin")));
}

#[test]
fn sweep_results_are_identical_across_worker_counts() {
    let dir = TempDir::new().unwrap();
    let out1 = dir.path().join("w1");
    let out8 = dir.path().join("w8");
    for (out, workers) in [(&out1, "1"), (&out8, "8")] {
        let r = mvlab(&[
            "sweep-dt", "--n", "64", "--m", "256", "--factors", "8,16,32", "--factor-ref", "8",
            "--replications", "3", "--seed", "11", "--workers", workers,
            "--out", out.to_str().unwrap(),
        ]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    assert_eq!(read(&out1.join("results.csv")), read(&out8.join("results.csv")));
}

#[test]
fn config_echo_reproduces_results() {
    let dir = TempDir::new().unwrap();
    let out1 = dir.path().join("first");
    let out2 = dir.path().join("second");
    let r = mvlab(&[
        "sweep-n", "--n-list", "16,32,64", "--factor", "8", "--factor-ref", "4", "--m", "128",
        "--replications", "2", "--seed", "3", "--out", out1.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let echo = out1.join("config.echo.json");
    let r = mvlab(&[
        "sweep-n", "--config", echo.to_str().unwrap(), "--out", out2.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(read(&out1.join("results.csv")), read(&out2.join("results.csv")));
}

#[test]
fn malformed_config_exits_2_with_diagnostic() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = \"oops\"\n").unwrap();
    let r = mvlab(&["sweep-dt", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("line 1"), "missing line diagnostic: {err}");

    let cfg = dir.path().join("unknown.toml");
    std::fs::write(&cfg, "what_is_this = 1\n").unwrap();
    let r = mvlab(&["sweep-dt", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("unknown field"));

    let r = mvlab(&["sweep-dt", "--m", "100"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn accept_exit_codes_follow_criteria() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("ok");
    let r = mvlab(&[
        "accept", "--budget", "quick", "--only", "transport-exactness", "--seed", "9",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("PASS transport-exactness"));
    let summary = read(&out.join("summary.json"));
    let doc: serde_json::Value = serde_json::from_slice(&summary).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["result"]["passed"], true);

    let r = mvlab(&[
        "accept", "--budget", "quick", "--only", "transport-exactness", "--zero-tolerance",
        "--seed", "9", "--out", dir.path().join("fail").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stdout).contains("FAIL transport-exactness"));

    let r = mvlab(&["accept", "--only", "no-such-criterion"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn yamada_check_emits_table_and_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("y");
    let r = mvlab(&[
        "yamada-check", "--gamma", "7.389", "--eps", "0.1", "--out", out.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).contains("pass"));
    let csv = String::from_utf8(read(&out.join("yamada.csv"))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "x,v,v_prime,v_double_prime,lower_bound,upper_bound,curvature_bound"
    );
    assert!(csv.lines().count() > 100);
}

#[test]
fn validate_model_reports_checks() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("v");
    let r = mvlab(&[
        "validate-model", "--model", "bounded_holder_multid", "--param", "d=3",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("sigma_min_singular"));
    assert!(stdout.contains("-> pass"));
}

#[test]
fn picard_and_glivenko_write_outputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("p");
    let r = mvlab(&[
        "picard", "--n", "64", "--m", "128", "--factor", "4", "--k-max", "3",
        "--seed", "2", "--out", out.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let csv = String::from_utf8(read(&out.join("picard.csv"))).unwrap();
    assert!(csv.starts_with("k,distance\n"));
    assert_eq!(csv.lines().count(), 4);

    let out = dir.path().join("g");
    let r = mvlab(&[
        "glivenko", "--law", "uniform", "--lo", "0", "--hi", "1", "--n-list", "16,32",
        "--replications", "2", "--out", out.to_str().unwrap(), "--svg",
    ]);
    assert!(r.status.success());
    assert!(out.join("results.csv").exists());
    let svg = String::from_utf8(read(&out.join("glivenko.svg"))).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("slope"));
}
