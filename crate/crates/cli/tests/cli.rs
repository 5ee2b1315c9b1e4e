//! End-to-end exercises of the binary: exit codes, determinism, and the
//! shape of the emitted documents.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gg1-ipa"))
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gg1-ipa-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "args {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn dd1_kink_run_reports_the_one_sided_pair() {
    let dir = tmp_dir("kink");
    let out_path = dir.join("results.jsonl");
    let csv_path = dir.join("results.csv");
    run_ok(&[
        "run",
        config_path("dd1_tail_kink.toml").to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&out_path).unwrap();
    let pooled: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .filter(|v: &serde_json::Value| v["record"] == "pooled")
        .collect();
    assert_eq!(pooled.len(), 2);
    assert_eq!(pooled[0]["side"], "right");
    assert_eq!(pooled[0]["value"], 1.0);
    assert_eq!(pooled[1]["side"], "left");
    assert_eq!(pooled[1]["value"], 0.0);
    assert_eq!(pooled[1]["atom_correction"], 1.0);
    // every estimate carries its error bar, count, and side
    for p in &pooled {
        assert!(p["std_error"].is_number());
        assert!(p["n_customers"].is_number());
        assert!(p["side"].is_string());
    }
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with(
        "estimator,side,value,std_error,ci_lo,ci_hi,atom_correction,oracle_value,oracle_gap\n"
    ));
    assert!(csv.lines().count() >= 3);
}

#[test]
fn identical_invocations_reproduce_bitwise() {
    let dir = tmp_dir("determinism");
    let a = dir.join("a.jsonl");
    let b = dir.join("b.jsonl");
    for out in [&a, &b] {
        run_ok(&[
            "run",
            config_path("dd1_tail_kink.toml").to_str().unwrap(),
            "--jobs",
            "2",
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn embedded_config_reruns_bitwise() {
    let dir = tmp_dir("roundtrip");
    let first = dir.join("first.jsonl");
    run_ok(&[
        "run",
        config_path("dd1_tail_kink.toml").to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&first).unwrap();
    let config_line: serde_json::Value =
        serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(config_line["record"], "config");
    let mut config = config_line.clone();
    config.as_object_mut().unwrap().remove("record");
    // regenerate a TOML config from the embedded JSON and run it again
    let toml_text = toml::to_string(&config).unwrap();
    let second_cfg = dir.join("embedded.toml");
    std::fs::write(&second_cfg, toml_text).unwrap();
    let second = dir.join("second.jsonl");
    run_ok(&[
        "run",
        second_cfg.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap()
    );
}

#[test]
fn validate_reports_field_names_and_exit_codes() {
    // valid config: exit 0, no output
    let out = run_ok(&[
        "validate",
        config_path("dd1_tail_kink.toml").to_str().unwrap(),
    ]);
    assert!(out.stderr.is_empty());

    // parameter outside the interval: exit 2 naming the field
    let dir = tmp_dir("validate");
    let bad = dir.join("bad.toml");
    let text = std::fs::read_to_string(config_path("dd1_tail_kink.toml")).unwrap();
    std::fs::write(&bad, text.replace("value = 0.3", "value = 0.95")).unwrap();
    let out = bin().args(["validate", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("parameter.value"), "{stderr}");

    // malformed TOML: exit 2, parse error mentioning the file
    let garbled = dir.join("garbled.toml");
    std::fs::write(&garbled, "horizon = [not toml").unwrap();
    let out = bin().args(["validate", garbled.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse"));
}

#[test]
fn unstable_config_exits_3_unless_forced() {
    let dir = tmp_dir("unstable");
    let cfg = dir.join("unstable.toml");
    let text = std::fs::read_to_string(config_path("dd1_tail_kink.toml")).unwrap();
    // widen the declared intervals so the worst-case load reaches 1.5
    let text = text
        .replace("theta_interval = [0.05, 0.9]", "theta_interval = [0.05, 1.5]")
        .replace("interval = [0.05, 0.9]", "interval = [0.05, 1.5]");
    std::fs::write(&cfg, text).unwrap();
    let out = bin()
        .args(["run", cfg.to_str().unwrap(), "--out"])
        .arg(dir.join("never.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    let forced = dir.join("forced.jsonl");
    let out = bin()
        .args(["run", cfg.to_str().unwrap(), "--force-unstable", "--out"])
        .arg(&forced)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&forced).unwrap();
    let meta: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    assert_eq!(meta["record"], "meta");
    assert_eq!(meta["unstable_forced"], true);
}

#[test]
fn estimation_errors_exit_4() {
    // two-sided at the kink: the realized atom correction forbids it
    let dir = tmp_dir("atomhit");
    let cfg = dir.join("twosided.toml");
    let text = std::fs::read_to_string(config_path("dd1_tail_kink.toml")).unwrap();
    let text = text.replace("side = \"right\"", "side = \"two-sided\"");
    std::fs::write(&cfg, text).unwrap();
    let out = bin().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("atom"));
}

#[test]
fn palm_check_subcommand_reports_each_identity() {
    let out = run_ok(&[
        "palm-check",
        config_path("dd1_tail_kink.toml").to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let reports: Vec<serde_json::Value> = stdout
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    // two checks per replication, two replications
    assert_eq!(reports.len(), 4);
    assert!(reports.iter().all(|r| r["report"]["pass"] == true));
    assert!(reports
        .iter()
        .any(|r| r["report"]["identity"] == "inversion"));
    assert!(reports
        .iter()
        .any(|r| r["report"]["identity"] == "wald-lemma"));
}

#[test]
fn mm1_run_matches_its_oracles() {
    let dir = tmp_dir("mm1");
    let out_path = dir.join("mm1.jsonl");
    run_ok(&[
        "run",
        config_path("mm1_mean_sensitivity.toml").to_str().unwrap(),
        "--jobs",
        "4",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&out_path).unwrap();
    let records: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let pooled: Vec<_> = records.iter().filter(|v| v["record"] == "pooled").collect();
    let first = pooled
        .iter()
        .find(|p| p["op"] == "first-order")
        .expect("first-order row");
    let value = first["value"].as_f64().unwrap();
    let se = first["std_error"].as_f64().unwrap();
    assert!((value - 3.0).abs() <= 3.0 * se + 0.05, "value {value} se {se}");
    let fd = records
        .iter()
        .find(|v| v["record"] == "pooled-fd")
        .expect("fd row");
    let fd_value = fd["value"].as_f64().unwrap();
    assert!((value - fd_value).abs() <= 0.1, "ipa {value} fd {fd_value}");
    // every palm check passed in every replication
    for rep in records.iter().filter(|v| v["record"] == "replication") {
        for report in rep["palm"].as_array().unwrap() {
            assert_eq!(report["pass"], true, "{report}");
        }
    }
}
