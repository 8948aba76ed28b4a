use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn sample(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("samples").join(format!("{name}.mc"))
}

fn insecscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_insecscan")).args(args).output().unwrap()
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut all = vec!["--format", "json"];
    all.extend_from_slice(args);
    let out = insecscan(&all);
    let v = serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)));
    (out.status.code().unwrap(), v)
}

fn path(name: &str) -> String {
    sample(name).to_string_lossy().into_owned()
}

#[test]
fn exit_codes_follow_the_findings() {
    assert_eq!(insecscan(&[&path("kremlib")]).status.code(), Some(0));
    assert_eq!(insecscan(&[&path("auction")]).status.code(), Some(1));
    assert_eq!(insecscan(&[&path("ct_lookup")]).status.code(), Some(0));
    assert_eq!(insecscan(&["--ct", &path("ct_lookup")]).status.code(), Some(1));
    assert_eq!(insecscan(&["/nonexistent/file.mc"]).status.code(), Some(2));
}

#[test]
fn json_report_fields() {
    let (code, v) = json(&[&path("auction")]);
    assert_eq!(code, 1);
    let findings = v["findings"].as_array().unwrap();
    assert_eq!(findings.len(), 1);
    let f = &findings[0];
    assert_eq!(f["function"], "update_max");
    assert_eq!(f["status"], "insec");
    assert_eq!(f["span"]["line"], 9);
    assert_eq!(f["engine"], "unary");
    assert_eq!(f["driver"], "bottom-up");
    assert_eq!(f["oracle"], "confirmed");
    for key in ["file", "label", "presumption", "result", "elapsed_ms"] {
        assert!(f.get(key).is_some(), "missing {key}");
    }
    let functions = v["functions"].as_array().unwrap();
    assert_eq!(functions.len(), 2);
}

#[test]
fn several_files_give_an_array() {
    let (code, v) = json(&[&path("kremlib"), &path("uaf")]);
    assert_eq!(code, 1);
    let reports = v.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[1]["findings"][0]["status"], "err");
}

#[test]
fn oracle_can_be_switched_off() {
    let (_, v) = json(&["--oracle", "off", &path("uaf")]);
    assert_eq!(v["findings"][0]["oracle"], "off");
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("insecscan.toml");
    std::fs::write(&cfg, "engine = \"relational\"\ndriver = \"top-down\"\nct = true\n").unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    let (_, v) = json(&["--config", &cfg, &path("ct_lookup")]);
    let f = &v["findings"][0];
    assert_eq!(f["engine"], "relational");
    assert_eq!(f["driver"], "top-down");
    let (_, v) = json(&["--config", &cfg, "--engine", "unary", &path("ct_lookup")]);
    assert_eq!(v["findings"][0]["engine"], "unary");
}

#[test]
fn bad_configuration_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no-such-key = 1\n").unwrap();
    let out = insecscan(&["--config", &cfg.to_string_lossy(), &path("uaf")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert_eq!(insecscan(&["--bits", "0", &path("uaf")]).status.code(), Some(2));
    assert_eq!(insecscan(&["--attacker-level", "top", &path("uaf")]).status.code(), Some(2));
}

#[test]
fn custom_lattice_and_attacker() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("three.mc");
    std::fs::write(&src, "x = input(mid);\noutput(low, x);\noutput(mid, x);\n").unwrap();
    let src = src.to_string_lossy().into_owned();
    let (_, v) = json(&["--lattice", "low,mid,high", &src]);
    assert_eq!(v["findings"].as_array().unwrap().len(), 1);
    let (_, v) = json(&["--lattice", "low,mid,high", "--attacker-level", "mid", &src]);
    assert_eq!(v["findings"].as_array().unwrap().len(), 0);
}

#[test]
fn parse_errors_report_a_position() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("broken.mc");
    std::fs::write(&src, "skip;\nx = ;\n").unwrap();
    let out = insecscan(&[&src.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":2:"), "{err}");
}

#[test]
fn summary_cache_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.json");
    let cache = cache.to_string_lossy().into_owned();
    let run = || insecscan(&["--format", "json", "--summaries", &cache, &path("auction")]);
    let first = run();
    let bytes = std::fs::read(&cache).unwrap();
    let second = run();
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(std::fs::read(&cache).unwrap(), bytes);
}

#[test]
fn empty_file_gives_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("empty.mc");
    std::fs::write(&src, "").unwrap();
    let (code, v) = json(&[&src.to_string_lossy()]);
    assert_eq!(code, 0);
    assert!(v["findings"].as_array().unwrap().is_empty());
}

#[test]
fn json_report_round_trips() {
    let (_, v) = json(&[&path("auction")]);
    let report: insecscan::cli::Report = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(serde_json::to_value(&report).unwrap(), v);
    let text = insecscan(&[&path("auction")]).stdout;
    assert_eq!(String::from_utf8(text).unwrap(), report.to_text());
}
