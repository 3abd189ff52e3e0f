use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use esec::simulator::{load_suite, GroundTruth};
use esec::suite::bundled_suite;

fn esec(args: &[&str], extra: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_esec"));
    cmd.args(args);
    for p in extra {
        cmd.arg(p);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

#[test]
fn checked_in_suite_matches_the_bundled_one() {
    let mut on_disk = load_suite(&manifest("data/suite")).unwrap();
    let mut bundled = bundled_suite();
    on_disk.sort_by(|a, b| a.name.cmp(&b.name));
    bundled.sort_by(|a, b| a.name.cmp(&b.name));
    assert_eq!(on_disk, bundled);
}

#[test]
fn simulate_extract_reason_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let script = manifest("data/suite/cut_00.json");
    let o = esec(&["simulate", "--seed", "4", "--script"], &[&script, Path::new("--out"), d]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let gt: GroundTruth = serde_json::from_str(&std::fs::read_to_string(d.join("cut_00.gt.json")).unwrap()).unwrap();
    assert_eq!(gt.episode, "cut_00");

    let stream = d.join("cut_00.jsonl");
    let esec_json = d.join("esec.json");
    let o = esec(&["extract", "--in"], &[&stream, Path::new("--out"), &esec_json]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let matrix: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&esec_json).unwrap()).unwrap();
    assert!(matrix.get("pairs").is_some());

    let decisions = d.join("decisions.jsonl");
    let lib = manifest("data/library.json");
    let o = esec(&["reason", "--esec"], &[&esec_json, Path::new("--library"), &lib, Path::new("--out"), &decisions]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&decisions)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!lines.is_empty());
    let labels: Vec<&str> = lines.iter().map(|l| l["label"].as_str().unwrap()).collect();
    assert!(labels.contains(&"cut"), "{labels:?}");
    assert!(lines.iter().all(|l| l.get("trace").is_some() && l.get("scores").is_some()));
}

#[test]
fn perturb_is_deterministic_and_accepts_spec_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let script = manifest("data/suite/pour_00.json");
    assert_eq!(code(&esec(&["simulate", "--script"], &[&script, Path::new("--out"), d])), 0);
    let input = d.join("pour_00.jsonl");
    let (a, b) = (d.join("a.jsonl"), d.join("b.jsonl"));
    for out in [&a, &b] {
        let o = esec(&["perturb", "--level", "medium", "--seed", "9", "--in"], &[&input, Path::new("--out"), out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&input).unwrap());

    let spec = d.join("spec.json");
    std::fs::write(&spec, r#"{"dropout_prob":0.0,"jitter_sigma":0.0,"conf_scale":1.0}"#).unwrap();
    let c = d.join("c.jsonl");
    let o = esec(&["perturb", "--spec"], &[&spec, Path::new("--in"), &input, Path::new("--out"), &c]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&c).unwrap(), std::fs::read(&input).unwrap());
}

#[test]
fn exit_codes_distinguish_validation_from_io() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = d.join("missing.jsonl");
    assert_eq!(code(&esec(&["extract", "--in"], &[&missing, Path::new("--out"), &d.join("x.json")])), 2);

    let bad = d.join("bad.jsonl");
    std::fs::write(&bad, "{\"not\": \"a detection\"}\n").unwrap();
    assert_eq!(code(&esec(&["extract", "--in"], &[&bad, Path::new("--out"), &d.join("x.json")])), 1);

    let script = manifest("data/suite/pour_00.json");
    assert_eq!(code(&esec(&["simulate", "--script"], &[&script, Path::new("--out"), d])), 0);
    let input = d.join("pour_00.jsonl");
    let o = esec(&["perturb", "--level", "extreme", "--in"], &[&input, Path::new("--out"), &d.join("n.jsonl")]);
    assert_eq!(code(&o), 1);
    let o = esec(&["evaluate", "--variants", "full,no_magic", "--out"], &[&d.join("r.json")]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&esec(&["no-such-command"], &[])), 1);
    assert_eq!(code(&esec(&["--help"], &[])), 0);
}

#[test]
fn evaluate_report_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let suite = manifest("data/suite");
    let o = esec(
        &["evaluate", "--variants", "full,no_confidence", "--levels", "clean,high", "--seeds", "2", "--suite"],
        &[&suite, Path::new("--out"), &out],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest("data/report.schema.json")).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    assert_eq!(report["results"].as_array().unwrap().len(), 4);
    assert_eq!(report["seeds"], serde_json::json!([0, 1]));
}
