//! Black-box tests of the `goosewatch` binary: exit codes, output schemas
//! and byte-level determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_goosewatch");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("GOOSEWATCH_SEED")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn sha(path: impl AsRef<Path>) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

/// Synthesises the reference train and test captures and extracts 0.5 s features.
fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train = fixture("reference_train.json");
    let test = fixture("reference_test.json");
    ok(d, &["synth", train.to_str().unwrap(), "train"]);
    ok(d, &["synth", test.to_str().unwrap(), "test"]);
    ok(d, &["extract", "train/capture.pcap", "train.csv", "--labels", "train/labels.csv", "--tw", "0.5"]);
    ok(d, &["extract", "test/capture.pcap", "test.csv", "--labels", "test/labels.csv", "--tw", "0.5", "--scope", "infer"]);
    dir
}

#[test]
fn synth_and_extract_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scenario = fixture("reference_test.json");
    ok(d, &["synth", scenario.to_str().unwrap(), "a"]);
    ok(d, &["synth", scenario.to_str().unwrap(), "b"]);
    assert_eq!(sha(d.join("a/capture.pcap")), sha(d.join("b/capture.pcap")));
    assert_eq!(sha(d.join("a/labels.csv")), sha(d.join("b/labels.csv")));

    ok(d, &["extract", "a/capture.pcap", "x1.csv", "--tw", "1.0"]);
    ok(d, &["extract", "a/capture.pcap", "x2.csv", "--tw", "1.0"]);
    assert_eq!(sha(d.join("x1.csv")), sha(d.join("x2.csv")));

    let text = fs::read_to_string(d.join("x1.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# goosewatch "));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 18);
    assert_eq!(&header[..4], ["flow", "t_start", "t_w", "label"]);
    assert!(lines.all(|l| l.contains(",unlabeled,")));
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("x1.json")).unwrap()).unwrap();
    assert_eq!(sidecar["columns"].as_array().unwrap().len(), 14);
    assert!(sidecar["provenance"].as_str().unwrap().contains("config-sha256="));
}

#[test]
fn labels_populate_label_column() {
    let dir = prepared();
    let text = fs::read_to_string(dir.path().join("test.csv")).unwrap();
    for kind in ["normal", "MS", "DM", "DoS"] {
        assert!(text.contains(&format!(",{kind},")), "no {kind} rows");
    }
}

#[test]
fn full_workflow_is_byte_identical_across_runs() {
    let dir = prepared();
    let d = dir.path();
    for run_id in ["r1", "r2"] {
        let profile = format!("{run_id}/profile.json");
        ok(d, &["train", "train.csv", &profile]);
        ok(d, &["detect", &profile, "test.csv", run_id]);
        let out = ok(d, &["eval", &format!("{run_id}/verdicts.csv")]);
        let table = String::from_utf8(out.stdout).unwrap();
        assert!(table.contains("fused false positives:"), "{table}");
        ok(d, &["latent", &profile, "test.csv", &format!("{run_id}/latent.csv")]);
    }
    for f in ["profile.json", "verdicts.csv", "attributions.csv", "report.csv", "latent.csv"] {
        assert_eq!(sha(d.join("r1").join(f)), sha(d.join("r2").join(f)), "{f} differs");
    }

    // Every attack interval has at least one anomalous verdict.
    let verdicts = fs::read_to_string(d.join("r1/verdicts.csv")).unwrap();
    for kind in ["MS", "DM", "DoS"] {
        assert!(verdicts.lines().any(|l| l.contains(&format!(",{kind},")) && l.ends_with(",true")), "{kind} never flagged");
    }

    let latent = fs::read_to_string(d.join("r1/latent.csv")).unwrap();
    let header = latent.lines().nth(1).unwrap();
    assert!(header.ends_with("seq_z1,seq_z2,seq_z3,temp_z1,temp_z2"), "{header}");
    let features = fs::read_to_string(d.join("test.csv")).unwrap();
    assert_eq!(latent.lines().count(), features.lines().count());
}

#[test]
fn seed_flag_and_environment_change_the_profile() {
    let dir = prepared();
    let d = dir.path();
    ok(d, &["train", "train.csv", "a.json", "--view", "temp", "--epochs", "20"]);
    ok(d, &["train", "train.csv", "b.json", "--view", "temp", "--epochs", "20", "--seed", "7"]);
    let out = Command::new(BIN)
        .args(["train", "train.csv", "c.json", "--view", "temp", "--epochs", "20"])
        .current_dir(d)
        .env("GOOSEWATCH_SEED", "7")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_ne!(sha(d.join("a.json")), sha(d.join("b.json")));
    assert_eq!(sha(d.join("b.json")), sha(d.join("c.json")));
    let p: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("b.json")).unwrap()).unwrap();
    assert_eq!(p["config"]["seed"], 7);
    assert!(p["seq"].is_null());
    assert_eq!(p["config"]["t_w"], 0.5);
}

#[test]
fn malformed_scenario_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.json"), "{\n  \"version\": 1,\n  \"seed\": ,\n}").unwrap();
    let out = run(d, &["synth", "bad.json", "out"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3") && err.contains("column"), "{err}");
}

#[test]
fn invalid_config_exits_2() {
    let dir = prepared();
    let d = dir.path();
    assert_eq!(code(&run(d, &["extract", "train/capture.pcap", "x.csv", "--tw", "0"])), 2);
    assert_eq!(code(&run(d, &["train", "train.csv", "p.json", "--q", "0.5"])), 2);
    fs::write(d.join("cfg.json"), r#"{"epochs": 10, "bogus": 1}"#).unwrap();
    assert_eq!(code(&run(d, &["train", "train.csv", "p.json", "--config", "cfg.json"])), 2);
    assert_eq!(code(&run(d, &["train", "train.csv", "p.json", "--tw", "1.0"])), 2);
}

#[test]
fn attack_rows_in_training_exit_3() {
    let dir = prepared();
    let out = run(dir.path(), &["train", "test.csv", "p.json"]);
    assert_eq!(code(&out), 3);
    assert!(!dir.path().join("p.json").exists());
}

#[test]
fn schema_mismatch_exits_4() {
    let dir = prepared();
    let d = dir.path();
    ok(d, &["train", "train.csv", "p.json", "--view", "temp", "--epochs", "20"]);

    let text = fs::read_to_string(d.join("test.csv")).unwrap();
    fs::write(d.join("renamed.csv"), text.replacen("dt_mean", "dt_avg", 1)).unwrap();
    assert_eq!(code(&run(d, &["detect", "p.json", "renamed.csv", "out"])), 4);

    ok(d, &["extract", "test/capture.pcap", "one_second.csv", "--tw", "1.0"]);
    assert_eq!(code(&run(d, &["detect", "p.json", "one_second.csv", "out"])), 4);

    let profile = fs::read_to_string(d.join("p.json")).unwrap();
    fs::write(d.join("p2.json"), profile.replacen("\"version\": 1", "\"version\": 9", 1)).unwrap();
    assert_eq!(code(&run(d, &["detect", "p2.json", "test.csv", "out"])), 4);

    // Evaluating unlabeled verdicts is a schema error too.
    ok(d, &["extract", "test/capture.pcap", "unlabeled.csv", "--tw", "0.5"]);
    ok(d, &["detect", "p.json", "unlabeled.csv", "unl"]);
    assert_eq!(code(&run(d, &["eval", "unl/verdicts.csv"])), 4);
}

#[test]
fn missing_input_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["extract", "nope.pcap", "x.csv"]);
    assert_eq!(code(&out), 5);
    assert!(String::from_utf8(out.stderr).unwrap().contains("nope.pcap"));
}

#[test]
fn empty_features_give_empty_verdicts_and_no_positive_report() {
    let dir = prepared();
    let d = dir.path();
    ok(d, &["train", "train.csv", "p.json", "--epochs", "20"]);
    let text = fs::read_to_string(d.join("test.csv")).unwrap();
    let header: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
    fs::write(d.join("empty.csv"), header).unwrap();
    ok(d, &["detect", "p.json", "empty.csv", "empty"]);
    let verdicts = fs::read_to_string(d.join("empty/verdicts.csv")).unwrap();
    assert_eq!(verdicts.lines().count(), 2);

    // All-normal input: every attack row is flagged as having no positives.
    ok(d, &["detect", "p.json", "train.csv", "normal"]);
    let out = ok(d, &["eval", "normal/verdicts.csv", "-o", "normal/r.csv"]);
    let report = fs::read_to_string(d.join("normal/r.csv")).unwrap();
    assert!(report.lines().skip(2).all(|l| l.ends_with(",true")), "{report}");
    assert!(String::from_utf8(out.stdout).unwrap().contains("note: no"));
}
