use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use augloop_core::errortable::ErrorTable;
use augloop_core::generator::read_manifest;
use augloop_core::modspace::Modification;

fn augloop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_augloop"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = augloop(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fixtures(kind: &str) -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/annotations").join(kind);
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    v.sort();
    v
}

fn with_rules(dir: &Path) {
    let rules = r#"{"rules":[{"ordered":{"brightness":[0.5,0.7]},"unordered":{"environment":["forest"]}}]}"#;
    fs::write(dir.join("rules.json"), rules).unwrap();
    fs::write(
        dir.join("loop.toml"),
        "model = \"surrogate:rules.json\"\ntarget = 15\nbudget = 3000\ntrain_size = 20\ntest_size = 20\nratios = [0.17, 0.3]\n",
    )
    .unwrap();
}

#[test]
fn annotate_validate_accepts_goldens() {
    let files = fixtures("golden");
    let args: Vec<&str> = ["annotate", "validate"]
        .into_iter()
        .chain(files.iter().map(|p| p.to_str().unwrap()))
        .collect();
    let stdout = ok(Path::new("."), &args);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("ok")).count(), files.len());
}

#[test]
fn annotate_validate_rejects_each_invalid_sidecar() {
    for f in fixtures("invalid") {
        let out = augloop(Path::new("."), &["annotate", "validate", f.to_str().unwrap()]);
        assert!(!out.status.success(), "{} accepted", f.display());
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("invalid"));
    }
}

#[test]
fn sample_writes_valid_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["sample", "--method", "halton", "-n", "7"]);
    let mods: Vec<Modification> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(mods.len(), 7);
    let again = ok(dir.path(), &["sample", "--method", "halton", "-n", "7"]);
    assert_eq!(out, again);
}

#[test]
fn feedback_sampling_needs_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = augloop(dir.path(), &["sample", "--method", "feedback", "-n", "3"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn generate_then_standard_augment() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["assets", "gen-test", "--dest", "assets", "--backgrounds", "3", "--cars", "4"]);
    assert!(dir.path().join("assets/backgrounds").is_dir());
    ok(dir.path(), &["generate", "--manifest", "data/m.jsonl", "-n", "6"]);
    let records = read_manifest(&dir.path().join("data/m.jsonl")).unwrap();
    assert_eq!(records.len(), 6);
    assert!(records.iter().all(|r| dir.path().join(&r.image_path).exists()));
    ok(dir.path(), &["augment-standard", "--manifest", "data/m.jsonl", "--output", "data/s.jsonl", "--copies", "2"]);
    let aug = read_manifest(&dir.path().join("data/s.jsonl")).unwrap();
    assert!(aug.len() >= 10 && aug.len() <= 12);
}

#[test]
fn harvest_analyze_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    with_rules(dir.path());
    let summary: serde_json::Value =
        serde_json::from_str(&ok(dir.path(), &["--config", "loop.toml", "--out", "h", "harvest"])).unwrap();
    assert_eq!(summary["counterexamples"], 15);
    assert_eq!(summary["stop"], "target_reached");
    let table = dir.path().join("h/error_table.csv");
    assert_eq!(ErrorTable::load(&table).unwrap().len(), 15);

    let report: serde_json::Value =
        serde_json::from_str(&ok(dir.path(), &["analyze-errors", "--table", "h/error_table.csv"])).unwrap();
    assert_eq!(report["rows"], 15);

    // Every harvested image is misclassified by the model that produced it.
    let eval: serde_json::Value = serde_json::from_str(&ok(
        dir.path(),
        &["--config", "loop.toml", "eval", "--manifest", "h/augmentation.jsonl"],
    ))
    .unwrap();
    assert_eq!(eval["images"], 15);
    assert_eq!(eval["misclassified"], 15);

    let out = ok(dir.path(), &["sample", "--method", "feedback", "--table", "h/error_table.csv", "-n", "4"]);
    assert_eq!(out.lines().count(), 4);
}

#[test]
fn run_cycles_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    with_rules(dir.path());
    let report: serde_json::Value =
        serde_json::from_str(&ok(dir.path(), &["--config", "loop.toml", "--out", "c", "run-cycles", "-c", "1"])).unwrap();
    assert_eq!(report["cycles"].as_array().unwrap().len(), 1);
    assert!(dir.path().join("c/summary.json").exists());
    assert!(dir.path().join("c/cycle_1/error_table.csv").exists());
}

#[test]
fn model_commands_without_a_model_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = augloop(dir.path(), &["harvest", "--budget", "10"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}
