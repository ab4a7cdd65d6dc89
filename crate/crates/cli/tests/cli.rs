use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn config(name: &str) -> String {
    root()
        .join("fixtures/configs")
        .join(format!("{name}.toml"))
        .display()
        .to_string()
}

fn colorgpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colorgpt"))
        .args(args)
        .current_dir(root())
        .env_remove("LLM_API_KEY")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn first_document(dir: &Path) -> PathBuf {
    let corpus = std::fs::read_to_string(root().join("fixtures/completion/corpus.jsonl")).unwrap();
    let path = dir.join("doc.json");
    std::fs::write(&path, corpus.lines().nth(12).unwrap()).unwrap();
    path
}

#[test]
fn convert_color_round_trips_through_words() {
    let out = colorgpt(&["convert-color", "#ff0000", "--to", "word"]);
    assert!(out.status.success());
    let word = String::from_utf8(out.stdout).unwrap().trim().to_string();
    let hex = String::from_utf8(colorgpt(&["convert-color", &word, "--to", "hexcode"]).stdout).unwrap();
    let again = String::from_utf8(colorgpt(&["convert-color", hex.trim(), "--to", "word"]).stdout).unwrap();
    assert_eq!(again.trim(), word);

    let all = String::from_utf8(colorgpt(&["convert-color", "[0, 0, 0]"]).stdout).unwrap();
    assert_eq!(all.lines().count(), 6);
    assert!(
        all.contains("cielab\t[0.0, 0.0, 0.0]") || all.contains("cielab\t[0, 0, 0]"),
        "{all}"
    );
}

#[test]
fn bad_input_exits_with_validation_code() {
    assert_eq!(colorgpt(&["convert-color", "#zzzzzz"]).status.code(), Some(2));
    assert_eq!(
        colorgpt(&["--config", "missing.toml", "convert-color", "#000000"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        colorgpt(&["convert-color", "#000000", "--to", "cmyk"]).status.code(),
        Some(2)
    );
}

#[test]
fn mask_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let doc = first_document(dir.path());
    let doc = doc.to_str().unwrap();
    let a = stdout_json(&colorgpt(&["--seed", "3", "mask", doc, "--k", "2"]));
    let b = stdout_json(&colorgpt(&["--seed", "3", "mask", doc, "--k", "2"]));
    assert_eq!(a, b);
    assert_eq!(a["record"]["slots"].as_array().map(Vec::len), Some(2));
    let text = a["document"].to_string();
    assert_eq!(text.matches("[MASK]").count(), 2);
    assert_eq!(colorgpt(&["mask", doc, "--k", "4"]).status.code(), Some(2));
}

#[test]
fn complete_fills_a_masked_document() {
    let dir = tempfile::tempdir().unwrap();
    let doc = first_document(dir.path());
    let masked = stdout_json(&colorgpt(&["mask", doc.to_str().unwrap(), "--k", "1"]));
    let masked_path = dir.path().join("masked.json");
    std::fs::write(&masked_path, masked["document"].to_string()).unwrap();

    let out = colorgpt(&["--config", &config("fixed"), "complete", masked_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = stdout_json(&out);
    assert_eq!(res["colors"], serde_json::json!(["#123456"]));
    assert!(!res["updated_document"].to_string().contains("[MASK]"));

    let unmasked = colorgpt(&["--config", &config("fixed"), "complete", doc.to_str().unwrap()]);
    assert_eq!(unmasked.status.code(), Some(2));
}

#[test]
fn generate_prints_a_palette() {
    let out = colorgpt(&["--config", &config("fixed-palette"), "generate", "green grass"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = stdout_json(&out);
    assert_eq!(res["palette"].as_array().map(Vec::len), Some(5));
}

#[test]
fn eval_writes_reports_and_report_reemits_them() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = colorgpt(&[
        "--config",
        &config("fixed"),
        "eval-completion",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("accuracy.csv")).unwrap();
    assert!(csv.contains("fixed-mock,25.00,25.00,25.00"), "{csv}");

    let again = dir.path().join("again");
    let out = colorgpt(&[
        "report",
        out_dir.join("report.json").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(again.join("accuracy.csv")).unwrap(), csv);
}

#[test]
fn provider_failure_marks_the_run_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("down.toml");
    let text = std::fs::read_to_string(config("fixed")).unwrap();
    let fixtures = root().join("fixtures/configs");
    let text = text
        .replace("../../", &format!("{}/../../", fixtures.display()))
        .replace("\"../", &format!("\"{}/../", fixtures.display()))
        .replace(
            "provider = \"mock\"",
            "provider = \"remote_chat\"\nendpoint = \"http://127.0.0.1:1/v1/chat/completions\"\ntimeout_secs = 1\nretry = { max_attempts = 1, base_backoff_ms = 1, max_backoff_ms = 1 }",
        );
    std::fs::write(&cfg, text).unwrap();
    let out_dir = dir.path().join("run");
    let out = colorgpt(&[
        "--config",
        cfg.to_str().unwrap(),
        "--parallel",
        "8",
        "eval-completion",
        "--out",
        out_dir.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("report.json").exists());
}

#[test]
fn build_index_saves_the_training_split() {
    let dir = tempfile::tempdir().unwrap();
    let idx = dir.path().join("pat.idx");
    let out = colorgpt(&[
        "--config",
        &config("fixed-palette"),
        "build-index",
        "--task",
        "generation",
        "--out",
        idx.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("20 exemplars"));
    assert!(idx.exists());
}
