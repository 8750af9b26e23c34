//! Subcommands run against the shipped fixtures; declared errors exit nonzero.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn agentdial(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agentdial"))
        .args(args)
        .env_remove("AGENTDIAL_CONFIG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = agentdial(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn fx(name: &str) -> String {
    fixtures().join(name).to_string_lossy().into_owned()
}

fn lines(p: &Path) -> usize {
    std::fs::read_to_string(p).unwrap().lines().count()
}

#[test]
fn stepwise_commands_match_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n).to_string_lossy().into_owned();

    ok(&["transform-dst", "--input", &fx("snips.jsonl"), "--output", &d("tod.jsonl")]);
    assert_eq!(lines(&dir.path().join("tod.jsonl")), 5);

    ok(&["transform-fc", "--input", &fx("fc.jsonl"), "--output", &d("la.jsonl"), "--masks", &d("m.jsonl"), "--seed", "42"]);
    assert_eq!(lines(&dir.path().join("la.jsonl")), 3);

    ok(&[
        "generate-cra", "--seeds", &fx("seeds.jsonl"), "--registry", &fx("registry.json"),
        "--client", "replay", "--replay-file", &fx("replay.jsonl"),
        "--output", &d("dialogues.jsonl"), "--samples", &d("cra.jsonl"),
    ]);
    assert_eq!(lines(&dir.path().join("dialogues.jsonl")), 2);
    assert_eq!(lines(&dir.path().join("cra.jsonl")), 11);

    ok(&["validate", "--dialogues", &d("dialogues.jsonl"), "--registry", &fx("registry.json"), "--output", &d("v.jsonl")]);
    assert_eq!(lines(&dir.path().join("v.jsonl")), 2);

    ok(&[
        "mix", "--source", &format!("tod={}", d("tod.jsonl")), "--source", &format!("la={}", d("la.jsonl")),
        "--source", &format!("cra={}", d("cra.jsonl")), "--seed", "42", "--output", &d("dataset.jsonl"),
    ]);
    assert_eq!(lines(&dir.path().join("dataset.jsonl")), 19);
    assert_eq!(lines(&dir.path().join("dataset.meta.jsonl")), 19);

    // Same config, same seeds: the stepwise dataset equals the pipeline's.
    ok(&["--config", &fx("pipeline.toml"), "run", "--out-dir", &d("run")]);
    assert_eq!(
        std::fs::read(dir.path().join("dataset.jsonl")).unwrap(),
        std::fs::read(dir.path().join("run/dataset.jsonl")).unwrap()
    );

    let table = ok(&["stats", "--dataset", &d("dataset.jsonl"), "--json", &d("stats.json")]);
    assert!(table.contains("Total"), "{table}");
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["total"]["sample_count"], 19);
}

#[test]
fn eval_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("records.jsonl");
    std::fs::write(
        &input,
        concat!(
            r#"{"id": "1", "gold": {"text": "the cat"}, "predicted": {"text": "the cat sat"}}"#, "\n",
            r#"{"id": "2", "gold": {"calls": [{"name": "f", "arguments": {"x": 1}}]}, "predicted": {"calls": [{"name": "f", "arguments": {"x": 1.0}}]}}"#, "\n",
        ),
    )
    .unwrap();
    let o = agentdial(&["eval", "--input", input.to_str().unwrap(), "--metric", "rouge-l"]);
    // Record 2 has call payloads, which rouge cannot score.
    assert!(!o.status.success());
    std::fs::write(
        &input,
        r#"{"id": "1", "gold": {"text": "the cat"}, "predicted": {"text": "the cat sat"}}"#,
    )
    .unwrap();
    let out = ok(&["eval", "--input", input.to_str().unwrap(), "--metric", "rouge-l", "--metric", "bleu4"]);
    assert!(out.contains("rouge-l") && out.contains("0.8000"), "{out}");
}

#[test]
fn declared_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    // Missing registry: config validation fails before any output is written.
    let cfg = std::fs::read_to_string(fixtures().join("pipeline.toml")).unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, cfg.replace("registry = \"registry.json\"", "registry = \"missing.json\"")).unwrap();
    let o = agentdial(&["--config", bad.to_str().unwrap(), "run", "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("registry"));
    assert!(!dir.path().join("o").exists());

    // Unknown metric, missing input, bad mask probability, run without config.
    assert!(!agentdial(&["eval", "--input", "nope.jsonl"]).status.success());
    assert!(!agentdial(&["transform-dst", "--output", "x.jsonl"]).status.success());
    assert!(!agentdial(&["transform-fc", "--input", &fx("fc.jsonl"), "--output", "/dev/null", "--mask-probability", "2"])
        .status
        .success());
    assert!(!agentdial(&["run"]).status.success());
}

#[test]
fn config_supplies_subcommand_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tod.jsonl");
    ok(&["--config", &fx("pipeline.toml"), "transform-dst", "--output", out.to_str().unwrap()]);
    assert_eq!(lines(&out), 5);
}
