//! End-to-end runs of the `mmgraph` binary.

use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

fn mmgraph(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmgraph"))
        .arg("--artifact-dir")
        .arg(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// A trained toy corpus, built once through the CLI.
fn corpus() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let images = d.join("images.jsonl");
        let images = images.to_str().unwrap();
        ok(mmgraph(
            d,
            &[
                "synth",
                "--output",
                images,
                "--per-cluster",
                "10",
                "--dim",
                "32",
                "--seed",
                "2",
            ],
        ));
        ok(mmgraph(d, &["build-graph", "--input", images]));
        ok(mmgraph(
            d,
            &[
                "train",
                "--epochs",
                "1",
                "--hidden",
                "16,16",
                "--fanouts",
                "5,3",
                "--walks",
                "5",
                "--seed",
                "2",
            ],
        ));
        ok(mmgraph(d, &["embed"]));
        dir
    })
    .path()
}

fn fixture_judgments(path: &Path) {
    let counts = [
        ("excellent", 2164),
        ("good", 8955),
        ("acceptable", 2601),
        ("unacceptable", 1275),
    ];
    let mut csv = String::from("query_id,rank,label\n");
    let labels = counts.iter().flat_map(|&(l, n)| std::iter::repeat_n(l, n));
    for (i, label) in labels.enumerate() {
        csv.push_str(&format!("q{},{},{label}\n", i / 5, i % 5 + 1));
    }
    std::fs::write(path, csv).unwrap();
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmgraph(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmgraph(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("build-graph"));
}

#[test]
fn out_of_range_weight_is_a_usage_error() {
    let out = mmgraph(corpus(), &["query", "--image-key", "a00", "--visual-weight", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn conflicting_image_sources_are_a_usage_error() {
    let out = mmgraph(corpus(), &["query", "--image-key", "a00", "--feature-file", "f.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_artifacts_are_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmgraph(dir.path(), &["query", "--tags", "alpha", "--visual-weight", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("graph.mmgf"));
}

#[test]
fn tags_only_query_prints_results() {
    let stdout = ok(mmgraph(corpus(), &["query", "--tags", "alpha", "--visual-weight", "0"]));
    let v: Value = serde_json::from_str(&stdout).unwrap();
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 5);
    assert!(results.iter().all(|r| r["key"].is_string() && r["score"].is_number()));
    assert_eq!(v["effective_weights"]["w1"], 0.0);
    assert_eq!(v["effective_weights"]["w2"], 1.0);
}

#[test]
fn unresolvable_tags_are_a_data_error() {
    let out = mmgraph(corpus(), &["query", "--tags", "zebra", "--visual-weight", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn image_query_excludes_the_query_image() {
    let stdout = ok(mmgraph(corpus(), &["query", "--image-key", "b01", "--k", "3"]));
    let v: Value = serde_json::from_str(&stdout).unwrap();
    let keys: Vec<&str> = v["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["key"].as_str().unwrap())
        .collect();
    assert_eq!(keys.len(), 3);
    assert!(!keys.contains(&"b01"));
}

#[test]
fn feature_file_query_and_tag_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let feature = dir.path().join("f.json");
    let mut f = vec![0.0f32; 32];
    f[..16].fill(3.0);
    std::fs::write(&feature, serde_json::to_string(&f).unwrap()).unwrap();
    let feature = feature.to_str().unwrap();

    let stdout = ok(mmgraph(corpus(), &["query", "--feature-file", feature, "--k", "4"]));
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["results"].as_array().unwrap().len(), 4);

    let stdout = ok(mmgraph(
        corpus(),
        &["predict-tags", "--feature-file", feature, "--k", "1"],
    ));
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["tags"].as_array().unwrap().len(), 1);

    let stdout = ok(mmgraph(corpus(), &["predict-tags", "--image-key", "a03", "--k", "3"]));
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["image_key"], "a03");
    assert!(v["tags"].as_array().unwrap().len() <= 3);
}

#[test]
fn eval_reproduces_fixture_percentages() {
    let dir = tempfile::tempdir().unwrap();
    let judgments = dir.path().join("judgments.csv");
    fixture_judgments(&judgments);
    let report = dir.path().join("report.json");
    ok(mmgraph(
        dir.path(),
        &[
            "eval",
            "--judgments",
            judgments.to_str().unwrap(),
            "--output",
            report.to_str().unwrap(),
        ],
    ));
    let v: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let pct = &v["percentages"];
    assert_eq!(
        [
            &pct["excellent"],
            &pct["good"],
            &pct["acceptable"],
            &pct["unacceptable"]
        ],
        [14, 60, 17, 9]
    );
    assert_eq!(v["counts"]["good"], 8955);
    assert_eq!(v["gain_scheme"], "exponential");
    assert!(v["ndcg"]["3"].is_number() && v["ndcg"]["5"].is_number());
    assert_eq!(v["per_query"].as_array().unwrap().len(), 2999);
}

#[test]
fn eval_rejects_a_malformed_judgments_file() {
    let dir = tempfile::tempdir().unwrap();
    let judgments = dir.path().join("judgments.csv");
    std::fs::write(&judgments, "query_id,rank,label\nq1,1,superb\n").unwrap();
    let out = mmgraph(dir.path(), &["eval", "--judgments", judgments.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
