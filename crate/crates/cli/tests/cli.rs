use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use timeline_core::pipeline::{Stage, STAGES};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn timeline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timeline")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(args: &[&str]) {
    let out = timeline(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_golden(out: &Path) {
    ok(&["run", "--config", s(&data("pipeline.toml")), "--out-dir", s(out)]);
}

#[test]
fn subcommands_reproduce_the_full_run() {
    let full = tempfile::tempdir().unwrap();
    run_golden(full.path());

    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    ok(&["fetch", "--source", s(&data("synthetic_posts.jsonl")), "--flair", "Tested Positive - Me", "Tested Positive", "--out", s(&p("posts.jsonl"))]);
    ok(&["annotate", "--in", s(&p("posts.jsonl")), "--out", s(&p("segments.jsonl")), "--report", s(&p("report.json")), "--histogram", s(&p("day_histogram.csv"))]);
    ok(&["prep", "--segments", s(&p("segments.jsonl")), "--out", s(&p("corpus.json"))]);
    ok(&["model", "--corpus", s(&p("corpus.json")), "--seed", "42", "--sweeps", "200", "--level", "auto", "--out", s(&p("topics.json")), "--wordclouds", s(&p("wordclouds.json"))]);
    ok(&[
        "sentiment", "--corpus", s(&p("corpus.json")), "--segments", s(&p("segments.jsonl")),
        "--lexicon", s(&data("toy_emolex.txt")), "--exclude", "feeling,positive,negative", "--out", s(&p("sentiment.csv")),
    ]);
    ok(&[
        "series", "--topics", s(&p("topics.json")), "--sentiment", s(&p("sentiment.csv")), "--segments",
        s(&p("segments.jsonl")), "--tmax", "14", "--out", s(&p("series.csv")), "--curves", s(&p("curves.csv")),
    ]);
    ok(&[
        "correlate", "--series", s(&p("series.csv")), "--linkage", "average", "--out-heatmap", s(&p("heatmap.csv")),
        "--out-tree", s(&p("tree.json")), "--out-mds", s(&p("mds.csv")),
    ]);
    for name in STAGES.iter().flat_map(|st| st.outputs()) {
        let a = std::fs::read(full.path().join(name)).unwrap();
        let b = std::fs::read(p(name)).unwrap();
        assert!(a == b, "{name} differs between run and subcommands");
    }
}

#[test]
fn run_matches_committed_golden_files() {
    let out = tempfile::tempdir().unwrap();
    run_golden(out.path());
    for name in STAGES.iter().flat_map(|st| st.outputs()) {
        let got = std::fs::read_to_string(out.path().join(name)).unwrap();
        let want = std::fs::read_to_string(data("golden").join(name)).unwrap();
        assert!(got == want, "{name} differs from data/golden/{name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["model"]["seed"], 42);
    assert_eq!(manifest["config"]["t_max"], 14);
    assert!(manifest["failed_stage"].is_null());
}

#[test]
fn missing_lexicon_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = timeline(&[
        "run", "--config", s(&data("pipeline.toml")), "--out-dir", s(&dir.path().join("o")),
        "--lexicon", s(&dir.path().join("absent.txt")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lexicon"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unannotatable_corpus_stops_after_annotation() {
    let dir = tempfile::tempdir().unwrap();
    let snapshot = dir.path().join("posts.jsonl");
    std::fs::write(
        &snapshot,
        "{\"id\":\"a\",\"author\":\"u\",\"link_flair_text\":\"Tested Positive\",\"title\":\"hi\",\"selftext\":\"just tired\",\"created_utc\":1}\n",
    )
    .unwrap();
    let out = timeline(&[
        "run", "--config", s(&data("pipeline.toml")), "--out-dir", s(&dir.path().join("o")), "--source", s(&snapshot),
    ]);
    assert_eq!(out.status.code(), Some(Stage::Annotate.exit_code()));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no documents"));
    let manifest = std::fs::read_to_string(dir.path().join("o/manifest.json")).unwrap();
    assert!(manifest.contains("\"failed_stage\": \"annotate\""));
    assert!(!dir.path().join("o/corpus.json").exists());

    let direct = timeline(&["annotate", "--in", s(&snapshot), "--out", s(&dir.path().join("seg.jsonl")), "--report", s(&dir.path().join("r.json"))]);
    assert_eq!(direct.status.code(), Some(11));
}

#[test]
fn each_stage_reports_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "not,a,valid\nfile\n").unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    let (bad, x, y) = (s(&bad).to_string(), p("x"), p("y"));
    let (missing, ha, tr, md) = (p("missing.jsonl"), p("a"), p("b"), p("c"));
    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["fetch", "--source", &missing, "--out", &x], 10),
        (vec!["prep", "--segments", &bad, "--out", &x], 12),
        (vec!["model", "--corpus", &bad, "--out", &x], 13),
        (vec!["sentiment", "--corpus", &bad, "--segments", &bad, "--lexicon", &bad, "--out", &x], 14),
        (vec!["series", "--topics", &bad, "--sentiment", &bad, "--segments", &bad, "--out", &x, "--curves", &y], 15),
        (vec!["correlate", "--series", &bad, "--out-heatmap", &ha, "--out-tree", &tr, "--out-mds", &md], 16),
        (vec!["model", "--corpus", &bad, "--sweeps", "0", "--out", &x], 2),
        (vec!["correlate", "--bogus"], 2),
    ];
    for (args, code) in cases {
        let out = timeline(&args);
        assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn model_rejects_a_level_beyond_the_hierarchy() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    std::fs::copy(data("golden/corpus.json"), p("corpus.json")).unwrap();
    let out = timeline(&["model", "--corpus", s(&p("corpus.json")), "--sweeps", "5", "--level", "40", "--out", s(&p("t.json"))]);
    assert_eq!(out.status.code(), Some(13));
    assert!(String::from_utf8_lossy(&out.stderr).contains("level"));
}

#[test]
fn fetch_filters_flairs_from_a_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("kept.jsonl");
    ok(&["fetch", "--source", s(&data("synthetic_posts.jsonl")), "--flair", "Tested Positive", "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["link_flair_text"], "Tested Positive");
        assert_ne!(v["selftext"], "[removed]");
    }
}
