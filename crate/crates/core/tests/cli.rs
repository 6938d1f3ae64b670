use std::io::{BufRead, BufReader, Read};
use std::path::PathBuf;
use std::process::{Command, Stdio};

use blade_core::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn blade(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("blade").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn built_index(dir: &std::path::Path) -> String {
    let index = dir.join("index.json");
    let manifest = fixtures().join("sample_course/course.toml");
    let (code, _, err) = blade(&[
        "--no-timestamps",
        "index",
        "build",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        index.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    index.to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(blade(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(blade(&["query"]).0, EXIT_USAGE);
    assert_eq!(blade(&["query", "--index", "x", "--format", "yaml", "q"]).0, EXIT_USAGE);
    let (code, out, _) = blade(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("ingest") && out.contains("study"));
}

#[test]
fn missing_manifest_is_a_data_error_naming_the_path() {
    let (code, _, err) = blade(&["ingest", "--manifest", "missing.toml"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("missing.toml"), "{err}");
}

#[test]
fn ingest_dump_is_one_record_per_unit() {
    let manifest = fixtures().join("sample_course/course.toml");
    let (code, out, _) = blade(&["ingest", "--manifest", manifest.to_str().unwrap(), "--dump"]);
    assert_eq!(code, EXIT_OK);
    let records: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 63);
    assert!(records.iter().all(|r| r["id"].is_string() && r["locator"].is_object()));
}

#[test]
fn index_query_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let index = built_index(dir.path());
    let (code, text, _) = blade(&["query", "--index", &index, "what is jaccard similarity"]);
    assert_eq!(code, EXIT_OK);
    assert!(text.contains("Sources:"));
    assert!(text.lines().any(|l| l.trim_start().starts_with('[') && l.contains("Lecture 7, 00:")), "{text}");

    let (code, records, _) = blade(&["query", "--index", &index, "--format", "records", "what is jaccard similarity"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<serde_json::Value> = records.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["record"], "response");
    assert!(lines.len() >= 2);
    assert!(lines[1..].iter().all(|c| c["record"] == "citation" && c["display_label"].is_string()));

    // a rebuilt index answers identically
    let again = tempfile::tempdir().unwrap();
    let index2 = built_index(again.path());
    assert_eq!(std::fs::read(&index).unwrap(), std::fs::read(&index2).unwrap());
    assert_eq!(blade(&["query", "--index", &index2, "what is jaccard similarity"]).1, text);

    assert_eq!(blade(&["query", "--index", &index, "?!"]).0, EXIT_DATA);
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let index = built_index(dir.path());
    let triples = fixtures().join("sample_triples.jsonl");
    let weights = dir.path().join("w.json");
    let (code, out, err) = blade(&[
        "index",
        "train",
        "--index",
        &index,
        "--triples",
        triples.to_str().unwrap(),
        "--out",
        weights.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.starts_with("trained on 24 triples"));
    let (code, out, _) = blade(&[
        "index",
        "eval",
        "--index",
        &index,
        "--triples",
        triples.to_str().unwrap(),
        "--weights",
        weights.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let acc: f64 = out.lines().next().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(acc >= 0.9, "{out}");
}

#[test]
fn study_simulate_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("records");
    let out_dir = dir.path().join("out");
    let (code, _, err) = blade(&["study", "simulate", "--seed", "11", "--students", "60", "--out", records.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let (code, out, err) = blade(&["study", "analyze", "--records", records.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.starts_with("60 students"));
    for f in blade_core::study::ANALYSIS_FILES {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let (code, _, _) = blade(&["study", "analyze", "--records", records.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--upper", "0.9"]);
    assert_eq!(code, EXIT_DATA);
}

#[test]
fn bundled_service_config_parses() {
    let cfg = blade_core::service::ServiceConfig::load(&fixtures().join("serve.toml")).unwrap();
    assert!(cfg.manifest.is_file());
}

#[test]
fn serve_binary_answers_health_and_fails_on_bad_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixtures().join("sample_course/course.toml");
    let config = dir.path().join("serve.toml");
    std::fs::write(
        &config,
        format!("listen = \"127.0.0.1:9\"\nmanifest = {:?}\nlog_dir = \"logs\"\n", manifest.to_str().unwrap()),
    )
    .unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_blade"))
        .args(["serve", "--config", config.to_str().unwrap(), "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect(&line).to_string();
    let mut body = String::new();
    ureq::get(&format!("{url}/health"))
        .call()
        .unwrap()
        .into_body()
        .into_reader()
        .read_to_string(&mut body)
        .unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(body.contains("\"units\":63"), "{body}");
    assert!(dir.path().join("logs/sessions.jsonl").exists());

    std::fs::write(&config, "manifest = \"nowhere.toml\"\nlog_dir = \"logs\"\n").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_blade"))
        .args(["serve", "--config", config.to_str().unwrap()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_DATA));
}
