use std::path::{Path, PathBuf};

use blade_core::service::{read_log, LogEvent, Server, ServiceConfig, INTERACTIONS_FILE};
use serde_json::{json, Value};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample_course")
}

/// Copy of the sample course that a test may modify.
fn course_copy(dir: &Path) -> PathBuf {
    let course = dir.join("course");
    std::fs::create_dir_all(&course).unwrap();
    for entry in std::fs::read_dir(fixture_dir()).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), course.join(entry.file_name())).unwrap();
    }
    course.join("course.toml")
}

struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    fn new(server: &Server) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Client { base: server.url(), agent }
    }

    fn read(mut r: ureq::http::Response<ureq::Body>) -> (u16, Value) {
        let status = r.status().as_u16();
        let text = r.body_mut().read_to_string().unwrap();
        (status, if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap_or(Value::String(text)) })
    }

    fn get(&self, path: &str) -> (u16, Value) {
        Self::read(self.agent.get(&format!("{}{}", self.base, path)).call().unwrap())
    }

    fn get_text(&self, path: &str) -> String {
        let mut r = self.agent.get(&format!("{}{}", self.base, path)).call().unwrap();
        r.body_mut().read_to_string().unwrap()
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        Self::read(self.agent.post(&format!("{}{}", self.base, path)).send_json(&body).unwrap())
    }

    fn session(&self, config: &str) -> String {
        let (status, v) = self.post("/sessions", json!({"course_id": "cs-data-mining", "module_tag": "week7", "config": config}));
        assert_eq!(status, 201, "{v}");
        v["session_id"].as_str().unwrap().to_string()
    }
}

#[test]
fn message_flow_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(ServiceConfig::new(course_copy(dir.path()), dir.path().join("logs"))).unwrap();
    let c = Client::new(&server);

    let (status, health) = c.get("/health");
    assert_eq!(status, 200);
    assert_eq!(health["status"], "ok");
    assert_eq!(health["units"], 63);

    let id = c.session("B");
    let (status, reply) = c.post(&format!("/sessions/{id}/messages"), json!({"text": "what is jaccard similarity"}));
    assert_eq!(status, 200, "{reply}");
    assert_eq!(reply["no_results"], false);
    let cites = reply["citations"].as_array().unwrap();
    assert!(!cites.is_empty());
    for cite in cites {
        for field in ["unit_id", "display_label", "excerpt"] {
            assert!(cite[field].is_string(), "{cite}");
        }
        let unit_path = format!("/units/{}", cite["unit_id"].as_str().unwrap().replace('#', "%23"));
        let (status, unit) = c.get(&unit_path);
        assert_eq!(status, 200);
        assert!(unit["text"].as_str().unwrap().contains(cite["excerpt"].as_str().unwrap()));
        assert_eq!(unit["display_label"], cite["display_label"]);
    }

    let (status, _) = c.post("/sessions/nope/messages", json!({"text": "jaccard"}));
    assert_eq!(status, 404);
    let (status, _) = c.post(&format!("/sessions/{id}/messages"), json!({"text": "  ?? "}));
    assert_eq!(status, 400);
    let (status, _) = c.post("/sessions", json!({"course_id": "other", "config": "A"}));
    assert_eq!(status, 400);

    let first = cites[0]["unit_id"].as_str().unwrap();
    let (status, body) = c.post(&format!("/sessions/{id}/events"), json!({"event": "citation_click", "unit_id": first}));
    assert_eq!((status, body), (204, Value::Null));
    let (status, _) = c.post(&format!("/sessions/{id}/events"), json!({"event": "scroll", "unit_id": first}));
    assert_eq!(status, 400);

    let (status, transcript) = c.get(&format!("/sessions/{id}"));
    assert_eq!(status, 200);
    assert_eq!(transcript["turns"].as_array().unwrap().len(), 2);
    assert_eq!(c.get("/sessions/nope").0, 404);
}

#[test]
fn configuration_gating() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(ServiceConfig::new(course_copy(dir.path()), dir.path().join("logs"))).unwrap();
    let c = Client::new(&server);
    let a = c.session("A");
    let b = c.session("B");
    let cc = c.session("C");
    let ask = |s: &str| c.post(&format!("/sessions/{s}/messages"), json!({"text": "minhash signatures"})).0;
    assert_eq!(ask(&a), 200);
    assert_eq!(ask(&b), 200);
    assert_eq!(ask(&cc), 403);
    let browse = |s: &str| c.get(&format!("/resources?session={s}")).0;
    assert_eq!(browse(&a), 403);
    assert_eq!(browse(&b), 200);
    assert_eq!(browse(&cc), 200);
    assert_eq!(c.get(&format!("/resources/text3?session={a}")).0, 403);
    let (status, res) = c.get(&format!("/resources/lec7?session={cc}"));
    assert_eq!(status, 200);
    assert!(res["units"][0]["display_label"].as_str().unwrap().starts_with("Lecture 7, 00:"));
    assert_eq!(c.get("/resources").1.as_array().unwrap().len(), 3);
}

#[test]
fn hundred_messages_give_two_hundred_log_entries() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("logs");
    let server = Server::start(ServiceConfig::new(course_copy(dir.path()), &logs)).unwrap();
    let c = Client::new(&server);
    let id = c.session("A");
    let other = c.session("B");
    c.post(&format!("/sessions/{other}/messages"), json!({"text": "cosine"}));
    for i in 0..100 {
        let (status, _) = c.post(&format!("/sessions/{id}/messages"), json!({"text": format!("question {i} about shingles")}));
        assert_eq!(status, 200);
    }
    server.shutdown().unwrap();
    let entries = read_log(&logs.join(INTERACTIONS_FILE)).unwrap();
    let mine: Vec<_> = entries.iter().filter(|e| e.session_id == id).collect();
    assert_eq!(mine.len(), 200);
    assert_eq!(mine.iter().filter(|e| e.event == LogEvent::Query).count(), 100);
    assert!(mine.windows(2).all(|w| w[0].ts_ms < w[1].ts_ms));
}

#[test]
fn reindex_failure_keeps_live_index() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = course_copy(dir.path());
    let server = Server::start(ServiceConfig::new(&manifest, dir.path().join("logs"))).unwrap();
    let c = Client::new(&server);

    let broken = manifest.with_file_name("broken.toml");
    std::fs::write(&broken, "course_id = \"x\"\n[[resources]]\nid = \"a\"\n").unwrap();
    let (status, _) = c.post("/admin/reindex", json!({"manifest": broken}));
    assert_eq!(status, 422);
    assert_eq!(c.get("/health").1["units"], 63);
    assert_eq!(c.get("/health").1["index_generation"], 1);

    let mut text = std::fs::read_to_string(&manifest).unwrap();
    std::fs::write(manifest.with_file_name("extra.md"), "# Extra\n\nA short note on edit distance between strings.\n").unwrap();
    text.push_str("\n[[resources]]\nid = \"extra\"\ntitle = \"Extra note\"\nkind = \"reading\"\nmodule_tag = \"week7\"\npath = \"extra.md\"\n");
    std::fs::write(&manifest, text).unwrap();
    let (status, v) = c.post("/admin/reindex", Value::Null);
    assert_eq!(status, 200, "{v}");
    assert_eq!(v["units"], 64);
    assert_eq!(c.get("/health").1["index_generation"], 2);
}

#[test]
fn restart_preserves_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = course_copy(dir.path());
    let logs = dir.path().join("logs");
    let (ids, before) = {
        let server = Server::start(ServiceConfig::new(&manifest, &logs)).unwrap();
        let c = Client::new(&server);
        let ids: Vec<String> = ["A", "B"].iter().map(|cfg| c.session(cfg)).collect();
        for (i, q) in ["jaccard of two sets", "what does locality sensitive hashing do", "zzqx"].iter().enumerate() {
            c.post(&format!("/sessions/{}/messages", ids[i % 2]), json!({"text": q}));
        }
        let before: Vec<String> = ids.iter().map(|id| c.get_text(&format!("/sessions/{id}"))).collect();
        server.shutdown().unwrap();
        (ids, before)
    };
    let server = Server::start(ServiceConfig::new(&manifest, &logs)).unwrap();
    let c = Client::new(&server);
    let after: Vec<String> = ids.iter().map(|id| c.get_text(&format!("/sessions/{id}"))).collect();
    assert_eq!(before, after);
}
