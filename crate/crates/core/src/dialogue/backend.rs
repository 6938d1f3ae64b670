use std::sync::{Arc, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::citation::Citation;
use super::compose::{compose_template_response, ComposeRequest, Draft, DraftOrigin};
use super::templates::TemplateSet;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("malformed backend response: {0}")]
    BadResponse(String),
    #[error("{0}")]
    Compose(String),
}

pub trait GenerationBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn compose(&self, req: &ComposeRequest<'_>) -> Result<Draft, BackendError>;
}

/// Built-in deterministic composer.
#[derive(Debug, Clone, Default)]
pub struct TemplateBackend {
    templates: Arc<TemplateSet>,
}

impl TemplateBackend {
    pub fn new(templates: Arc<TemplateSet>) -> Self {
        TemplateBackend { templates }
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }
}

impl GenerationBackend for TemplateBackend {
    fn name(&self) -> &'static str {
        "template"
    }

    fn compose(&self, req: &ComposeRequest<'_>) -> Result<Draft, BackendError> {
        compose_template_response(req, &self.templates).map_err(|e| BackendError::Compose(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Full URL of the chat-completion endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub token: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

fn default_timeout() -> f64 {
    10.0
}

/// Client for an external chat-completion service.
///
/// The model is shown the passages with `[cite:UNIT_ID]` tags and may answer
/// either with plain text carrying those tags, or with a JSON object
/// `{"text": ..., "citations": [{"unit_id": ..., "excerpt": ...}]}`.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

const SYSTEM_PROMPT: &str = "You are a course assistant. Never state final answers or solutions. \
Point the student to the quoted course passages, say what to look for in them, and end with a guiding question. \
Only use wording from the passages. Mark every passage you refer to with its [cite:ID] tag.";

#[derive(Deserialize)]
struct RemoteDraft {
    text: String,
    #[serde(default)]
    citations: Vec<RemoteCitation>,
}

#[derive(Deserialize)]
struct RemoteCitation {
    unit_id: String,
    excerpt: String,
}

fn cite_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s*\[cite:([^\]\s]+)\]").expect("valid regex"))
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        if !(config.timeout_s.is_finite() && config.timeout_s > 0.0) {
            return Err(BackendError::Unavailable(format!("invalid timeout {}", config.timeout_s)));
        }
        if !config.endpoint.starts_with("http://") && !config.endpoint.starts_with("https://") {
            return Err(BackendError::Unavailable(format!("endpoint `{}` is not an http(s) URL", config.endpoint)));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .build()
            .into();
        Ok(RemoteBackend { config, agent })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn prompt(req: &ComposeRequest<'_>) -> String {
        let mut out = format!("Student question: {}\n\nPassages:\n", req.query);
        for p in req.passages {
            out.push_str(&format!(
                "[cite:{}] {}: \"{}\"\n",
                p.citation.unit_id, p.citation.display_label, p.citation.excerpt
            ));
        }
        out
    }

    /// Turn the model's message into a draft. Citation labels are taken from
    /// the request where the unit was offered, otherwise left as the id.
    pub fn parse_content(content: &str, req: &ComposeRequest<'_>) -> Draft {
        let label_for = |id: &str| {
            req.passages
                .iter()
                .find(|p| p.citation.unit_id == id)
                .map(|p| p.citation.display_label.clone())
                .unwrap_or_else(|| id.to_string())
        };
        if let Ok(d) = serde_json::from_str::<RemoteDraft>(content.trim()) {
            return Draft {
                text: cite_marker().replace_all(&d.text, "").into_owned(),
                citations: d
                    .citations
                    .into_iter()
                    .map(|c| Citation {
                        display_label: label_for(&c.unit_id),
                        unit_id: c.unit_id,
                        excerpt: c.excerpt,
                    })
                    .collect(),
                origin: DraftOrigin::Remote,
            };
        }
        let mut citations: Vec<Citation> = Vec::new();
        for m in cite_marker().captures_iter(content) {
            let id = &m[1];
            if citations.iter().any(|c| c.unit_id == id) {
                continue;
            }
            let c = req
                .passages
                .iter()
                .find(|p| p.citation.unit_id == id)
                .map(|p| p.citation.clone())
                .unwrap_or_else(|| Citation {
                    unit_id: id.to_string(),
                    display_label: id.to_string(),
                    excerpt: String::new(),
                });
            citations.push(c);
        }
        Draft {
            text: cite_marker().replace_all(content, "").trim().to_string(),
            citations,
            origin: DraftOrigin::Remote,
        }
    }
}

impl GenerationBackend for RemoteBackend {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn compose(&self, req: &ComposeRequest<'_>) -> Result<Draft, BackendError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": Self::prompt(req)},
            ],
        });
        let mut call = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(token) = &self.config.token {
            call = call.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = call.send(body.to_string()).map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let value: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| BackendError::BadResponse("missing choices[0].message.content".into()))?;
        Ok(Self::parse_content(content, req))
    }
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    use super::*;
    use crate::dialogue::compose::Passage;
    use crate::dialogue::ResponsePolicy;
    use crate::index::test_support::corpus_from_texts;

    /// Serve one canned HTTP response and hand back the request body.
    fn one_shot(status: &str, body: String) -> (String, std::thread::JoinHandle<(String, String)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let status = status.to_string();
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut req_body = vec![0; len];
            reader.read_exact(&mut req_body).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            (headers, String::from_utf8(req_body).unwrap())
        });
        (format!("http://{addr}/v1/chat/completions"), handle)
    }

    #[test]
    fn remote_round_trip() {
        let corpus = corpus_from_texts(&["The Jaccard index compares two sets."], 1);
        let unit = &corpus.units[0];
        let ps = vec![Passage {
            unit,
            citation: Citation {
                unit_id: unit.id.clone(),
                display_label: "Notes".into(),
                excerpt: unit.text.clone(),
            },
        }];
        let policy = ResponsePolicy::default();
        let req = ComposeRequest {
            query: "jaccard",
            topic: None,
            passages: &ps,
            policy: &policy,
        };
        let content = format!("The Jaccard index compares two sets. [cite:{}]", unit.id);
        let reply = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]});
        let (url, handle) = one_shot("200 OK", reply.to_string());
        let backend = RemoteBackend::new(RemoteConfig {
            endpoint: url,
            model: "m".into(),
            token: Some("secret".into()),
            timeout_s: 5.0,
        })
        .unwrap();
        let draft = backend.compose(&req).unwrap();
        let (headers, body) = handle.join().unwrap();
        assert!(headers.to_ascii_lowercase().contains("authorization: bearer secret"));
        assert!(body.contains("\"model\":\"m\""));
        assert_eq!(draft.text, "The Jaccard index compares two sets.");
        assert_eq!(draft.citations, vec![ps[0].citation.clone()]);
    }

    #[test]
    fn remote_errors_surface() {
        let (url, handle) = one_shot("500 Internal Server Error", "{}".into());
        let backend = RemoteBackend::new(RemoteConfig {
            endpoint: url,
            model: "m".into(),
            token: None,
            timeout_s: 5.0,
        })
        .unwrap();
        let corpus = corpus_from_texts(&["x y z."], 1);
        let ps = vec![Passage {
            unit: &corpus.units[0],
            citation: Citation {
                unit_id: corpus.units[0].id.clone(),
                display_label: "a".into(),
                excerpt: "x".into(),
            },
        }];
        let policy = ResponsePolicy::default();
        let req = ComposeRequest {
            query: "x",
            topic: None,
            passages: &ps,
            policy: &policy,
        };
        assert!(matches!(backend.compose(&req), Err(BackendError::Unavailable(_))));
        handle.join().unwrap();
        assert!(RemoteBackend::new(RemoteConfig {
            endpoint: "ftp://x".into(),
            model: "m".into(),
            token: None,
            timeout_s: 1.0
        })
        .is_err());
    }

    #[test]
    fn json_content_is_parsed() {
        let corpus = corpus_from_texts(&["a b c."], 1);
        let policy = ResponsePolicy::default();
        let req = ComposeRequest {
            query: "x",
            topic: None,
            passages: &[],
            policy: &policy,
        };
        let d = RemoteBackend::parse_content(
            &format!(r#"{{"text": "Read it.", "citations": [{{"unit_id": "{}", "excerpt": "a b"}}]}}"#, corpus.units[0].id),
            &req,
        );
        assert_eq!(d.text, "Read it.");
        assert_eq!(d.citations[0].excerpt, "a b");
    }
}
