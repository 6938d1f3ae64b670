//! HTTP service: sessions, interaction log, resource browsing and reindexing.

mod http;
mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{router, Server};
pub use store::{read_log, replay, InteractionLogEntry, JsonlFile, LogEvent, StoreRecord};

use crate::corpus::{build_corpus, parse_manifest, CorpusError};
use crate::dialogue::{
    answer_query, AnswerContext, Citation, DialogueError, GenerationBackend, RemoteBackend, RemoteConfig,
    ResponsePolicy, Session, TemplateBackend, TemplateSet,
};
use crate::index::{build_index, CorpusIndex, HashingEmbedder, IndexError, KindPrior, RankerWeights};
use crate::study::ResourceConfigId;

pub const SESSIONS_FILE: &str = "sessions.jsonl";
pub const INTERACTIONS_FILE: &str = "interactions.jsonl";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid service config: {0}")]
    Config(String),
    #[error("cannot load corpus: {0}")]
    CorpusLoad(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {reason}", path.display())]
    Corrupt { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Template,
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub manifest: PathBuf,
    /// Persisted index; built from the manifest and written here when absent.
    #[serde(default)]
    pub index: Option<PathBuf>,
    #[serde(default)]
    pub weights: Option<PathBuf>,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    pub log_dir: PathBuf,
    #[serde(default = "default_backend")]
    pub backend: BackendConfig,
    #[serde(default)]
    pub policy: ResponsePolicy,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_backend() -> BackendConfig {
    BackendConfig::Template
}

pub const ENV_LISTEN: &str = "BLADE_LISTEN";
pub const ENV_BACKEND_TOKEN: &str = "BLADE_BACKEND_TOKEN";

impl ServiceConfig {
    /// Minimal config for a manifest and a log directory.
    pub fn new(manifest: impl Into<PathBuf>, log_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            listen: "127.0.0.1:0".into(),
            manifest: manifest.into(),
            index: None,
            weights: None,
            templates: None,
            log_dir: log_dir.into(),
            backend: BackendConfig::Template,
            policy: ResponsePolicy::default(),
        }
    }

    /// Parse a TOML config. Relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let src = std::fs::read_to_string(path).map_err(|source| ServiceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ServiceConfig =
            toml::from_str(&src).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.manifest);
        resolve(&mut cfg.log_dir);
        for p in [&mut cfg.index, &mut cfg.weights, &mut cfg.templates].into_iter().flatten() {
            resolve(p);
        }
        Ok(cfg)
    }

    /// Apply `BLADE_LISTEN` and `BLADE_BACKEND_TOKEN`.
    pub fn apply_env(&mut self) {
        self.apply_overrides(std::env::var(ENV_LISTEN).ok(), std::env::var(ENV_BACKEND_TOKEN).ok());
    }

    pub fn apply_overrides(&mut self, listen: Option<String>, token: Option<String>) {
        if let Some(l) = listen.filter(|l| !l.is_empty()) {
            self.listen = l;
        }
        if let (Some(t), BackendConfig::Remote(r)) = (token.filter(|t| !t.is_empty()), &mut self.backend) {
            r.token = Some(t);
        }
    }
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Everything a request reads, swapped as a whole on reindex.
pub struct Engine {
    pub generation: u64,
    pub index: CorpusIndex,
    pub embedder: HashingEmbedder,
    pub weights: RankerWeights,
    pub policy: ResponsePolicy,
    pub templates: Arc<TemplateSet>,
    pub backend: Arc<dyn GenerationBackend>,
    pub kind_prior: KindPrior,
}

impl Engine {
    pub fn context(&self) -> AnswerContext<'_> {
        AnswerContext {
            index: &self.index,
            embedder: &self.embedder,
            weights: &self.weights,
            policy: &self.policy,
            templates: &self.templates,
            backend: self.backend.as_ref(),
            kind_prior: &self.kind_prior,
        }
    }
}

fn build_backend(cfg: &BackendConfig, templates: &Arc<TemplateSet>) -> Result<Arc<dyn GenerationBackend>, ServiceError> {
    Ok(match cfg {
        BackendConfig::Template => Arc::new(TemplateBackend::new(templates.clone())),
        BackendConfig::Remote(r) => {
            Arc::new(RemoteBackend::new(r.clone()).map_err(|e| ServiceError::Config(e.to_string()))?)
        }
    })
}

/// Build the corpus from `manifest` and index it.
pub fn index_manifest(manifest: &Path, embedder: &HashingEmbedder) -> Result<CorpusIndex, ServiceError> {
    let manifest = parse_manifest(manifest)?;
    let corpus = build_corpus(&manifest)?;
    Ok(build_index(corpus, embedder, now_ms() / 1000)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageReply {
    pub text: String,
    pub citations: Vec<Citation>,
    pub no_results: bool,
    pub index_generation: u64,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

/// Errors reported to HTTP clients.
#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("internal error: {0}")]
    Internal(String),
}

struct Logs {
    store: JsonlFile,
    interactions: JsonlFile,
    last_ts: u64,
}

/// Shared state of a running service.
pub struct App {
    config: ServiceConfig,
    engine: RwLock<Arc<Engine>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    logs: Mutex<Logs>,
    reindex_lock: Mutex<()>,
    counter: AtomicU64,
}

impl App {
    /// Load or build the index, recover sessions and open the logs.
    pub fn open(config: ServiceConfig) -> Result<Arc<App>, ServiceError> {
        config
            .listen
            .parse::<SocketAddr>()
            .map_err(|e| ServiceError::Config(format!("listen address `{}`: {e}", config.listen)))?;
        let embedder = HashingEmbedder::default();
        // validates the manifest even when a persisted index is used
        let manifest = parse_manifest(&config.manifest)?;
        let index = match &config.index {
            Some(p) if p.exists() => CorpusIndex::load(p, &embedder)?,
            other => {
                let index = build_index(build_corpus(&manifest)?, &embedder, now_ms() / 1000)?;
                if let Some(p) = other {
                    index.save(p)?;
                }
                index
            }
        };
        let templates = Arc::new(match &config.templates {
            Some(p) => TemplateSet::load(p)?,
            None => TemplateSet::default(),
        });
        config.policy.validate(&templates)?;
        let weights = match &config.weights {
            Some(p) => RankerWeights::load(p)?,
            None => RankerWeights::default(),
        };
        let backend = build_backend(&config.backend, &templates)?;

        std::fs::create_dir_all(&config.log_dir).map_err(|source| ServiceError::Io {
            path: config.log_dir.clone(),
            source,
        })?;
        let (records, store) = JsonlFile::open::<StoreRecord>(&config.log_dir.join(SESSIONS_FILE))?;
        let sessions = replay(records).map_err(|reason| ServiceError::Corrupt {
            path: store.path().to_path_buf(),
            line: 0,
            reason,
        })?;
        let (entries, interactions) = JsonlFile::open::<InteractionLogEntry>(&config.log_dir.join(INTERACTIONS_FILE))?;
        let last_ts = entries.iter().map(|e| e.ts_ms).max().unwrap_or(0);
        tracing::info!(units = index.len(), sessions = sessions.len(), "service state loaded");

        Ok(Arc::new(App {
            engine: RwLock::new(Arc::new(Engine {
                generation: 1,
                index,
                embedder,
                weights,
                policy: config.policy.clone(),
                templates,
                backend,
                kind_prior: KindPrior::default(),
            })),
            sessions: RwLock::new(
                sessions
                    .into_iter()
                    .map(|s| (s.id.clone(), Arc::new(Mutex::new(s))))
                    .collect(),
            ),
            logs: Mutex::new(Logs {
                store,
                interactions,
                last_ts,
            }),
            reindex_lock: Mutex::new(()),
            counter: AtomicU64::new(0),
            config,
        }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Current engine. Callers keep the returned generation for the whole request.
    pub fn engine(&self) -> Arc<Engine> {
        self.engine.read().expect("engine lock").clone()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("sessions lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn session_snapshot(&self, id: &str) -> Result<Session, ApiError> {
        Ok(self.session(id)?.lock().expect("session lock").clone())
    }

    pub fn session_config(&self, id: &str) -> Result<ResourceConfigId, ApiError> {
        Ok(self.session(id)?.lock().expect("session lock").config)
    }

    fn log(&self, session_id: &str, event: LogEvent, payload: serde_json::Value) -> Result<(), ApiError> {
        let mut logs = self.logs.lock().expect("log lock");
        let ts_ms = now_ms().max(logs.last_ts + 1);
        logs.last_ts = ts_ms;
        logs.interactions
            .append(&InteractionLogEntry {
                ts_ms,
                session_id: session_id.to_string(),
                event,
                payload,
            })
            .map_err(|e| ApiError::Internal(e.to_string()))
    }

    fn persist(&self, record: &StoreRecord) -> Result<(), ApiError> {
        self.logs
            .lock()
            .expect("log lock")
            .store
            .append(record)
            .map_err(|e| ApiError::Internal(e.to_string()))
    }

    pub fn create_session(
        &self,
        course_id: &str,
        module_tag: Option<String>,
        config: ResourceConfigId,
    ) -> Result<Session, ApiError> {
        let engine = self.engine();
        let course = &engine.index.corpus().course_id;
        if course_id != course {
            return Err(ApiError::BadRequest(format!("unknown course `{course_id}`, this service hosts `{course}`")));
        }
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let now = now_ms();
        let id = format!("s{now:x}-{n:04}-{:08x}", rand::random::<u32>());
        let session = Session::new(id.clone(), course_id, module_tag, config, now);
        self.persist(&StoreRecord::Session {
            session: session.clone(),
        })?;
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(id, Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    /// Answer a student message within a session. The session stays locked
    /// for the whole turn, so its messages are processed one at a time.
    pub fn handle_message(&self, session_id: &str, text: &str) -> Result<MessageReply, ApiError> {
        let handle = self.session(session_id)?;
        let mut session = handle.lock().expect("session lock");
        if !session.config.has_assistant() {
            return Err(ApiError::Forbidden(format!(
                "session uses configuration {} which has no assistant",
                session.config
            )));
        }
        let engine = self.engine();
        let before = session.turns.len();
        let turn = match answer_query(&mut session, text, &engine.context(), now_ms()) {
            Ok(t) => t.clone(),
            Err(e) => {
                let _ = self.log(session_id, LogEvent::Error, serde_json::json!({"query": text, "error": e.to_string()}));
                return Err(match e {
                    DialogueError::EmptyQuery => ApiError::BadRequest(e.to_string()),
                    other => ApiError::Internal(other.to_string()),
                });
            }
        };
        let turns = session.turns[before..].to_vec();
        self.persist(&StoreRecord::Turns {
            session_id: session_id.to_string(),
            turns,
        })?;
        self.log(
            session_id,
            LogEvent::Query,
            serde_json::json!({"text": text, "index_generation": engine.generation}),
        )?;
        let reply = MessageReply {
            text: turn.text,
            citations: turn.citations,
            no_results: turn.no_results,
            index_generation: engine.generation,
            backend: turn.backend.unwrap_or_default(),
            fallback: turn.fallback,
        };
        self.log(session_id, LogEvent::Response, serde_json::to_value(&reply).expect("reply serializes"))?;
        Ok(reply)
    }

    pub fn record_event(&self, session_id: &str, event: &str, unit_id: &str) -> Result<(), ApiError> {
        self.session(session_id)?;
        if event != "citation_click" {
            return Err(ApiError::BadRequest(format!("unknown event `{event}`")));
        }
        if self.engine().index.unit(unit_id).is_none() {
            return Err(ApiError::NotFound(format!("unit `{unit_id}`")));
        }
        self.log(session_id, LogEvent::CitationClick, serde_json::json!({"unit_id": unit_id}))
    }

    /// Rebuild from `manifest` (default: the configured one) and swap the new
    /// index in. On error the live index is untouched.
    pub fn reindex(&self, manifest: Option<&Path>) -> Result<Arc<Engine>, ServiceError> {
        let _guard = self.reindex_lock.lock().expect("reindex lock");
        let manifest = manifest.unwrap_or(&self.config.manifest);
        let old = self.engine();
        let index = index_manifest(manifest, &old.embedder)?;
        if let Some(p) = &self.config.index {
            index.save(p)?;
        }
        let engine = Arc::new(Engine {
            generation: old.generation + 1,
            index,
            embedder: old.embedder,
            weights: old.weights,
            policy: old.policy.clone(),
            templates: old.templates.clone(),
            backend: old.backend.clone(),
            kind_prior: old.kind_prior.clone(),
        });
        *self.engine.write().expect("engine lock") = engine.clone();
        tracing::info!(generation = engine.generation, units = engine.index.len(), "index swapped");
        Ok(engine)
    }
}
