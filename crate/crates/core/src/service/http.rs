use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::oneshot;

use super::{ApiError, App, MessageReply, ServiceConfig, ServiceError};
use crate::dialogue::display_label;
use crate::study::ResourceConfigId;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::UnknownSession(_) | ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Forbidden(_) => StatusCode::FORBIDDEN,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({"error": self.to_string()}))).into_response()
    }
}

type AppState = Arc<App>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn health(State(app): State<AppState>) -> Json<serde_json::Value> {
    let engine = app.engine();
    Json(json!({
        "status": "ok",
        "course_id": engine.index.corpus().course_id,
        "units": engine.index.len(),
        "resources": engine.index.corpus().resources.len(),
        "index_generation": engine.generation,
        "embedder": engine.index.embedder_id(),
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    course_id: String,
    #[serde(default)]
    module_tag: Option<String>,
    config: ResourceConfigId,
}

async fn create_session(
    State(app): State<AppState>,
    Json(body): Json<NewSession>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let session = blocking(move || app.create_session(&body.course_id, body.module_tag, body.config)).await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({"session_id": session.id, "config": session.config})),
    ))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let session = app.session_snapshot(&id)?;
    Ok(Json(serde_json::to_value(session).expect("session serializes")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewMessage {
    text: String,
}

async fn post_message(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<NewMessage>,
) -> Result<Json<MessageReply>, ApiError> {
    Ok(Json(blocking(move || app.handle_message(&id, &body.text)).await?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewEvent {
    event: String,
    unit_id: String,
}

async fn post_event(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<NewEvent>,
) -> Result<StatusCode, ApiError> {
    blocking(move || app.record_event(&id, &body.event, &body.unit_id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct Browse {
    session: Option<String>,
}

/// Resource browsing is closed to sessions whose configuration has no
/// course materials.
fn check_browse(app: &App, q: &Browse) -> Result<(), ApiError> {
    if let Some(id) = &q.session {
        let config = app.session_config(id)?;
        if !config.has_materials() {
            return Err(ApiError::Forbidden(format!(
                "session uses configuration {config} which has no course materials"
            )));
        }
    }
    Ok(())
}

async fn list_resources(State(app): State<AppState>, Query(q): Query<Browse>) -> Result<Json<serde_json::Value>, ApiError> {
    check_browse(&app, &q)?;
    let engine = app.engine();
    let corpus = engine.index.corpus();
    let list: Vec<_> = corpus
        .resources
        .iter()
        .map(|r| {
            json!({
                "id": r.id,
                "title": r.title,
                "kind": r.kind,
                "module_tag": r.module_tag,
                "topics": r.topics,
                "objectives": r.objectives,
                "units": corpus.units.iter().filter(|u| u.resource_id == r.id).count(),
            })
        })
        .collect();
    Ok(Json(json!(list)))
}

async fn get_resource(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<Browse>,
) -> Result<Json<serde_json::Value>, ApiError> {
    check_browse(&app, &q)?;
    let engine = app.engine();
    let corpus = engine.index.corpus();
    let r = corpus.resource(&id).ok_or_else(|| ApiError::NotFound(format!("resource `{id}`")))?;
    let units: Vec<_> = corpus
        .units
        .iter()
        .filter(|u| u.resource_id == r.id)
        .map(|u| json!({"unit_id": u.id, "display_label": display_label(r, &u.locator)}))
        .collect();
    Ok(Json(json!({
        "id": r.id,
        "title": r.title,
        "kind": r.kind,
        "module_tag": r.module_tag,
        "topics": r.topics,
        "objectives": r.objectives,
        "units": units,
    })))
}

async fn get_unit(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<Browse>,
) -> Result<Json<serde_json::Value>, ApiError> {
    // units stay readable from assistant-only sessions so citations can be opened
    if let Some(s) = &q.session {
        app.session_config(s)?;
    }
    let engine = app.engine();
    let unit = engine.index.unit(&id).ok_or_else(|| ApiError::NotFound(format!("unit `{id}`")))?;
    let r = engine.index.corpus().resource(&unit.resource_id).expect("units reference known resources");
    Ok(Json(json!({
        "unit_id": unit.id,
        "resource_id": unit.resource_id,
        "seq": unit.seq,
        "display_label": display_label(r, &unit.locator),
        "locator": unit.locator,
        "text": unit.text,
    })))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct Reindex {
    #[serde(default)]
    manifest: Option<PathBuf>,
}

async fn reindex(State(app): State<AppState>, body: Option<Json<Option<Reindex>>>) -> Result<Json<serde_json::Value>, ApiError> {
    // no body, `null` and `{}` all mean the configured manifest
    let manifest = body.and_then(|Json(b)| b).unwrap_or_default().manifest;
    let engine = blocking(move || {
        app.reindex(manifest.as_deref())
            .map_err(|e| ApiError::Unprocessable(e.to_string()))
    })
    .await?;
    Ok(Json(json!({
        "index_generation": engine.generation,
        "units": engine.index.len(),
    })))
}

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/events", post(post_event))
        .route("/resources", get(list_resources))
        .route("/resources/{id}", get(get_resource))
        .route("/units/{id}", get(get_unit))
        .route("/admin/reindex", post(reindex))
        .with_state(app)
}

/// A service running on its own runtime thread.
pub struct Server {
    addr: SocketAddr,
    app: Arc<App>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<(), ServiceError>>>,
}

impl Server {
    /// Load state, bind and start serving in the background.
    pub fn start(config: ServiceConfig) -> Result<Server, ServiceError> {
        Self::start_inner(config, false)
    }

    /// Like [`Server::start`], also stopping on Ctrl-C.
    pub fn start_with_signals(config: ServiceConfig) -> Result<Server, ServiceError> {
        Self::start_inner(config, true)
    }

    fn start_inner(config: ServiceConfig, signals: bool) -> Result<Server, ServiceError> {
        let listen = config.listen.clone();
        let app = App::open(config)?;
        let bind_err = |source| ServiceError::Bind {
            addr: listen.clone(),
            source,
        };
        let std_listener = std::net::TcpListener::bind(&listen).map_err(bind_err)?;
        std_listener.set_nonblocking(true).map_err(bind_err)?;
        let addr = std_listener.local_addr().map_err(bind_err)?;
        let (tx, rx) = oneshot::channel::<()>();
        let router = router(app.clone());
        let thread = std::thread::Builder::new()
            .name("blade-service".into())
            .spawn(move || -> Result<(), ServiceError> {
                let io = |source| ServiceError::Io {
                    path: PathBuf::from(&listen),
                    source,
                };
                let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(io)?;
                rt.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(std_listener).map_err(io)?;
                    let stop = async move {
                        if signals {
                            tokio::select! {
                                _ = rx => {}
                                _ = tokio::signal::ctrl_c() => tracing::info!("interrupted, shutting down"),
                            }
                        } else {
                            let _ = rx.await;
                        }
                    };
                    axum::serve(listener, router).with_graceful_shutdown(stop).await.map_err(io)
                })
            })
            .map_err(|source| ServiceError::Io {
                path: PathBuf::from("service thread"),
                source,
            })?;
        tracing::info!(%addr, "listening");
        Ok(Server {
            addr,
            app,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn app(&self) -> &Arc<App> {
        &self.app
    }

    /// Block until the server stops on its own (e.g. Ctrl-C).
    pub fn wait(mut self) -> Result<(), ServiceError> {
        // dropping the sender would stop the server, so hold it until the join
        let _keep = self.shutdown.take();
        match self.thread.take() {
            Some(t) => t.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }

    /// Stop accepting requests, finish in-flight ones and join the thread.
    pub fn shutdown(mut self) -> Result<(), ServiceError> {
        self.stop()
    }

    fn stop(&mut self) -> Result<(), ServiceError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}
