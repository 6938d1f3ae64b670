//! C ABI over the blade engine.
//!
//! Every function returns a [`BladeStatus`]; results come back through out
//! pointers. Strings handed to the caller are NUL-terminated UTF-8 JSON and
//! must be released with [`blade_string_free`]. After a failure,
//! [`blade_last_error`] describes it until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use blade_core::corpus::{build_corpus, parse_manifest};
use blade_core::dialogue::{
    answer_query, respond, AnswerContext, DialogueError, ResponsePolicy, Session, TemplateBackend, TemplateSet,
};
use blade_core::index::{build_index, CorpusIndex, HashingEmbedder, KindPrior, RankerWeights};
use blade_core::study::{config_for, Group, QuizId, ResourceConfigId};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BladeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// Input files are missing or malformed.
    DataError = 4,
    /// The session's configuration does not allow the operation.
    Forbidden = 5,
    Internal = 6,
    Panic = 7,
}

/// A loaded index with the template backend and default policy.
pub struct BladeEngine {
    index: CorpusIndex,
    embedder: HashingEmbedder,
    weights: RankerWeights,
    policy: ResponsePolicy,
    templates: TemplateSet,
    backend: TemplateBackend,
    kind_prior: KindPrior,
}

impl BladeEngine {
    fn new(index: CorpusIndex, embedder: HashingEmbedder) -> Self {
        let templates = TemplateSet::default();
        BladeEngine {
            index,
            embedder,
            weights: RankerWeights::default(),
            policy: ResponsePolicy::default(),
            backend: TemplateBackend::new(Arc::new(templates.clone())),
            templates,
            kind_prior: KindPrior::default(),
        }
    }

    fn context(&self) -> AnswerContext<'_> {
        AnswerContext {
            index: &self.index,
            embedder: &self.embedder,
            weights: &self.weights,
            policy: &self.policy,
            templates: &self.templates,
            backend: &self.backend,
            kind_prior: &self.kind_prior,
        }
    }
}

/// One student's dialogue.
pub struct BladeSession {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(BladeStatus, String);

impl Failure {
    fn new(status: BladeStatus, msg: impl std::fmt::Display) -> Self {
        Failure(status, msg.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Run `f`, recording its error and turning panics into [`BladeStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BladeStatus {
    set_last_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BladeStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside blade");
            BladeStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(BladeStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(BladeStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(BladeStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(BladeStatus::NullPointer, format!("`{name}` is null")))
}

fn json_out(out: &mut *mut c_char, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string(value).map_err(|e| Failure::new(BladeStatus::Internal, e))?;
    *out = CString::new(text)
        .map_err(|e| Failure::new(BladeStatus::Internal, e))?
        .into_raw();
    Ok(())
}

fn dialogue_failure(e: DialogueError) -> Failure {
    match e {
        DialogueError::EmptyQuery => Failure::new(BladeStatus::InvalidArgument, e),
        other => Failure::new(BladeStatus::Internal, other),
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Message describing the last failure on this thread; empty after a
/// success. The pointer stays valid until the next blade call on the thread.
#[no_mangle]
pub extern "C" fn blade_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Ingest the course manifest at `manifest_path` and index it.
///
/// # Safety
/// `manifest_path` must be a NUL-terminated string and `out_engine` a
/// writable pointer.
#[no_mangle]
pub unsafe extern "C" fn blade_engine_open(manifest_path: *const c_char, out_engine: *mut *mut BladeEngine) -> BladeStatus {
    guard(|| {
        let out = out_arg(out_engine, "out_engine")?;
        let path = str_arg(manifest_path, "manifest_path")?;
        let manifest = parse_manifest(path).map_err(|e| Failure::new(BladeStatus::DataError, e))?;
        let corpus = build_corpus(&manifest).map_err(|e| Failure::new(BladeStatus::DataError, e))?;
        let embedder = HashingEmbedder::default();
        let index = build_index(corpus, &embedder, 0).map_err(|e| Failure::new(BladeStatus::DataError, e))?;
        *out = Box::into_raw(Box::new(BladeEngine::new(index, embedder)));
        Ok(())
    })
}

/// Load an index file written by `blade index build`.
///
/// # Safety
/// As for [`blade_engine_open`].
#[no_mangle]
pub unsafe extern "C" fn blade_engine_load_index(index_path: *const c_char, out_engine: *mut *mut BladeEngine) -> BladeStatus {
    guard(|| {
        let out = out_arg(out_engine, "out_engine")?;
        let path = str_arg(index_path, "index_path")?;
        let embedder = HashingEmbedder::default();
        let index = CorpusIndex::load(Path::new(path), &embedder).map_err(|e| Failure::new(BladeStatus::DataError, e))?;
        *out = Box::into_raw(Box::new(BladeEngine::new(index, embedder)));
        Ok(())
    })
}

/// Replace the ranker weights with those in a weights file.
///
/// # Safety
/// `engine` must come from an open call and not be in use on another thread.
#[no_mangle]
pub unsafe extern "C" fn blade_engine_load_weights(engine: *mut BladeEngine, weights_path: *const c_char) -> BladeStatus {
    guard(|| {
        let engine = out_arg(engine, "engine")?;
        let path = str_arg(weights_path, "weights_path")?;
        engine.weights = RankerWeights::load(path).map_err(|e| Failure::new(BladeStatus::DataError, e))?;
        Ok(())
    })
}

/// Number of instructional units in the engine's index.
///
/// # Safety
/// `engine` must come from an open call; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn blade_engine_unit_count(engine: *const BladeEngine, out_count: *mut usize) -> BladeStatus {
    guard(|| {
        let engine = handle(engine, "engine")?;
        *out_arg(out_count, "out_count")? = engine.index.len();
        Ok(())
    })
}

/// Answer one query outside any session. `module` may be null. Writes the
/// response as JSON `{text, citations, retrieved, no_results, backend}`.
///
/// # Safety
/// `engine` must come from an open call; string arguments must be
/// NUL-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn blade_engine_query_json(
    engine: *const BladeEngine,
    query: *const c_char,
    module: *const c_char,
    out_json: *mut *mut c_char,
) -> BladeStatus {
    guard(|| {
        let engine = handle(engine, "engine")?;
        let query = str_arg(query, "query")?;
        let module = opt_str_arg(module, "module")?;
        let out = out_arg(out_json, "out_json")?;
        let response = respond(query, module, &engine.context()).map_err(dialogue_failure)?;
        json_out(out, &response)
    })
}

/// Release an engine. Null is ignored.
///
/// # Safety
/// `engine` must come from an open call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn blade_engine_free(engine: *mut BladeEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Start a session for the engine's course. `module` may be null; `config`
/// is one of 'A', 'B', 'C'.
///
/// # Safety
/// `engine` must come from an open call; `module` null or NUL-terminated;
/// `out_session` writable.
#[no_mangle]
pub unsafe extern "C" fn blade_session_new(
    engine: *const BladeEngine,
    module: *const c_char,
    config: c_char,
    out_session: *mut *mut BladeSession,
) -> BladeStatus {
    guard(|| {
        let engine = handle(engine, "engine")?;
        let module = opt_str_arg(module, "module")?;
        let out = out_arg(out_session, "out_session")?;
        let config: ResourceConfigId = char::from(config as u8)
            .to_string()
            .parse()
            .map_err(|e| Failure::new(BladeStatus::InvalidArgument, e))?;
        let id = format!("ffi-{:x}", now_ms());
        let session = Session::new(id, &engine.index.corpus().course_id, module.map(str::to_string), config, now_ms());
        *out = Box::into_raw(Box::new(BladeSession { session }));
        Ok(())
    })
}

/// Ask a question within a session and write the assistant turn as JSON.
/// Sessions whose configuration has no assistant get
/// [`BladeStatus::Forbidden`].
///
/// # Safety
/// `engine` and `session` must be live handles, the session used by one
/// thread at a time; `query` NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn blade_session_ask(
    engine: *const BladeEngine,
    session: *mut BladeSession,
    query: *const c_char,
    out_json: *mut *mut c_char,
) -> BladeStatus {
    guard(|| {
        let engine = handle(engine, "engine")?;
        let session = out_arg(session, "session")?;
        let query = str_arg(query, "query")?;
        let out = out_arg(out_json, "out_json")?;
        if !session.session.config.has_assistant() {
            return Err(Failure::new(
                BladeStatus::Forbidden,
                format!("configuration {} has no assistant", session.session.config),
            ));
        }
        let turn = answer_query(&mut session.session, query, &engine.context(), now_ms()).map_err(dialogue_failure)?;
        json_out(out, turn)
    })
}

/// The whole session, turns included, as JSON.
///
/// # Safety
/// `session` must be a live handle; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn blade_session_transcript_json(session: *const BladeSession, out_json: *mut *mut c_char) -> BladeStatus {
    guard(|| {
        let session = handle(session, "session")?;
        json_out(out_arg(out_json, "out_json")?, &session.session)
    })
}

/// Release a session. Null is ignored.
///
/// # Safety
/// `session` must come from [`blade_session_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn blade_session_free(session: *mut BladeSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Resource configuration ('A', 'B' or 'C') of `group` (1-3) on `quiz` (1-3).
///
/// # Safety
/// `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn blade_config_for(group: u8, quiz: u8, out_config: *mut c_char) -> BladeStatus {
    guard(|| {
        let out = out_arg(out_config, "out_config")?;
        let g = Group::new(group).map_err(|e| Failure::new(BladeStatus::InvalidArgument, e))?;
        let q = QuizId::new(quiz).map_err(|e| Failure::new(BladeStatus::InvalidArgument, e))?;
        *out = config_for(g, q).as_str().as_bytes()[0] as c_char;
        Ok(())
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn blade_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
