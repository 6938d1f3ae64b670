//! Sessions and answer-withholding responses. Every assistant turn points to
//! verbatim passages of the course materials and ends with a guiding question
//! instead of an answer.

mod backend;
mod citation;
mod compose;
mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{BackendError, GenerationBackend, RemoteBackend, RemoteConfig, TemplateBackend};
pub use citation::{display_label, format_clock, render_citation, select_excerpt, Citation, MAX_EXCERPT_CHARS};
pub use compose::{
    compose_template_response, grounding_overlap, no_results_text, ungrounded_sentences, validate_response,
    ComposeRequest, Draft, DraftOrigin, Passage, BLOCK_SEPARATOR, EMPTY_DRAFT, EXCERPT_TOO_LONG,
    GROUNDING_THRESHOLD, NON_VERBATIM_EXCERPT, NO_CITATIONS, UNGROUNDED_SENTENCE, UNRESOLVED_CITATION,
};
pub use templates::{fill, Family, TemplateSet, BANNED_PHRASES};

use crate::index::{
    rank_with_context, CorpusIndex, Embedder, FeatureVector, IndexError, KindPrior, QueryContext, RankOptions,
    RankerWeights, ScoredPassage,
};
use crate::study::ResourceConfigId;
use crate::text;

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("query contains no searchable terms")]
    EmptyQuery,
    #[error("no passages to compose from")]
    NoPassages,
    #[error("invalid template set: {0}")]
    Templates(String),
    #[error("response failed validation: {}", .0.join(", "))]
    ValidationFailed(Vec<String>),
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    #[default]
    WithholdAnswers,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponsePolicy {
    pub mode: PolicyMode,
    pub max_citations: usize,
    pub template_set_id: String,
}

impl Default for ResponsePolicy {
    fn default() -> Self {
        ResponsePolicy {
            mode: PolicyMode::WithholdAnswers,
            max_citations: 4,
            template_set_id: "evidence-v1".into(),
        }
    }
}

impl ResponsePolicy {
    pub fn validate(&self, templates: &TemplateSet) -> Result<(), DialogueError> {
        if self.max_citations == 0 {
            return Err(DialogueError::Policy("max_citations must be at least 1".into()));
        }
        if self.template_set_id != templates.id {
            return Err(DialogueError::Policy(format!(
                "policy names template set `{}` but `{}` is loaded",
                self.template_set_id, templates.id
            )));
        }
        Ok(())
    }
}

/// Passages whose evidence features add less than this to the score are not
/// cited.
pub const RETRIEVAL_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Student,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub role: Role,
    pub text: String,
    #[serde(default)]
    pub citations: Vec<Citation>,
    #[serde(default)]
    pub retrieved: Vec<ScoredPassage>,
    #[serde(default)]
    pub no_results: bool,
    pub at_ms: u64,
    /// Backend whose draft was delivered (assistant turns only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    /// Why the configured backend's draft was replaced by a template response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub course_id: String,
    pub current_module: Option<String>,
    pub config: ResourceConfigId,
    pub turns: Vec<DialogueTurn>,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        course_id: impl Into<String>,
        current_module: Option<String>,
        config: ResourceConfigId,
        now_ms: u64,
    ) -> Self {
        Session {
            id: id.into(),
            course_id: course_id.into(),
            current_module,
            config,
            turns: Vec::new(),
            created_at_ms: now_ms,
            updated_at_ms: now_ms,
        }
    }

    /// Append a turn, moving its timestamp forward if needed so turns stay
    /// strictly ordered.
    pub fn push_turn(&mut self, mut turn: DialogueTurn) -> &DialogueTurn {
        let floor = self
            .turns
            .last()
            .map(|t| t.at_ms + 1)
            .unwrap_or(self.created_at_ms);
        turn.at_ms = turn.at_ms.max(floor);
        self.updated_at_ms = self.updated_at_ms.max(turn.at_ms);
        self.turns.push(turn);
        self.turns.last().expect("just pushed")
    }
}

/// Everything `answer_query` reads; shared by all sessions.
#[derive(Clone, Copy)]
pub struct AnswerContext<'a> {
    pub index: &'a CorpusIndex,
    pub embedder: &'a dyn Embedder,
    pub weights: &'a RankerWeights,
    pub policy: &'a ResponsePolicy,
    pub templates: &'a TemplateSet,
    pub backend: &'a dyn GenerationBackend,
    pub kind_prior: &'a KindPrior,
}

/// The assistant's reply before it is attached to a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistantResponse {
    pub text: String,
    pub citations: Vec<Citation>,
    pub retrieved: Vec<ScoredPassage>,
    pub no_results: bool,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

/// Score contributed by query-independent features alone.
fn baseline(weights: &RankerWeights, f: &FeatureVector) -> f64 {
    weights.score(&FeatureVector {
        kind: f.kind,
        module: f.module,
        ..FeatureVector::default()
    })
}

/// Course topic named in the query: the longest matching vocabulary phrase.
fn query_topic(ctx: &QueryContext<'_>) -> Option<String> {
    ctx.topics
        .iter()
        .max_by(|a, b| {
            text::token_count(a)
                .cmp(&text::token_count(b))
                .then_with(|| b.cmp(a))
        })
        .cloned()
}

/// Retrieve, compose, validate; falls back to the template backend whenever
/// the configured backend fails or its draft is rejected.
pub fn respond(query: &str, session_module: Option<&str>, ctx: &AnswerContext<'_>) -> Result<AssistantResponse, DialogueError> {
    if text::tokenize(query).is_empty() {
        return Err(DialogueError::EmptyQuery);
    }
    ctx.policy.validate(ctx.templates)?;
    let qctx = QueryContext::new(ctx.index, ctx.embedder, query, session_module, ctx.kind_prior);
    let opts = RankOptions {
        k: 2 * ctx.policy.max_citations,
        per_resource_cap: Some(2),
        kind_prior: ctx.kind_prior.clone(),
    };
    let retrieved = rank_with_context(&qctx, ctx.weights, &opts)?;
    let kept: Vec<&ScoredPassage> = retrieved
        .iter()
        .filter(|p| p.score - baseline(ctx.weights, &p.features) >= RETRIEVAL_FLOOR)
        .take(ctx.policy.max_citations)
        .collect();

    if kept.is_empty() {
        return Ok(AssistantResponse {
            text: no_results_text(query, ctx.templates),
            citations: Vec::new(),
            retrieved,
            no_results: true,
            backend: "template".into(),
            fallback: None,
        });
    }

    let corpus = ctx.index.corpus();
    let passages: Vec<Passage<'_>> = kept
        .iter()
        .map(|p| {
            let unit = ctx.index.unit(&p.unit_id).expect("ranked units exist");
            let resource = corpus.resource(&unit.resource_id).expect("units reference known resources");
            Passage {
                unit,
                citation: render_citation(unit, resource, &qctx.terms),
            }
        })
        .collect();
    let topic = query_topic(&qctx);
    let req = ComposeRequest {
        query,
        topic: topic.as_deref(),
        passages: &passages,
        policy: ctx.policy,
    };

    let mut fallback = None;
    let primary = ctx.backend.compose(&req).map_err(|e| e.to_string()).and_then(|mut d| {
        // labels are always rendered locally
        for c in &mut d.citations {
            if let Some(unit) = corpus.unit(&c.unit_id) {
                if let Some(r) = corpus.resource(&unit.resource_id) {
                    c.display_label = display_label(r, &unit.locator);
                }
            }
        }
        validate_response(&d, corpus, ctx.templates).map(|_| d).map_err(|e| e.to_string())
    });
    let (draft, backend) = match primary {
        Ok(d) => (d, ctx.backend.name()),
        Err(reason) => {
            tracing::warn!(backend = ctx.backend.name(), %reason, "falling back to template backend");
            fallback = Some(reason);
            let d = compose_template_response(&req, ctx.templates)?;
            validate_response(&d, corpus, ctx.templates)?;
            (d, "template")
        }
    };
    Ok(AssistantResponse {
        text: draft.text,
        citations: draft.citations,
        retrieved,
        no_results: false,
        backend: backend.into(),
        fallback,
    })
}

/// Answer `query` within `session`, appending the student turn and the
/// assistant turn.
pub fn answer_query<'s>(
    session: &'s mut Session,
    query: &str,
    ctx: &AnswerContext<'_>,
    now_ms: u64,
) -> Result<&'s DialogueTurn, DialogueError> {
    let response = respond(query, session.current_module.as_deref(), ctx)?;
    session.push_turn(DialogueTurn {
        role: Role::Student,
        text: query.to_string(),
        citations: Vec::new(),
        retrieved: Vec::new(),
        no_results: false,
        at_ms: now_ms,
        backend: None,
        fallback: None,
    });
    Ok(session.push_turn(DialogueTurn {
        role: Role::Assistant,
        text: response.text,
        citations: response.citations,
        retrieved: response.retrieved,
        no_results: response.no_results,
        at_ms: now_ms,
        backend: Some(response.backend),
        fallback: response.fallback,
    }))
}
