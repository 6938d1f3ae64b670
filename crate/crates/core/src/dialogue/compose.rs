use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::citation::Citation;
use super::templates::{fill, Family, TemplateSet};
use super::{DialogueError, ResponsePolicy};
use crate::corpus::{Corpus, InstructionalUnit};
use crate::text;

/// A retrieved unit together with the citation rendered for it.
#[derive(Debug, Clone)]
pub struct Passage<'a> {
    pub unit: &'a InstructionalUnit,
    pub citation: Citation,
}

#[derive(Debug, Clone, Copy)]
pub struct ComposeRequest<'a> {
    pub query: &'a str,
    /// Course topic named in the query, if any.
    pub topic: Option<&'a str>,
    pub passages: &'a [Passage<'a>],
    pub policy: &'a ResponsePolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DraftOrigin {
    Template,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draft {
    pub text: String,
    pub citations: Vec<Citation>,
    pub origin: DraftOrigin,
}

/// Separator between the blocks of a composed response.
pub const BLOCK_SEPARATOR: &str = "\n\n";

/// Deterministic template pick, keyed on the query's tokens.
pub(crate) fn pick(family: Family, query: &str, n: usize) -> usize {
    let key = format!("{}\u{1f}{}", family.as_str(), text::tokenize(query).join(" "));
    (text::fnv1a(key.as_bytes()) % n as u64) as usize
}

/// Opening, one block per passage, then a guiding question. Nothing but
/// template strings, citation labels, excerpts and the course topic name
/// enters the text.
pub fn compose_template_response(
    req: &ComposeRequest<'_>,
    templates: &TemplateSet,
) -> Result<Draft, DialogueError> {
    if req.passages.is_empty() {
        return Err(DialogueError::NoPassages);
    }
    let (opening, question) = if req.topic.is_some() {
        (Family::Opening, Family::Question)
    } else {
        (Family::OpeningGeneric, Family::QuestionGeneric)
    };
    let topic = req.topic.unwrap_or("");
    let mut blocks = Vec::with_capacity(req.passages.len() + 2);
    let t = templates.family(opening);
    blocks.push(fill(&t[pick(opening, req.query, t.len())], &[("topic", topic)]));

    let t = templates.family(Family::Citation);
    let first = pick(Family::Citation, req.query, t.len());
    let limit = req.policy.max_citations.max(1);
    let passages = &req.passages[..req.passages.len().min(limit)];
    for (i, p) in passages.iter().enumerate() {
        blocks.push(fill(
            &t[(first + i) % t.len()],
            &[
                ("resource_label", p.citation.display_label.as_str()),
                ("excerpt", p.citation.excerpt.as_str()),
            ],
        ));
    }

    let t = templates.family(question);
    blocks.push(fill(&t[pick(question, req.query, t.len())], &[("topic", topic)]));

    Ok(Draft {
        text: blocks.join(BLOCK_SEPARATOR),
        citations: passages.iter().map(|p| p.citation.clone()).collect(),
        origin: DraftOrigin::Template,
    })
}

/// Fixed text of the empty-result turn.
pub fn no_results_text(query: &str, templates: &TemplateSet) -> String {
    let t = templates.family(Family::NoResults);
    t[pick(Family::NoResults, query, t.len())].clone()
}

pub const UNRESOLVED_CITATION: &str = "unresolved citation";
pub const NON_VERBATIM_EXCERPT: &str = "non-verbatim excerpt";
pub const EXCERPT_TOO_LONG: &str = "excerpt too long";
pub const NO_CITATIONS: &str = "no citations";
pub const UNGROUNDED_SENTENCE: &str = "ungrounded sentence";
pub const EMPTY_DRAFT: &str = "empty draft";

/// Minimum share of a sentence's tokens that must appear in a cited excerpt.
pub const GROUNDING_THRESHOLD: f64 = 0.5;

/// Share of the distinct content tokens of `sentence` that also occur in
/// `excerpt`.
pub fn grounding_overlap(sentence: &str, excerpt: &str) -> f64 {
    let s = text::content_token_set(sentence);
    if s.is_empty() {
        return 1.0;
    }
    let e = text::content_token_set(excerpt);
    s.intersection(&e).count() as f64 / s.len() as f64
}

/// Check citations against the corpus and, for remote drafts, that every
/// sentence is either template text or grounded in a cited excerpt.
pub fn validate_response(draft: &Draft, corpus: &Corpus, templates: &TemplateSet) -> Result<(), DialogueError> {
    let mut reasons: Vec<&'static str> = Vec::new();
    let mut add = |r: &'static str| {
        if !reasons.contains(&r) {
            reasons.push(r);
        }
    };
    if draft.text.trim().is_empty() {
        add(EMPTY_DRAFT);
    }
    for c in &draft.citations {
        match corpus.unit(&c.unit_id) {
            None => add(UNRESOLVED_CITATION),
            Some(unit) => {
                if c.excerpt.trim().is_empty() || !unit.text.contains(&c.excerpt) {
                    add(NON_VERBATIM_EXCERPT);
                }
                if c.excerpt.chars().count() > super::citation::MAX_EXCERPT_CHARS {
                    add(EXCERPT_TOO_LONG);
                }
            }
        }
    }
    if draft.citations.is_empty() {
        add(NO_CITATIONS);
    }
    if draft.origin == DraftOrigin::Remote && !ungrounded_sentences(&draft.text, &draft.citations, templates).is_empty() {
        add(UNGROUNDED_SENTENCE);
    }
    if reasons.is_empty() {
        Ok(())
    } else {
        Err(DialogueError::ValidationFailed(reasons.into_iter().map(str::to_string).collect()))
    }
}

/// Sentences of `text` that match no template sentence and overlap every
/// cited excerpt by less than [`GROUNDING_THRESHOLD`].
pub fn ungrounded_sentences<'t>(text: &'t str, citations: &[Citation], templates: &TemplateSet) -> Vec<&'t str> {
    let patterns = templates.sentence_patterns();
    let excerpts: Vec<BTreeSet<String>> = citations.iter().map(|c| text::content_token_set(&c.excerpt)).collect();
    let mut out = Vec::new();
    for r in text::sentence_ranges(text) {
        let sentence = &text[r];
        if text::token_set(sentence).is_empty() || patterns.iter().any(|p| p.is_match(sentence)) {
            continue;
        }
        // a sentence of function words alone cannot carry an answer, but it
        // cannot be grounded either
        let tokens = text::content_token_set(sentence);
        if tokens.is_empty() {
            out.push(sentence);
            continue;
        }
        let grounded = excerpts.iter().any(|e| {
            tokens.intersection(e).count() as f64 / tokens.len() as f64 >= GROUNDING_THRESHOLD
        });
        if !grounded {
            out.push(sentence);
        }
    }
    out
}
