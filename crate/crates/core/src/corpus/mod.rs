//! Course-material ingestion: manifest parsing, transcript parsing and
//! segmentation of resources into instructional units.

mod manifest;
mod segment;
mod transcript;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{parse_manifest, parse_manifest_str, CorpusManifest, SegmentationConfig};
pub use segment::{segment_slides, segment_text, segment_transcript};
pub use transcript::{parse_transcript, parse_transcript_str, Cue};

use crate::text;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("malformed manifest field `{field}`: {reason}")]
    MalformedManifest { field: String, reason: String },
    #[error("duplicate resource id `{0}`")]
    DuplicateResourceId(String),
    #[error("malformed cue at line {0}")]
    MalformedCue(usize),
    #[error("cue at line {0} starts before the previous cue ends")]
    NonMonotonicTimestamps(usize),
    #[error("document is empty")]
    EmptyDocument,
    #[error("transcript has no cues")]
    EmptyTranscript,
    #[error("i/o error reading {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("resource `{resource_id}`: {source}")]
    InResource {
        resource_id: String,
        #[source]
        source: Box<CorpusError>,
    },
}

impl CorpusError {
    pub(crate) fn malformed(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CorpusError::MalformedManifest {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// The innermost error, with resource tagging removed.
    pub fn root(&self) -> &CorpusError {
        match self {
            CorpusError::InResource { source, .. } => source.root(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Textbook,
    Slides,
    Transcript,
    Reading,
    Notebook,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 5] = [
        ResourceKind::Textbook,
        ResourceKind::Slides,
        ResourceKind::Transcript,
        ResourceKind::Reading,
        ResourceKind::Notebook,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResourceKind::Textbook => "textbook",
            ResourceKind::Slides => "slides",
            ResourceKind::Transcript => "transcript",
            ResourceKind::Reading => "reading",
            ResourceKind::Notebook => "notebook",
        }
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ResourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ResourceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown resource kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub id: String,
    pub title: String,
    pub kind: ResourceKind,
    pub module_tag: String,
    pub path: PathBuf,
    pub topics: BTreeSet<String>,
    pub objectives: BTreeSet<String>,
    /// Page number of the first page, for documents paginated with form feeds.
    pub first_page: u32,
}

/// Transcript times are held in milliseconds so parsing stays exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl TimeSpan {
    pub fn new(start_ms: u64, end_ms: u64) -> Option<Self> {
        (start_ms < end_ms).then_some(TimeSpan { start_ms, end_ms })
    }

    pub fn from_secs(start_s: u64, end_s: u64) -> Option<Self> {
        Self::new(start_s * 1000, end_s * 1000)
    }

    pub fn start_s(&self) -> f64 {
        self.start_ms as f64 / 1000.0
    }

    pub fn end_s(&self) -> f64 {
        self.end_ms as f64 / 1000.0
    }

    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceLocator {
    PageRange { start: u32, end: u32 },
    SlideNumber { n: u32 },
    TimeSpan(TimeSpan),
    SectionPath { headings: Vec<String> },
}

/// Byte range of a unit inside its normalized source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionalUnit {
    pub id: String,
    pub resource_id: String,
    pub seq: u32,
    pub text: String,
    pub locator: SourceLocator,
    pub span: ByteSpan,
    pub topics: BTreeSet<String>,
    pub objectives: BTreeSet<String>,
    pub token_count: u32,
}

impl InstructionalUnit {
    pub(crate) fn new(
        resource: &Resource,
        seq: u32,
        text: String,
        span: ByteSpan,
        locator: SourceLocator,
    ) -> Self {
        let token_count = text::token_count(&text) as u32;
        InstructionalUnit {
            id: unit_id(&resource.id, seq),
            resource_id: resource.id.clone(),
            seq,
            text,
            locator,
            span,
            topics: resource.topics.clone(),
            objectives: resource.objectives.clone(),
            token_count,
        }
    }
}

pub fn unit_id(resource_id: &str, seq: u32) -> String {
    format!("{resource_id}#{seq}")
}

/// Declared extent of a resource, used to check locator soundness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Extent {
    Pages { first: u32, last: u32 },
    Slides { count: u32 },
    Duration { end_ms: u64 },
    Unpaged,
}

/// The normalized text a resource's units were cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceText {
    pub resource_id: String,
    pub text: String,
    pub extent: Extent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub course_id: String,
    pub resources: Vec<Resource>,
    pub extents: Vec<Extent>,
    pub units: Vec<InstructionalUnit>,
}

impl Corpus {
    pub fn resource(&self, id: &str) -> Option<&Resource> {
        self.resources.iter().find(|r| r.id == id)
    }

    pub fn resource_position(&self, id: &str) -> Option<usize> {
        self.resources.iter().position(|r| r.id == id)
    }

    pub fn unit(&self, id: &str) -> Option<&InstructionalUnit> {
        self.units.iter().find(|u| u.id == id)
    }
}

/// Normalize a raw document: strip a byte-order mark and convert CRLF/CR to LF.
pub fn normalize_source(raw: &str) -> String {
    let raw = raw.strip_prefix('\u{feff}').unwrap_or(raw);
    raw.replace("\r\n", "\n").replace('\r', "\n")
}

fn read_file(path: &std::path::Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CorpusError::MissingFile(path.to_path_buf())
        } else {
            CorpusError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })
}

/// Load and normalize one resource's source text, and segment it.
pub fn ingest_resource(
    resource: &Resource,
    cfg: &SegmentationConfig,
) -> Result<(SourceText, Vec<InstructionalUnit>), CorpusError> {
    let raw = read_file(&resource.path)?;
    match resource.kind {
        ResourceKind::Transcript => {
            let cues = parse_transcript_str(&raw)?;
            let units = segment_transcript(resource, &cues, cfg)?;
            let end_ms = cues.last().map(|c| c.span.end_ms).unwrap_or(0);
            let text = transcript::joined_text(&cues);
            Ok((
                SourceText {
                    resource_id: resource.id.clone(),
                    text,
                    extent: Extent::Duration { end_ms },
                },
                units,
            ))
        }
        ResourceKind::Slides => {
            let text = normalize_source(&raw);
            let (units, count) = segment_slides(resource, &text, cfg)?;
            Ok((
                SourceText {
                    resource_id: resource.id.clone(),
                    text,
                    extent: Extent::Slides { count },
                },
                units,
            ))
        }
        _ => {
            let text = normalize_source(&raw);
            let units = segment_text(resource, &text, cfg)?;
            let extent = if text.contains('\u{c}') {
                let breaks = text.matches('\u{c}').count() as u32;
                Extent::Pages {
                    first: resource.first_page,
                    last: resource.first_page + breaks,
                }
            } else {
                Extent::Unpaged
            };
            Ok((
                SourceText {
                    resource_id: resource.id.clone(),
                    text,
                    extent,
                },
                units,
            ))
        }
    }
}

/// Ingest every resource of the manifest, in manifest order.
pub fn build_corpus(manifest: &CorpusManifest) -> Result<Corpus, CorpusError> {
    let (corpus, _) = build_corpus_with_sources(manifest)?;
    Ok(corpus)
}

/// Like [`build_corpus`], also returning the normalized source texts.
pub fn build_corpus_with_sources(
    manifest: &CorpusManifest,
) -> Result<(Corpus, Vec<SourceText>), CorpusError> {
    let vocabulary: BTreeSet<String> = manifest
        .resources
        .iter()
        .flat_map(|r| r.topics.iter().cloned())
        .collect();

    let mut units = Vec::new();
    let mut sources = Vec::new();
    let mut extents = Vec::new();
    for resource in &manifest.resources {
        let (source, mut resource_units) =
            ingest_resource(resource, &manifest.segmentation).map_err(|e| {
                CorpusError::InResource {
                    resource_id: resource.id.clone(),
                    source: Box::new(e),
                }
            })?;
        for unit in &mut resource_units {
            let local = text::match_phrases(&unit.text, &vocabulary);
            unit.topics.extend(local);
        }
        extents.push(source.extent);
        sources.push(source);
        units.extend(resource_units);
    }
    Ok((
        Corpus {
            course_id: manifest.course_id.clone(),
            resources: manifest.resources.clone(),
            extents,
            units,
        },
        sources,
    ))
}

/// Check that `locator` lies within `extent`.
pub fn locator_within(locator: &SourceLocator, extent: &Extent) -> bool {
    match (locator, extent) {
        (SourceLocator::TimeSpan(span), Extent::Duration { end_ms }) => {
            span.start_ms < span.end_ms && span.end_ms <= *end_ms
        }
        (SourceLocator::PageRange { start, end }, Extent::Pages { first, last }) => {
            first <= start && start <= end && end <= last
        }
        (SourceLocator::SlideNumber { n }, Extent::Slides { count }) => *n >= 1 && n <= count,
        (SourceLocator::SectionPath { .. }, Extent::Unpaged) => true,
        _ => false,
    }
}
