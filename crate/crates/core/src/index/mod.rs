//! Hybrid lexical/dense index over instructional units, feature extraction,
//! ranking and pairwise ranker training.

mod embed;
mod features;
mod rank;
mod train;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{Embedder, HashingEmbedder};
pub use features::{extract_features, FeatureVector, KindPrior, QueryContext};
pub use rank::{rank, rank_with_context, RankOptions, RankerWeights, ScoredPassage};
pub use train::{
    descend, evaluate_ranker, pair_features, pairwise_gradient, pairwise_loss, read_triples, train_ranker,
    write_triples, PairFeatures, RankerEval,
    TrainOptions, TrainOutcome, TrainingTriple,
};

use crate::corpus::{Corpus, InstructionalUnit};
use crate::text;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

const INDEX_FORMAT: &str = "blade-index";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("corpus has no units")]
    EmptyCorpus,
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index was built with embedder `{index}` but `{embedder}` was supplied")]
    EmbedderMismatch { index: String, embedder: String },
    #[error("unknown unit id `{0}`")]
    UnknownUnitId(String),
    #[error("no training triples")]
    NoTriples,
    #[error("invalid training triple: {0}")]
    InvalidTriple(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed index or record file {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub unit: u32,
    pub tf: u32,
}

/// Immutable retrieval structure over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    corpus: Corpus,
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_doc_len: f64,
    vectors: Vec<Vec<f64>>,
    embedder_id: String,
    dimension: usize,
    built_at: u64,
    topic_vocab: BTreeSet<String>,
    objective_vocab: BTreeSet<String>,
    /// (resource position, seq) per unit ordinal; the deterministic tie-break key.
    order_keys: Vec<(u32, u32)>,
}

/// Build an index. `built_at` is a unix timestamp in seconds; pass 0 for
/// reproducible output.
pub fn build_index(corpus: Corpus, embedder: &dyn Embedder, built_at: u64) -> Result<CorpusIndex, IndexError> {
    if corpus.units.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut vectors = Vec::with_capacity(corpus.units.len());
    for (ordinal, unit) in corpus.units.iter().enumerate() {
        let tokens = text::tokenize(&unit.text);
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t).or_default() += 1;
        }
        for (term, count) in tf {
            postings.entry(term).or_default().push(Posting {
                unit: ordinal as u32,
                tf: count,
            });
        }
        let v = embedder.embed(&unit.text);
        if v.len() != embedder.dimension() {
            return Err(IndexError::DimensionMismatch {
                expected: embedder.dimension(),
                got: v.len(),
            });
        }
        vectors.push(v);
    }
    CorpusIndex::assemble(corpus, postings, vectors, embedder.id(), embedder.dimension(), built_at)
}

impl CorpusIndex {
    fn assemble(
        corpus: Corpus,
        postings: BTreeMap<String, Vec<Posting>>,
        vectors: Vec<Vec<f64>>,
        embedder_id: String,
        dimension: usize,
        built_at: u64,
    ) -> Result<Self, IndexError> {
        if corpus.units.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let doc_lengths: Vec<u32> = corpus.units.iter().map(|u| u.token_count).collect();
        let avg_doc_len = doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / doc_lengths.len() as f64;
        let mut topic_vocab = BTreeSet::new();
        let mut objective_vocab = BTreeSet::new();
        for r in &corpus.resources {
            topic_vocab.extend(r.topics.iter().cloned());
            objective_vocab.extend(r.objectives.iter().cloned());
        }
        for u in &corpus.units {
            topic_vocab.extend(u.topics.iter().cloned());
            objective_vocab.extend(u.objectives.iter().cloned());
        }
        let mut order_keys = Vec::with_capacity(corpus.units.len());
        for u in &corpus.units {
            let pos = corpus
                .resource_position(&u.resource_id)
                .ok_or_else(|| IndexError::UnknownUnitId(u.id.clone()))?;
            order_keys.push((pos as u32, u.seq));
        }
        Ok(CorpusIndex {
            corpus,
            postings,
            doc_lengths,
            avg_doc_len,
            vectors,
            embedder_id,
            dimension,
            built_at,
            topic_vocab,
            objective_vocab,
            order_keys,
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn units(&self) -> &[InstructionalUnit] {
        &self.corpus.units
    }

    pub fn len(&self) -> usize {
        self.corpus.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corpus.units.is_empty()
    }

    pub fn postings(&self) -> &BTreeMap<String, Vec<Posting>> {
        &self.postings
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn built_at(&self) -> u64 {
        self.built_at
    }

    pub fn topic_vocabulary(&self) -> &BTreeSet<String> {
        &self.topic_vocab
    }

    pub fn objective_vocabulary(&self) -> &BTreeSet<String> {
        &self.objective_vocab
    }

    pub fn ordinal_of(&self, unit_id: &str) -> Option<usize> {
        self.corpus.units.iter().position(|u| u.id == unit_id)
    }

    pub fn unit(&self, unit_id: &str) -> Option<&InstructionalUnit> {
        self.corpus.unit(unit_id)
    }

    pub(crate) fn order_key(&self, ordinal: usize) -> (u32, u32) {
        self.order_keys[ordinal]
    }

    /// Number of units containing `term`.
    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    fn term_frequency(&self, term: &str, ordinal: usize) -> u32 {
        self.postings
            .get(term)
            .and_then(|list| {
                list.binary_search_by_key(&(ordinal as u32), |p| p.unit)
                    .ok()
                    .map(|i| list[i].tf)
            })
            .unwrap_or(0)
    }

    pub(crate) fn bm25_term(&self, df: usize, tf: u32, doc_len: u32) -> f64 {
        let n = self.len() as f64;
        let df = df as f64;
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        let tf = f64::from(tf);
        let norm = BM25_K1 * (1.0 - BM25_B + BM25_B * f64::from(doc_len) / self.avg_doc_len);
        idf * tf * (BM25_K1 + 1.0) / (tf + norm)
    }

    /// Serialize to the versioned JSON index format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        let file = PersistedIndex {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            embedder_id: self.embedder_id.clone(),
            dimension: self.dimension,
            built_at: self.built_at,
            corpus: self.corpus.clone(),
            postings: self.postings.clone(),
            vectors: self.vectors.clone(),
        };
        let json = serde_json::to_vec(&file).map_err(|e| IndexError::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        std::fs::write(path, json).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Load a saved index, refusing files built with a different embedder.
    pub fn load(path: impl AsRef<Path>, embedder: &dyn Embedder) -> Result<Self, IndexError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let bad = |reason: String| IndexError::Format {
            path: path.to_path_buf(),
            reason,
        };
        let file: PersistedIndex = serde_json::from_slice(&bytes).map_err(|e| bad(e.to_string()))?;
        if file.format != INDEX_FORMAT {
            return Err(bad(format!("unexpected format tag `{}`", file.format)));
        }
        if file.version != INDEX_VERSION {
            return Err(bad(format!("unsupported index version {}", file.version)));
        }
        if file.embedder_id != embedder.id() {
            return Err(IndexError::EmbedderMismatch {
                index: file.embedder_id,
                embedder: embedder.id(),
            });
        }
        let n = file.corpus.units.len();
        if file.vectors.len() != n {
            return Err(bad(format!("{} vectors for {n} units", file.vectors.len())));
        }
        if let Some(v) = file.vectors.iter().find(|v| v.len() != file.dimension) {
            return Err(IndexError::DimensionMismatch {
                expected: file.dimension,
                got: v.len(),
            });
        }
        for (term, list) in &file.postings {
            if list.iter().any(|p| p.unit as usize >= n || p.tf == 0)
                || list.windows(2).any(|w| w[0].unit >= w[1].unit)
            {
                return Err(bad(format!("invalid postings for term `{term}`")));
            }
        }
        CorpusIndex::assemble(
            file.corpus,
            file.postings,
            file.vectors,
            file.embedder_id,
            file.dimension,
            file.built_at,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct PersistedIndex {
    format: String,
    version: u32,
    embedder_id: String,
    dimension: usize,
    built_at: u64,
    corpus: Corpus,
    postings: BTreeMap<String, Vec<Posting>>,
    vectors: Vec<Vec<f64>>,
}

/// Unique query terms in sorted order.
pub fn query_terms(query: &str) -> Vec<String> {
    text::token_set(query).into_iter().collect()
}

/// BM25 (k1 = 1.2, b = 0.75) of one unit for a set of query terms. Terms are
/// deduplicated; the idf is `ln((N - df + 0.5) / (df + 0.5) + 1)`.
pub fn lexical_score(index: &CorpusIndex, query_terms: &[String], ordinal: usize) -> f64 {
    let mut terms: Vec<&String> = query_terms.iter().collect();
    terms.sort();
    terms.dedup();
    let doc_len = index.doc_lengths[ordinal];
    let mut score = 0.0;
    for term in terms {
        let tf = index.term_frequency(term, ordinal);
        if tf > 0 {
            score += index.bm25_term(index.document_frequency(term), tf, doc_len);
        }
    }
    score
}

/// Cosine similarity of `query_vec` with a unit's vector (both unit norm, so
/// the dot product), clamped to [-1, 1].
pub fn vector_score(index: &CorpusIndex, query_vec: &[f64], ordinal: usize) -> Result<f64, IndexError> {
    if query_vec.len() != index.dimension {
        return Err(IndexError::DimensionMismatch {
            expected: index.dimension,
            got: query_vec.len(),
        });
    }
    let dot: f64 = index.vectors[ordinal].iter().zip(query_vec).map(|(a, b)| a * b).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

#[cfg(test)]
pub(crate) mod test_support {
    use std::collections::BTreeSet;
    use std::path::PathBuf;

    use crate::corpus::{ByteSpan, Corpus, Extent, InstructionalUnit, Resource, ResourceKind, SourceLocator};

    /// Corpus of one unit per text; resources are assigned round-robin.
    pub fn corpus_from_texts(texts: &[&str], n_resources: usize) -> Corpus {
        let kinds = ResourceKind::ALL;
        let resources: Vec<Resource> = (0..n_resources)
            .map(|i| Resource {
                id: format!("r{i}"),
                title: format!("Resource {i}"),
                kind: kinds[i % kinds.len()],
                module_tag: format!("week{}", i % 3),
                path: PathBuf::from(format!("r{i}.md")),
                topics: BTreeSet::new(),
                objectives: BTreeSet::new(),
                first_page: 1,
            })
            .collect();
        let mut seqs = vec![0u32; n_resources];
        let units = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let r = &resources[i % n_resources];
                let seq = seqs[i % n_resources];
                seqs[i % n_resources] += 1;
                InstructionalUnit {
                    id: format!("{}#{seq}", r.id),
                    resource_id: r.id.clone(),
                    seq,
                    text: t.to_string(),
                    locator: SourceLocator::SectionPath { headings: vec![] },
                    span: ByteSpan { start: 0, end: t.len() },
                    topics: BTreeSet::new(),
                    objectives: BTreeSet::new(),
                    token_count: crate::text::token_count(t) as u32,
                }
            })
            .collect();
        Corpus {
            course_id: "test".into(),
            extents: vec![Extent::Unpaged; n_resources],
            resources,
            units,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::corpus_from_texts;
    use super::*;

    fn toy() -> CorpusIndex {
        let corpus = corpus_from_texts(
            &[
                "jaccard similarity compares two sets",
                "cosine similarity compares two vectors of term weights",
                "the jaccard index divides intersection by union jaccard",
            ],
            3,
        );
        build_index(corpus, &HashingEmbedder::default(), 0).unwrap()
    }

    #[test]
    fn postings_cover_every_token() {
        let idx = toy();
        for (ordinal, unit) in idx.units().iter().enumerate() {
            for token in text::tokenize(&unit.text) {
                assert!(idx.postings()[&token].iter().any(|p| p.unit as usize == ordinal));
            }
        }
    }

    #[test]
    fn average_length_is_mean() {
        let words = |n: usize| (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let (a, b, c) = (words(10), words(20), words(30));
        let idx = build_index(corpus_from_texts(&[&a, &b, &c], 1), &HashingEmbedder::default(), 0).unwrap();
        assert_eq!(idx.avg_doc_len(), 20.0);
    }

    #[test]
    fn rebuild_is_identical() {
        assert_eq!(toy(), toy());
    }

    #[test]
    fn empty_corpus_rejected() {
        let corpus = corpus_from_texts(&[], 1);
        assert!(matches!(
            build_index(corpus, &HashingEmbedder::default(), 0),
            Err(IndexError::EmptyCorpus)
        ));
    }

    #[test]
    fn bm25_hand_computed() {
        // N = 3, "jaccard" occurs in docs 0 (tf 1, len 5) and 2 (tf 2, len 8); lengths 5, 8, 8
        let idx = toy();
        let terms = vec!["jaccard".to_string()];
        let idf = ((3.0f64 - 2.0 + 0.5) / (2.0 + 0.5) + 1.0).ln();
        let avgdl = 7.0;
        let expected0 = idf * 1.0 * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 5.0 / avgdl));
        let expected2 = idf * 2.0 * 2.2 / (2.0 + 1.2 * (0.25 + 0.75 * 8.0 / avgdl));
        assert!((lexical_score(&idx, &terms, 0) - expected0).abs() < 1e-9);
        assert_eq!(lexical_score(&idx, &terms, 1), 0.0);
        assert!((lexical_score(&idx, &terms, 2) - expected2).abs() < 1e-9);
        // values computed independently with a plain-Python BM25
        assert!((lexical_score(&idx, &terms, 0) - 0.532_209_991_940_024_2).abs() < 1e-9);
        assert!((lexical_score(&idx, &terms, 2) - 0.621_292_351_105_951).abs() < 1e-9);
    }

    #[test]
    fn identical_docs_score_identically() {
        let idx = build_index(corpus_from_texts(&["alpha", "alpha", "alpha"], 2), &HashingEmbedder::default(), 0).unwrap();
        let terms = vec!["alpha".to_string()];
        let s: Vec<f64> = (0..3).map(|o| lexical_score(&idx, &terms, o)).collect();
        assert_eq!(s[0], s[1]);
        assert_eq!(s[1], s[2]);
    }

    #[test]
    fn vector_scores() {
        let idx = toy();
        let v = idx.vectors()[1].clone();
        assert!((vector_score(&idx, &v, 1).unwrap() - 1.0).abs() < 1e-9);
        assert!(matches!(
            vector_score(&idx, &[1.0, 0.0], 0),
            Err(IndexError::DimensionMismatch { expected: 256, got: 2 })
        ));
        let q = HashingEmbedder::default().embed("some query about sets");
        let brute: f64 = (0..256).map(|i| q[i] * idx.vectors()[0][i]).sum();
        assert!((vector_score(&idx, &q, 0).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_vectors_score_zero() {
        struct Axis;
        impl Embedder for Axis {
            fn id(&self) -> String {
                "axis".into()
            }
            fn dimension(&self) -> usize {
                2
            }
            fn embed(&self, text: &str) -> Vec<f64> {
                if text.starts_with('x') {
                    vec![1.0, 0.0]
                } else {
                    vec![0.0, 1.0]
                }
            }
        }
        let idx = build_index(corpus_from_texts(&["x axis", "y axis"], 1), &Axis, 0).unwrap();
        assert!(vector_score(&idx, &[1.0, 0.0], 1).unwrap().abs() < 1e-9);
    }

    #[test]
    fn save_load_roundtrip_and_embedder_check() {
        let idx = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.json");
        idx.save(&path).unwrap();
        let back = CorpusIndex::load(&path, &HashingEmbedder::default()).unwrap();
        assert_eq!(back, idx);
        assert!(matches!(
            CorpusIndex::load(&path, &HashingEmbedder::new(64)),
            Err(IndexError::EmbedderMismatch { .. })
        ));
        std::fs::write(&path, b"{\"format\":\"other\"}").unwrap();
        assert!(matches!(
            CorpusIndex::load(&path, &HashingEmbedder::default()),
            Err(IndexError::Format { .. })
        ));
    }
}
