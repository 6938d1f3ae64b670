use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{query_terms, vector_score, CorpusIndex, Embedder};
use crate::corpus::ResourceKind;
use crate::text;

/// Per-unit ranking features.
///
/// `lexical` is BM25 min-max normalized over the candidate set, `vector` the
/// cosine similarity, `topic` the Jaccard overlap of query and unit topics,
/// `objective` the share of the unit's objectives named in the query, `kind`
/// the prior for the unit's resource kind and `module` 1 when the unit belongs
/// to the session's current module.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub lexical: f64,
    pub vector: f64,
    pub topic: f64,
    pub objective: f64,
    pub kind: f64,
    pub module: f64,
}

impl FeatureVector {
    pub const LEN: usize = 6;

    pub fn to_array(&self) -> [f64; Self::LEN] {
        [self.lexical, self.vector, self.topic, self.objective, self.kind, self.module]
    }

    pub fn from_array(a: [f64; Self::LEN]) -> Self {
        FeatureVector {
            lexical: a[0],
            vector: a[1],
            topic: a[2],
            objective: a[3],
            kind: a[4],
            module: a[5],
        }
    }

    pub fn in_range(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        unit(self.lexical)
            && (-1.0..=1.0).contains(&self.vector)
            && unit(self.topic)
            && unit(self.objective)
            && unit(self.kind)
            && (self.module == 0.0 || self.module == 1.0)
    }
}

/// Prior weight per resource kind, each in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindPrior(pub BTreeMap<ResourceKind, f64>);

impl Default for KindPrior {
    fn default() -> Self {
        KindPrior(ResourceKind::ALL.into_iter().map(|k| (k, 0.5)).collect())
    }
}

impl KindPrior {
    pub fn get(&self, kind: ResourceKind) -> f64 {
        self.0.get(&kind).copied().unwrap_or(0.5).clamp(0.0, 1.0)
    }
}

/// Everything about a query that does not depend on the unit being scored.
/// The candidate set is the whole index.
#[derive(Debug, Clone)]
pub struct QueryContext<'a> {
    index: &'a CorpusIndex,
    pub terms: Vec<String>,
    pub topics: BTreeSet<String>,
    pub objectives: BTreeSet<String>,
    pub session_module: Option<String>,
    query_vec: Vec<f64>,
    lexical: Vec<f64>,
    lex_min: f64,
    lex_max: f64,
    prior: KindPrior,
}

impl<'a> QueryContext<'a> {
    pub fn new(
        index: &'a CorpusIndex,
        embedder: &dyn Embedder,
        query: &str,
        session_module: Option<&str>,
        prior: &KindPrior,
    ) -> Self {
        let terms = query_terms(query);
        let mut lexical = vec![0.0; index.len()];
        for term in &terms {
            let Some(list) = index.postings().get(term) else { continue };
            for p in list {
                let o = p.unit as usize;
                lexical[o] += index.bm25_term(list.len(), p.tf, index.doc_lengths()[o]);
            }
        }
        let lex_min = lexical.iter().copied().fold(f64::INFINITY, f64::min);
        let lex_max = lexical.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let query_vec = embedder.embed(query);
        QueryContext {
            index,
            topics: text::match_phrases(query, index.topic_vocabulary()),
            objectives: text::match_phrases(query, index.objective_vocabulary()),
            terms,
            session_module: session_module.map(str::to_string),
            query_vec,
            lexical,
            lex_min,
            lex_max,
            prior: prior.clone(),
        }
    }

    pub fn index(&self) -> &'a CorpusIndex {
        self.index
    }

    /// Raw BM25 score of a unit.
    pub fn lexical_raw(&self, ordinal: usize) -> f64 {
        self.lexical[ordinal]
    }

    pub fn query_vector(&self) -> &[f64] {
        &self.query_vec
    }

    pub fn features(&self, ordinal: usize) -> FeatureVector {
        let unit = &self.index.units()[ordinal];
        let resource = self
            .index
            .corpus()
            .resource(&unit.resource_id)
            .expect("index units reference known resources");

        let lexical = if self.lex_max > self.lex_min {
            (self.lexical[ordinal] - self.lex_min) / (self.lex_max - self.lex_min)
        } else {
            0.0
        };
        let vector = if self.query_vec.len() == self.index.dimension() {
            vector_score(self.index, &self.query_vec, ordinal).unwrap_or(0.0)
        } else {
            0.0
        };
        let union = self.topics.union(&unit.topics).count();
        let topic = if union == 0 {
            0.0
        } else {
            self.topics.intersection(&unit.topics).count() as f64 / union as f64
        };
        let objective =
            self.objectives.intersection(&unit.objectives).count() as f64 / unit.objectives.len().max(1) as f64;
        let module = match &self.session_module {
            Some(m) if *m == resource.module_tag => 1.0,
            _ => 0.0,
        };
        FeatureVector {
            lexical,
            vector,
            topic,
            objective,
            kind: self.prior.get(resource.kind),
            module,
        }
    }
}

/// Features of one unit for a query, with the whole index as candidate set.
pub fn extract_features(
    index: &CorpusIndex,
    embedder: &dyn Embedder,
    query: &str,
    session_module: Option<&str>,
    ordinal: usize,
) -> FeatureVector {
    QueryContext::new(index, embedder, query, session_module, &KindPrior::default()).features(ordinal)
}
