use serde::{Deserialize, Serialize};

use super::{CorpusIndex, Embedder, FeatureVector, IndexError, KindPrior, QueryContext};

/// Linear scoring model `score = w · f + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankerWeights {
    pub w: [f64; FeatureVector::LEN],
    pub b: f64,
}

impl Default for RankerWeights {
    fn default() -> Self {
        RankerWeights {
            w: [0.4, 0.4, 0.1, 0.05, 0.0, 0.05],
            b: 0.0,
        }
    }
}

impl RankerWeights {
    pub fn new(w: [f64; FeatureVector::LEN], b: f64) -> Self {
        RankerWeights { w, b }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|x| x.is_finite()) && self.b.is_finite()
    }

    /// Summed left to right, then the bias, so any caller reproduces it exactly.
    pub fn score(&self, f: &FeatureVector) -> f64 {
        let f = f.to_array();
        let mut s = 0.0;
        for i in 0..FeatureVector::LEN {
            s += self.w[i] * f[i];
        }
        s + self.b
    }

    pub fn scaled(&self, c: f64) -> Self {
        RankerWeights {
            w: self.w.map(|x| x * c),
            b: self.b * c,
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, IndexError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let w: RankerWeights = serde_json::from_slice(&bytes).map_err(|e| IndexError::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if !w.is_finite() {
            return Err(IndexError::Format {
                path: path.to_path_buf(),
                reason: "weights must be finite".into(),
            });
        }
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("weights serialize");
        std::fs::write(path, json + "\n").map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub unit_id: String,
    pub features: FeatureVector,
    pub score: f64,
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOptions {
    pub k: usize,
    /// At most this many passages per resource; `None` disables the cap.
    pub per_resource_cap: Option<usize>,
    pub kind_prior: KindPrior,
}

impl RankOptions {
    pub fn top(k: usize) -> Self {
        RankOptions {
            k,
            ..Default::default()
        }
    }
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            k: 10,
            per_resource_cap: Some(2),
            kind_prior: KindPrior::default(),
        }
    }
}

/// Score every unit and return the top `k`, ordered by descending score with
/// ties broken by (resource order, seq), honouring the per-resource cap.
pub fn rank(
    index: &CorpusIndex,
    embedder: &dyn Embedder,
    query: &str,
    session_module: Option<&str>,
    weights: &RankerWeights,
    opts: &RankOptions,
) -> Result<Vec<ScoredPassage>, IndexError> {
    if index.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let ctx = QueryContext::new(index, embedder, query, session_module, &opts.kind_prior);
    rank_with_context(&ctx, weights, opts)
}

pub fn rank_with_context(
    ctx: &QueryContext<'_>,
    weights: &RankerWeights,
    opts: &RankOptions,
) -> Result<Vec<ScoredPassage>, IndexError> {
    if opts.k == 0 {
        return Err(IndexError::InvalidArgument("k must be at least 1".into()));
    }
    if !weights.is_finite() {
        return Err(IndexError::InvalidArgument("weights must be finite".into()));
    }
    let index = ctx.index();
    if index.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let mut scored: Vec<(usize, FeatureVector, f64)> = (0..index.len())
        .map(|o| {
            let f = ctx.features(o);
            (o, f, weights.score(&f))
        })
        .collect();
    scored.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then_with(|| index.order_key(a.0).cmp(&index.order_key(b.0)))
    });

    let mut per_resource = vec![0usize; index.corpus().resources.len()];
    let mut out = Vec::with_capacity(opts.k);
    for (ordinal, features, score) in scored {
        let res = index.order_key(ordinal).0 as usize;
        if let Some(cap) = opts.per_resource_cap {
            if per_resource[res] >= cap {
                continue;
            }
        }
        per_resource[res] += 1;
        out.push(ScoredPassage {
            unit_id: index.units()[ordinal].id.clone(),
            features,
            score,
            rank: out.len() as u32 + 1,
        });
        if out.len() == opts.k {
            break;
        }
    }
    Ok(out)
}
