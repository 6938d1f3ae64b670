//! Pairwise logistic (RankNet-style) training of [`RankerWeights`].
//!
//! The objective is the mean over triples of
//! `log(1 + exp(-(s(q, u+) - s(q, u-))))` with `s = w · f + b`, minimized by
//! full-batch gradient descent on fixed per-triple features. The bias cancels
//! in every score difference, so its gradient is zero.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusIndex, Embedder, FeatureVector, IndexError, KindPrior, QueryContext, RankerWeights};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTriple {
    pub query: String,
    pub positive_unit_id: String,
    pub negative_unit_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module_tag: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            learning_rate: 0.1,
            epochs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: RankerWeights,
    /// Loss before training followed by the loss after each epoch.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankerEval {
    pub pairwise_accuracy: f64,
    pub mrr: f64,
}

/// Features of the positive and negative unit of a triple.
pub type PairFeatures = (FeatureVector, FeatureVector);

pub fn pair_features(
    triples: &[TrainingTriple],
    index: &CorpusIndex,
    embedder: &dyn Embedder,
    prior: &KindPrior,
) -> Result<Vec<PairFeatures>, IndexError> {
    if triples.is_empty() {
        return Err(IndexError::NoTriples);
    }
    triples
        .iter()
        .map(|t| {
            if t.positive_unit_id == t.negative_unit_id {
                return Err(IndexError::InvalidTriple(format!(
                    "positive and negative are both `{}`",
                    t.positive_unit_id
                )));
            }
            let pos = index
                .ordinal_of(&t.positive_unit_id)
                .ok_or_else(|| IndexError::UnknownUnitId(t.positive_unit_id.clone()))?;
            let neg = index
                .ordinal_of(&t.negative_unit_id)
                .ok_or_else(|| IndexError::UnknownUnitId(t.negative_unit_id.clone()))?;
            let ctx = QueryContext::new(index, embedder, &t.query, t.module_tag.as_deref(), prior);
            Ok((ctx.features(pos), ctx.features(neg)))
        })
        .collect()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean pairwise logistic loss.
pub fn pairwise_loss(weights: &RankerWeights, pairs: &[PairFeatures]) -> f64 {
    let total: f64 = pairs
        .iter()
        .map(|(p, n)| softplus(-(weights.score(p) - weights.score(n))))
        .sum();
    total / pairs.len() as f64
}

/// Analytic gradient of [`pairwise_loss`]; the last component is the bias.
pub fn pairwise_gradient(weights: &RankerWeights, pairs: &[PairFeatures]) -> [f64; FeatureVector::LEN + 1] {
    let mut grad = [0.0; FeatureVector::LEN + 1];
    let scale = 1.0 / pairs.len() as f64;
    for (p, n) in pairs {
        let margin = weights.score(p) - weights.score(n);
        let coeff = -sigmoid(-margin) * scale;
        let (p, n) = (p.to_array(), n.to_array());
        for j in 0..FeatureVector::LEN {
            grad[j] += coeff * (p[j] - n[j]);
        }
    }
    grad
}

pub fn train_ranker(
    triples: &[TrainingTriple],
    index: &CorpusIndex,
    embedder: &dyn Embedder,
    init: RankerWeights,
    opts: TrainOptions,
) -> Result<TrainOutcome, IndexError> {
    if !(opts.learning_rate.is_finite() && opts.learning_rate > 0.0) {
        return Err(IndexError::InvalidArgument("learning rate must be positive".into()));
    }
    if !init.is_finite() {
        return Err(IndexError::InvalidArgument("initial weights must be finite".into()));
    }
    let pairs = pair_features(triples, index, embedder, &KindPrior::default())?;
    Ok(descend(&pairs, init, opts))
}

pub fn descend(pairs: &[PairFeatures], init: RankerWeights, opts: TrainOptions) -> TrainOutcome {
    let mut weights = init;
    let mut loss = pairwise_loss(&weights, pairs);
    let mut history = Vec::with_capacity(opts.epochs + 1);
    history.push(loss);
    let mut best = (loss, weights);
    for _ in 0..opts.epochs {
        let grad = pairwise_gradient(&weights, pairs);
        for j in 0..FeatureVector::LEN {
            weights.w[j] -= opts.learning_rate * grad[j];
        }
        weights.b -= opts.learning_rate * grad[FeatureVector::LEN];
        loss = pairwise_loss(&weights, pairs);
        history.push(loss);
        if loss <= best.0 {
            best = (loss, weights);
        }
    }
    TrainOutcome {
        weights: best.1,
        loss_history: history,
    }
}

/// Pairwise accuracy (ties count as failures) and mean reciprocal rank of
/// each positive among all units of the index.
pub fn evaluate_ranker(
    weights: &RankerWeights,
    triples: &[TrainingTriple],
    index: &CorpusIndex,
    embedder: &dyn Embedder,
) -> Result<RankerEval, IndexError> {
    if triples.is_empty() {
        return Err(IndexError::NoTriples);
    }
    let prior = KindPrior::default();
    let mut correct = 0usize;
    let mut rr_sum = 0.0;
    for t in triples {
        let pos = index
            .ordinal_of(&t.positive_unit_id)
            .ok_or_else(|| IndexError::UnknownUnitId(t.positive_unit_id.clone()))?;
        let neg = index
            .ordinal_of(&t.negative_unit_id)
            .ok_or_else(|| IndexError::UnknownUnitId(t.negative_unit_id.clone()))?;
        let ctx = QueryContext::new(index, embedder, &t.query, t.module_tag.as_deref(), &prior);
        let scores: Vec<f64> = (0..index.len()).map(|o| weights.score(&ctx.features(o))).collect();
        if scores[pos] > scores[neg] {
            correct += 1;
        }
        let pos_key = index.order_key(pos);
        let ahead = (0..index.len())
            .filter(|&o| {
                o != pos && (scores[o] > scores[pos] || (scores[o] == scores[pos] && index.order_key(o) < pos_key))
            })
            .count();
        rr_sum += 1.0 / (ahead + 1) as f64;
    }
    Ok(RankerEval {
        pairwise_accuracy: correct as f64 / triples.len() as f64,
        mrr: rr_sum / triples.len() as f64,
    })
}

/// Read line-delimited JSON triples; blank lines are skipped.
pub fn read_triples(path: impl AsRef<Path>) -> Result<Vec<TrainingTriple>, IndexError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TrainingTriple = serde_json::from_str(&line).map_err(|e| IndexError::Format {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", i + 1),
        })?;
        out.push(t);
    }
    Ok(out)
}

pub fn write_triples(path: impl AsRef<Path>, triples: &[TrainingTriple]) -> Result<(), IndexError> {
    let path = path.as_ref();
    let io_err = |source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for t in triples {
        let line = serde_json::to_string(t).expect("triple serializes");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
