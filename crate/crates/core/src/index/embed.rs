use crate::text;

/// Maps text to a unit-norm dense vector of fixed dimension.
pub trait Embedder: Send + Sync {
    /// Identifier recorded in persisted indices.
    fn id(&self) -> String;
    fn dimension(&self) -> usize;
    /// Returns a vector of length [`dimension`](Self::dimension). Text without
    /// tokens embeds to the zero vector; anything else has unit L2 norm.
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Signed feature hashing of lowercased unigrams, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub const DEFAULT_DIMENSION: usize = 256;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashingEmbedder { dimension }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(Self::DEFAULT_DIMENSION)
    }
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> String {
        format!("hashing-unigram-signed-v1/d{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, input: &str) -> Vec<f64> {
        let tokens = text::tokenize(input);
        let mut signed = vec![0.0; self.dimension];
        let mut unsigned = vec![0.0; self.dimension];
        for token in &tokens {
            let h = text::fnv1a(token.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            signed[bucket] += sign;
            unsigned[bucket] += 1.0;
        }
        // opposite signs can cancel exactly; fall back to counts then
        let v = if signed.iter().any(|x| *x != 0.0) { signed } else { unsigned };
        normalize(v)
    }
}

pub(crate) fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}
