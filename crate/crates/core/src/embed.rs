//! Embedding providers and cosine similarity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::textproc::{featurize, tokenize, AdText, FeatureScheme, Vocab};
use crate::{Error, ProviderError, Result};

/// Dense vector that is either unit length or all zeros (empty text).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Normalizes `raw`. A zero vector is kept as the designated zero
    /// embedding; non-finite components are rejected.
    pub fn from_raw(mut raw: Vec<f32>) -> Result<Self, ProviderError> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::NonFinite);
        }
        let norm = raw.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut raw {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        Ok(Embedding(raw))
    }

    pub fn zeros(dim: usize) -> Self {
        Embedding(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }
}

/// Dot product accumulated in f64. Each f32 product is exact in f64, so the
/// only rounding is in the summation.
pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Fast f32 dot product for candidate generation.
#[inline]
pub fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s: f32 = acc.iter().sum();
    for i in chunks * 8..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Cosine of two embeddings, clamped to [-1, 1]. The zero embedding has
/// similarity 0 to everything.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(dot_f64(a.as_slice(), b.as_slice()).clamp(-1.0, 1.0))
}

/// How an index's vectors were produced, so queries can be embedded the
/// same way later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Tfidf { vocab: Vocab },
    Hashed { dim: usize, seed: u64 },
    External { endpoint: String, dim: usize },
}

impl EmbedderSpec {
    pub fn dim(&self) -> usize {
        match self {
            EmbedderSpec::Tfidf { vocab } => vocab.len(),
            EmbedderSpec::Hashed { dim, .. } | EmbedderSpec::External { dim, .. } => *dim,
        }
    }

    /// Builds the in-process provider for native specs; external specs need
    /// a network client and return `None`.
    pub fn native(&self) -> Option<Box<dyn EmbeddingProvider>> {
        match self {
            EmbedderSpec::Tfidf { vocab } => Some(Box::new(TfidfEmbedder::new(vocab.clone()))),
            EmbedderSpec::Hashed { dim, seed } => HashedEmbedder::new(*dim, *seed)
                .ok()
                .map(|e| Box::new(e) as Box<dyn EmbeddingProvider>),
            EmbedderSpec::External { .. } => None,
        }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &AdText) -> Result<Embedding, ProviderError>;

    fn embed_batch(&self, texts: &[AdText]) -> Result<Vec<Embedding>, ProviderError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }

    fn spec(&self) -> EmbedderSpec;
}

impl<E: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, text: &AdText) -> Result<Embedding, ProviderError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[AdText]) -> Result<Vec<Embedding>, ProviderError> {
        (**self).embed_batch(texts)
    }
    fn spec(&self) -> EmbedderSpec {
        (**self).spec()
    }
}

impl<E: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<E> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, text: &AdText) -> Result<Embedding, ProviderError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[AdText]) -> Result<Vec<Embedding>, ProviderError> {
        (**self).embed_batch(texts)
    }
    fn spec(&self) -> EmbedderSpec {
        (**self).spec()
    }
}

/// L2-normalized tf-idf vector, densified over the vocabulary.
#[derive(Debug, Clone)]
pub struct TfidfEmbedder {
    vocab: Vocab,
}

impl TfidfEmbedder {
    pub fn new(vocab: Vocab) -> Self {
        TfidfEmbedder { vocab }
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }
}

impl EmbeddingProvider for TfidfEmbedder {
    fn dim(&self) -> usize {
        self.vocab.len()
    }

    fn embed(&self, text: &AdText) -> Result<Embedding, ProviderError> {
        let x = featurize(text.as_str(), &self.vocab, FeatureScheme::Tfidf);
        let dense: Vec<f32> = x.to_dense(self.vocab.len()).into_iter().map(|v| v as f32).collect();
        Embedding::from_raw(dense)
    }

    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec::Tfidf {
            vocab: self.vocab.clone(),
        }
    }
}

/// Sum of seeded Gaussian vectors, one per token unigram and bigram.
#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    dim: usize,
    seed: u64,
}

pub const MIN_HASHED_DIM: usize = 8;

impl HashedEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < MIN_HASHED_DIM {
            return Err(Error::InvalidArgument(format!("hashed embedding dim must be >= {MIN_HASHED_DIM}")));
        }
        Ok(HashedEmbedder { dim, seed })
    }

    fn add_feature(&self, feature: &str, acc: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(feature.as_bytes()) ^ self.seed);
        for v in acc.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v += g;
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &AdText) -> Result<Embedding, ProviderError> {
        let tokens = tokenize(text.as_str());
        let mut acc = vec![0.0f64; self.dim];
        for t in &tokens {
            self.add_feature(t, &mut acc);
        }
        for w in tokens.windows(2) {
            // Unit separator keeps bigrams apart from any unigram.
            self.add_feature(&format!("{}\u{1f}{}", w[0], w[1]), &mut acc);
        }
        Embedding::from_raw(acc.into_iter().map(|v| v as f32).collect())
    }

    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec::Hashed {
            dim: self.dim,
            seed: self.seed,
        }
    }
}
