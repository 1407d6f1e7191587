//! Ad text composition, tokenization and bag-of-words features.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Real, Result};

/// The text of one ad: title, description and call to action joined with
/// period marks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdText(String);

impl AdText {
    /// Wraps already composed text, collapsing runs of whitespace.
    pub fn new(text: impl AsRef<str>) -> Self {
        AdText(collapse_whitespace(text.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for AdText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for AdText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

fn collapse_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// `title. description. cta`, skipping empty fields.
pub fn compose_ad_text(title: &str, description: &str, cta: &str) -> AdText {
    let parts: Vec<String> = [title, description, cta]
        .iter()
        .map(|f| collapse_whitespace(f))
        .filter(|f| !f.is_empty())
        .collect();
    AdText(parts.join(". "))
}

/// Han ideographs and kana have no word separators; each codepoint is its own
/// token.
fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF)
}

/// Splits on every non-alphanumeric codepoint and lowercases each token.
///
/// Splitting happens before lowercasing so that case mappings that expand
/// into combining marks cannot introduce new split points.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_cjk(c) {
            if let Some(s) = start.take() {
                tokens.push(text[s..i].to_lowercase());
            }
            tokens.push(c.to_lowercase().collect());
        } else if c.is_alphanumeric() {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            tokens.push(text[s..i].to_lowercase());
        }
    }
    if let Some(s) = start {
        tokens.push(text[s..].to_lowercase());
    }
    tokens
}

/// Sorted `(index, value)` pairs with strictly increasing indices and no
/// explicit zeros.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVec<T = f64> {
    entries: Vec<(u32, T)>,
}

impl<T: Real> SparseVec<T> {
    pub fn new() -> Self {
        SparseVec {
            entries: Vec::new(),
        }
    }

    /// Builds a vector from arbitrary pairs: duplicates are summed, zeros
    /// dropped.
    pub fn from_pairs(mut pairs: Vec<(u32, T)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(u32, T)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match entries.last_mut() {
                Some((j, acc)) if *j == i => *acc = *acc + v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|&(_, v)| v != T::zero());
        SparseVec { entries }
    }

    pub fn entries(&self) -> &[(u32, T)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l2_norm(&self) -> T {
        self.entries.iter().map(|&(_, v)| v * v).sum::<T>().sqrt()
    }

    /// Divides by the L2 norm; empty vectors stay empty.
    pub fn normalized(mut self) -> Self {
        let norm = self.l2_norm();
        if norm > T::zero() {
            for (_, v) in &mut self.entries {
                *v = *v / norm;
            }
        }
        self
    }

    pub fn dot_dense(&self, dense: &[T]) -> T {
        self.entries
            .iter()
            .map(|&(i, v)| v * dense[i as usize])
            .sum()
    }

    pub fn cast<U: Real>(&self) -> SparseVec<U> {
        SparseVec {
            entries: self
                .entries
                .iter()
                .map(|&(i, v)| (i, U::from_f64_lossy(v.as_f64())))
                .collect(),
        }
    }

    /// Elementwise product with a dense vector; entries that become zero are
    /// dropped.
    pub fn scaled_by(&self, factors: &[T]) -> Self {
        SparseVec {
            entries: self
                .entries
                .iter()
                .map(|&(i, v)| (i, v * factors[i as usize]))
                .filter(|&(_, v)| v != T::zero())
                .collect(),
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<T> {
        let mut out = vec![T::zero(); dim];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureScheme {
    Counts,
    #[default]
    Tfidf,
}

impl std::str::FromStr for FeatureScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "counts" => Ok(FeatureScheme::Counts),
            "tfidf" => Ok(FeatureScheme::Tfidf),
            other => Err(Error::InvalidArgument(format!("unknown feature scheme {other:?}"))),
        }
    }
}

pub const DEFAULT_MIN_DF: u32 = 2;

/// Token to column map with document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocab {
    tokens: Vec<String>,
    doc_freq: Vec<u32>,
    total_docs: u32,
    min_df: u32,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: BTreeMap<String, u32>,
    df: BTreeMap<String, u32>,
    total_docs: u32,
    min_df: u32,
}

impl From<Vocab> for VocabFile {
    fn from(v: Vocab) -> Self {
        VocabFile {
            tokens: v.tokens.iter().cloned().zip(0u32..).collect(),
            df: v.tokens.iter().cloned().zip(v.doc_freq.iter().copied()).collect(),
            total_docs: v.total_docs,
            min_df: v.min_df,
        }
    }
}

impl From<VocabFile> for Vocab {
    fn from(f: VocabFile) -> Self {
        let mut by_index: Vec<(u32, String)> = f.tokens.into_iter().map(|(t, i)| (i, t)).collect();
        by_index.sort();
        let tokens: Vec<String> = by_index.into_iter().map(|(_, t)| t).collect();
        let doc_freq = tokens.iter().map(|t| f.df.get(t).copied().unwrap_or(0)).collect();
        Vocab::from_parts(tokens, doc_freq, f.total_docs, f.min_df)
    }
}

impl Vocab {
    fn from_parts(tokens: Vec<String>, doc_freq: Vec<u32>, total_docs: u32, min_df: u32) -> Self {
        let index = tokens.iter().cloned().zip(0u32..).collect();
        Vocab {
            tokens,
            doc_freq,
            total_docs,
            min_df,
            index,
        }
    }

    /// Builds a vocabulary from the given documents, keeping tokens that occur
    /// in at least `min_df` of them. Columns follow lexicographic token order.
    pub fn build<I, S>(docs: I, min_df: u32) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut df: BTreeMap<String, u32> = BTreeMap::new();
        let mut total_docs = 0u32;
        for doc in docs {
            total_docs += 1;
            let unique: HashSet<String> = tokenize(doc.as_ref()).into_iter().collect();
            for tok in unique {
                *df.entry(tok).or_insert(0) += 1;
            }
        }
        let (tokens, doc_freq) = df.into_iter().filter(|&(_, n)| n >= min_df.max(1)).unzip();
        Vocab::from_parts(tokens, doc_freq, total_docs, min_df)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn total_docs(&self) -> u32 {
        self.total_docs
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    pub fn doc_freq(&self, index: u32) -> u32 {
        self.doc_freq[index as usize]
    }

    /// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, index: u32) -> f64 {
        let n = f64::from(self.total_docs);
        let df = f64::from(self.doc_freq(index));
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    /// Short content hash used to tie models to the vocabulary they were
    /// trained with.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.total_docs.to_le_bytes());
        for (t, df) in self.tokens.iter().zip(&self.doc_freq) {
            h.update((t.len() as u32).to_le_bytes());
            h.update(t.as_bytes());
            h.update(df.to_le_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }
}

/// Bag-of-words vector for `text`; out-of-vocabulary tokens are ignored.
pub fn featurize(text: &str, vocab: &Vocab, scheme: FeatureScheme) -> SparseVec<f64> {
    let pairs: Vec<(u32, f64)> = tokenize(text)
        .iter()
        .filter_map(|t| vocab.index_of(t))
        .map(|i| (i, 1.0))
        .collect();
    let counts = SparseVec::from_pairs(pairs);
    match scheme {
        FeatureScheme::Counts => counts,
        FeatureScheme::Tfidf => SparseVec {
            entries: counts
                .entries
                .into_iter()
                .map(|(i, c)| (i, c * vocab.idf(i)))
                .collect(),
        }
        .normalized(),
    }
}

const STOPWORDS_EN: &str = include_str!("stopwords_en.txt");

/// Frozen snapshot of 179 common English stopwords.
pub fn stopwords() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_EN
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    })
}
