//! Exact and approximate cosine k-NN over an embedded ad pool.

mod hnsw;
mod persist;

use std::cmp::Ordering;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use hnsw::{Hnsw, HnswParams};
pub use persist::{FORMAT_VERSION, MAGIC};

use crate::corpus::Ad;
use crate::ctrmodel::PctrProvider;
use crate::embed::{dot_f32, dot_f64, EmbedderSpec, Embedding, EmbeddingProvider};
use crate::textproc::AdText;
use crate::{Error, Result};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MIN_SIM: f64 = 0.6;
const EMBED_BATCH: usize = 256;

/// A retrieved pool ad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor<T> {
    pub ad_id: String,
    pub similarity: f64,
    pub pctr: T,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Hnsw,
    /// Candidate generation is a full scan; approximate queries are exact.
    BruteForce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexParams {
    pub mode: SearchMode,
    pub hnsw: HnswParams,
    pub build_seed: u64,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            mode: SearchMode::Hnsw,
            hnsw: HnswParams::default(),
            build_seed: 0,
        }
    }
}

/// Immutable index: ids, composed texts, unit vectors, precomputed pCTRs and
/// the candidate-generation graph.
#[derive(Debug)]
pub struct AdIndex {
    pub(crate) ids: Vec<String>,
    pub(crate) texts: Vec<String>,
    pub(crate) dim: usize,
    pub(crate) vectors: Vec<f32>,
    pub(crate) pctrs: Vec<f64>,
    pub(crate) params: IndexParams,
    pub(crate) embedder: EmbedderSpec,
    pub(crate) graph: Option<Hnsw>,
    pub(crate) digest: OnceLock<String>,
}

impl PartialEq for AdIndex {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
            && self.texts == other.texts
            && self.dim == other.dim
            && self.vectors == other.vectors
            && self.pctrs == other.pctrs
            && self.params == other.params
            && self.embedder == other.embedder
            && self.graph == other.graph
    }
}

/// One precomputed pool entry.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub ad_id: String,
    pub text: String,
    pub embedding: Embedding,
    pub pctr: f64,
}

impl AdIndex {
    /// Embeds every ad's composed text and scores it with its own publisher.
    pub fn build<'a, E, P>(ads: impl IntoIterator<Item = &'a Ad>, embedder: &E, pctr: &P, params: IndexParams) -> Result<AdIndex>
    where
        E: EmbeddingProvider + ?Sized,
        P: PctrProvider + ?Sized,
    {
        let ads: Vec<&Ad> = ads.into_iter().collect();
        let mut entries = Vec::with_capacity(ads.len());
        for chunk in ads.chunks(EMBED_BATCH) {
            let texts: Vec<AdText> = chunk.iter().map(|a| a.text()).collect();
            let embs = embedder.embed_batch(&texts).map_err(|source| Error::AdProvider {
                ad_id: chunk[0].ad_id.clone(),
                source,
            })?;
            if embs.len() != chunk.len() {
                return Err(Error::DimensionMismatch {
                    expected: chunk.len(),
                    got: embs.len(),
                });
            }
            for ((ad, text), embedding) in chunk.iter().zip(texts).zip(embs) {
                let p = pctr.predict(&text, &ad.publisher).map_err(|source| Error::AdProvider {
                    ad_id: ad.ad_id.clone(),
                    source,
                })?;
                entries.push(IndexEntry {
                    ad_id: ad.ad_id.clone(),
                    text: text.into_string(),
                    embedding,
                    pctr: p,
                });
            }
        }
        AdIndex::from_entries(entries, embedder.spec(), params)
    }

    pub fn from_entries(entries: Vec<IndexEntry>, embedder: EmbedderSpec, params: IndexParams) -> Result<AdIndex> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("cannot index an empty pool".into()));
        }
        let dim = embedder.dim();
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        let mut ids = Vec::with_capacity(entries.len());
        let mut texts = Vec::with_capacity(entries.len());
        let mut pctrs = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len() * dim);
        for e in entries {
            if e.embedding.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: e.embedding.dim(),
                });
            }
            if !seen.insert(e.ad_id.clone()) {
                return Err(Error::DuplicateAd(e.ad_id));
            }
            ids.push(e.ad_id);
            texts.push(e.text);
            pctrs.push(e.pctr);
            vectors.extend_from_slice(e.embedding.as_slice());
        }
        let graph = match params.mode {
            SearchMode::Hnsw => Some(Hnsw::build(&vectors, dim, params.hnsw, params.build_seed)),
            SearchMode::BruteForce => None,
        };
        Ok(AdIndex {
            ids,
            texts,
            dim,
            vectors,
            pctrs,
            params,
            embedder,
            graph,
            digest: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn pctrs(&self) -> &[f64] {
        &self.pctrs
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    /// Query-time beam width; the graph itself is unchanged.
    pub fn set_ef_search(&mut self, ef: usize) {
        self.params.hnsw.ef_search = ef.max(1);
        if let Some(g) = &mut self.graph {
            g.params.ef_search = ef.max(1);
        }
        self.digest = OnceLock::new();
    }

    pub fn embedder(&self) -> &EmbedderSpec {
        &self.embedder
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, ad_id: &str) -> Option<usize> {
        self.ids.iter().position(|id| id == ad_id)
    }

    /// Returns a copy of the stored embedding of row `i`.
    pub fn embedding(&self, i: usize) -> Embedding {
        Embedding::from_raw(self.vector(i).to_vec()).expect("stored vectors are finite")
    }

    /// Hex sha256 of the persisted form; identical builds share a digest.
    pub fn digest(&self) -> &str {
        self.digest.get_or_init(|| persist::digest(self))
    }

    fn neighbor(&self, i: usize, similarity: f64) -> Neighbor<f64> {
        Neighbor {
            ad_id: self.ids[i].clone(),
            similarity,
            pctr: self.pctrs[i],
            text: self.texts[i].clone(),
        }
    }

    fn check_query(&self, q: &Embedding, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if q.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.dim(),
            });
        }
        Ok(())
    }

    /// Sorts by similarity descending, ad_id ascending, then truncates.
    fn finish(&self, mut hits: Vec<(usize, f64)>, k: usize) -> Vec<Neighbor<f64>> {
        hits.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.ids[a.0].cmp(&self.ids[b.0]))
        });
        hits.truncate(k);
        hits.into_iter().map(|(i, s)| self.neighbor(i, s)).collect()
    }

    fn exact_sim(&self, q: &Embedding, i: usize) -> f64 {
        dot_f64(q.as_slice(), self.vector(i)).clamp(-1.0, 1.0)
    }

    /// Full scan.
    pub fn query_exact(&self, q: &Embedding, k: usize, min_sim: f64, exclude: Option<&str>) -> Result<Vec<Neighbor<f64>>> {
        self.check_query(q, k)?;
        let hits: Vec<(usize, f64)> = (0..self.len())
            .filter(|&i| exclude != Some(self.ids[i].as_str()))
            .map(|i| (i, self.exact_sim(q, i)))
            .filter(|&(_, s)| s >= min_sim)
            .collect();
        Ok(self.finish(hits, k))
    }

    /// Graph-generated candidates, re-scored exactly. Falls back to the scan
    /// in brute-force mode.
    pub fn query_approx(&self, q: &Embedding, k: usize, min_sim: f64, exclude: Option<&str>) -> Result<Vec<Neighbor<f64>>> {
        self.check_query(q, k)?;
        let Some(graph) = &self.graph else {
            return self.query_exact(q, k, min_sim, exclude);
        };
        let ef = self.params.hnsw.ef_search.max(k + usize::from(exclude.is_some()));
        let hits: Vec<(usize, f64)> = graph
            .search(q.as_slice(), ef, &self.vectors, self.dim)
            .into_iter()
            .map(|i| i as usize)
            .filter(|&i| exclude != Some(self.ids[i].as_str()))
            .map(|i| (i, self.exact_sim(q, i)))
            .filter(|&(_, s)| s >= min_sim)
            .collect();
        Ok(self.finish(hits, k))
    }

    /// Fast f32 similarity used by benchmarks.
    pub fn approx_sim(&self, q: &Embedding, i: usize) -> f32 {
        dot_f32(q.as_slice(), self.vector(i))
    }
}

/// Mean of |approx ∩ exact| / min(k, n) over the queries, with no
/// similarity floor.
pub fn recall_at_k(index: &AdIndex, queries: &[Embedding], k: usize) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("no queries".into()));
    }
    let denom = k.min(index.len()) as f64;
    let mut total = 0.0;
    for q in queries {
        let exact: std::collections::HashSet<String> =
            index.query_exact(q, k, -1.0, None)?.into_iter().map(|n| n.ad_id).collect();
        let hit = index
            .query_approx(q, k, -1.0, None)?
            .iter()
            .filter(|n| exact.contains(&n.ad_id))
            .count();
        total += hit as f64 / denom;
    }
    Ok(total / queries.len() as f64)
}

#[cfg(test)]
mod tests;
