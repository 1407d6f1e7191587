use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use adstrength_core::corpus::{load_pool, Ad, AdPool, Split};
use adstrength_core::ctrmodel::{LrModel, PctrProvider, PctrTable};
use adstrength_core::embed::{EmbeddingProvider, HashedEmbedder, TfidfEmbedder};
use adstrength_core::textproc::Vocab;
use adstrength_remote::{RemoteEmbedder, RemotePctr};
use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

/// Bad input from the caller; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

/// 2 for validation failures anywhere in the chain, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use adstrength_core::Error as E;
    for cause in err.chain() {
        if cause.is::<Invalid>() || cause.is::<clap::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<adstrength_service::Error>() {
            if matches!(e, adstrength_service::Error::Config(_)) {
                return 2;
            }
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Parse { .. }
                | E::ClicksExceedImpressions { .. }
                | E::DuplicateAd(_)
                | E::Hierarchy(_)
                | E::InvalidArgument(_)
                | E::DimensionMismatch { .. }
                | E::MissingEmbedding(_)
                | E::Format(_)
                | E::Json(_) => 2,
                E::Io(io) => io_code(io),
                _ => 1,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return io_code(io);
        }
    }
    1
}

fn io_code(io: &std::io::Error) -> i32 {
    use std::io::ErrorKind::*;
    match io.kind() {
        NotFound | PermissionDenied | InvalidData | IsADirectory => 2,
        _ => 1,
    }
}

pub fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{}: no such file", path.display())))
    }
}

pub fn pool(path: &Path, top_publishers: usize) -> Result<AdPool> {
    require_file(path)?;
    load_pool(path, top_publishers).with_context(|| format!("loading pool {}", path.display()))
}

pub fn split_file(path: &Path) -> Result<Split> {
    require_file(path)?;
    Split::load(path).with_context(|| format!("loading split {}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

pub fn partition<'a>(pool: &'a AdPool, split: &Split, part: Partition) -> Result<Vec<&'a Ad>> {
    let ids = match part {
        Partition::Train => &split.train,
        Partition::Validation => &split.validation,
        Partition::Test => &split.test,
    };
    ids.iter()
        .map(|id| pool.get(id).ok_or_else(|| invalid(format!("split references ad {id} missing from the pool"))))
        .collect()
}

/// Writes `value` as pretty JSON to `out`, or stdout when absent.
pub fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    emit_text(&format!("{text}\n"), out)
}

pub fn emit_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| invalid(format!("bad {what} value {x:?}"))))
        .collect()
}

/// Exactly one pCTR source.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct PctrArgs {
    /// Trained model JSON.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Precomputed pCTR table keyed by composed ad text.
    #[arg(long)]
    pub pctr_table: Option<PathBuf>,
    /// External pCTR service URL.
    #[arg(long)]
    pub pctr_endpoint: Option<String>,
}

impl PctrArgs {
    pub fn provider(&self, timeout: Duration) -> Result<Arc<dyn PctrProvider>> {
        if let Some(p) = &self.model {
            require_file(p)?;
            return Ok(Arc::new(LrModel::<f64>::load(p)?));
        }
        if let Some(p) = &self.pctr_table {
            require_file(p)?;
            return Ok(Arc::new(PctrTable::load(p)?));
        }
        if let Some(e) = &self.pctr_endpoint {
            return Ok(Arc::new(RemotePctr::new(e.clone(), timeout)));
        }
        Err(invalid("one of --model, --pctr-table, --pctr-endpoint is required"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderKind {
    Tfidf,
    Hashed,
    External,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long, value_enum, default_value = "tfidf")]
    pub embedder: EmbedderKind,
    /// Vector width for hashed and external embedders.
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    /// Seed of the hashed projection.
    #[arg(long, default_value_t = 0)]
    pub embed_seed: u64,
    /// Minimum document frequency of the tf-idf vocabulary.
    #[arg(long, default_value_t = 1)]
    pub min_df: u32,
    #[arg(long)]
    pub embed_endpoint: Option<String>,
    #[arg(long, default_value_t = 2000)]
    pub embed_timeout_ms: u64,
}

impl EmbedArgs {
    /// Provider for the requested kind; tf-idf fits on `corpus`.
    pub fn provider<'a>(&self, corpus: impl IntoIterator<Item = &'a str>) -> Result<Arc<dyn EmbeddingProvider>> {
        Ok(match self.embedder {
            EmbedderKind::Tfidf => Arc::new(TfidfEmbedder::new(Vocab::build(corpus, self.min_df))),
            EmbedderKind::Hashed => Arc::new(HashedEmbedder::new(self.dim, self.embed_seed)?),
            EmbedderKind::External => {
                let endpoint = self
                    .embed_endpoint
                    .clone()
                    .ok_or_else(|| invalid("--embedder external needs --embed-endpoint"))?;
                Arc::new(RemoteEmbedder::new(endpoint, self.dim, Duration::from_millis(self.embed_timeout_ms)))
            }
        })
    }
}

/// Embedder matching an index's recorded spec.
pub fn index_embedder(
    spec: &adstrength_core::embed::EmbedderSpec,
    timeout: Duration,
) -> Result<Arc<dyn EmbeddingProvider>> {
    if let Some(native) = spec.native() {
        return Ok(Arc::from(native));
    }
    RemoteEmbedder::from_spec(spec, timeout)
        .map(|e| Arc::new(e) as Arc<dyn EmbeddingProvider>)
        .ok_or_else(|| invalid("index embedder cannot be reconstructed"))
}
