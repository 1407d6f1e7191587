use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use adstrength_core::analytics::UiEvent;
use adstrength_core::annindex::{AdIndex, IndexParams};
use adstrength_core::anonymize::BlockList;
use adstrength_core::corpus::{load_pool, Ad};
use adstrength_core::ctrmodel::{LrModel, PctrProvider, PctrTable};
use adstrength_core::embed::{EmbedderSpec, EmbeddingProvider, HashedEmbedder, TfidfEmbedder};
use adstrength_core::textproc::Vocab;
use adstrength_core::tsi::TsiConfig;
use adstrength_remote::{RemoteEmbedder, RemotePctr};

use crate::config::{Budgets, RebuildEmbedder, ServiceConfig};
use crate::{Error, Result};

/// One immutable index generation with the providers it was built with.
pub struct Snapshot {
    pub generation: u64,
    pub index: Arc<AdIndex>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub pctr: Arc<dyn PctrProvider>,
}

/// Shared request state. Handlers clone the current snapshot `Arc` once and
/// use it for the whole request, so a concurrent swap never mixes
/// generations within a response.
pub struct AppState {
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    generations: AtomicU64,
    pctr: Arc<dyn PctrProvider>,
    pub tsi: TsiConfig<f64>,
    pub budgets: Budgets,
    pub blocklist: BlockList,
    pub config: ServiceConfig,
    events: Mutex<Option<File>>,
    rebuild: tokio::sync::Mutex<()>,
}

/// Embedding provider for an index's recorded spec.
pub fn embedder_for(spec: &EmbedderSpec, budgets: &Budgets) -> Arc<dyn EmbeddingProvider> {
    match spec.native() {
        Some(native) => Arc::from(native),
        None => match RemoteEmbedder::from_spec(spec, budgets.retrieval()) {
            Some(remote) => Arc::new(remote),
            None => unreachable!("non-native specs are external"),
        },
    }
}

fn pctr_from_config(cfg: &ServiceConfig) -> Result<Arc<dyn PctrProvider>> {
    if let Some(p) = &cfg.model_path {
        return Ok(Arc::new(LrModel::<f64>::load(p)?));
    }
    if let Some(e) = &cfg.pctr_endpoint {
        return Ok(Arc::new(RemotePctr::new(e.clone(), cfg.budgets.pctr())));
    }
    if let Some(p) = &cfg.pctr_table_path {
        return Ok(Arc::new(PctrTable::load(p)?));
    }
    Err(Error::Config("no pCTR source configured".into()))
}

impl AppState {
    /// State with the given providers and no index.
    pub fn new(config: ServiceConfig, pctr: Arc<dyn PctrProvider>, blocklist: BlockList) -> Result<Self> {
        let tsi = config.tsi.to_config()?;
        Ok(AppState {
            snapshot: RwLock::new(None),
            generations: AtomicU64::new(0),
            pctr,
            tsi,
            budgets: config.budgets,
            blocklist,
            config,
            events: Mutex::new(None),
            rebuild: tokio::sync::Mutex::new(()),
        })
    }

    /// Loads providers, the block list and, when configured, the startup
    /// index.
    pub fn from_config(config: ServiceConfig) -> Result<Self> {
        config.validate()?;
        let pctr = pctr_from_config(&config)?;
        let blocklist = match &config.blocklist_path {
            Some(p) => BlockList::load(p)?,
            None => BlockList::empty(),
        };
        let state = AppState::new(config, pctr, blocklist)?;
        if let Some(path) = &state.config.index_path {
            let index = AdIndex::load(path)?;
            let embedder = embedder_for(index.embedder(), &state.budgets);
            state.install(index, embedder);
        } else if state.config.build_on_start {
            state.rebuild_blocking()?;
        }
        Ok(state)
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn pctr(&self) -> Arc<dyn PctrProvider> {
        self.pctr.clone()
    }

    /// Publishes a new generation; readers holding the previous snapshot
    /// finish on it.
    pub fn install(&self, index: AdIndex, embedder: Arc<dyn EmbeddingProvider>) -> Arc<Snapshot> {
        let generation = self.generations.fetch_add(1, Ordering::SeqCst) + 1;
        let snap = Arc::new(Snapshot {
            generation,
            index: Arc::new(index),
            embedder,
            pctr: self.pctr.clone(),
        });
        *self.snapshot.write().expect("snapshot lock") = Some(snap.clone());
        log::info!("serving index generation {generation} ({} ads)", snap.index.len());
        snap
    }

    fn rebuild_embedder(&self, ads: &[Ad]) -> Result<Arc<dyn EmbeddingProvider>> {
        if let Some(current) = self.snapshot() {
            return Ok(current.embedder.clone());
        }
        Ok(match &self.config.embedder {
            RebuildEmbedder::Hashed { dim, seed } => Arc::new(HashedEmbedder::new(*dim, *seed)?),
            RebuildEmbedder::Tfidf { min_df } => {
                Arc::new(TfidfEmbedder::new(Vocab::build(ads.iter().map(|a| a.text().into_string()), *min_df)))
            }
            RebuildEmbedder::External { endpoint, dim } => {
                Arc::new(RemoteEmbedder::new(endpoint.clone(), *dim, self.budgets.retrieval()))
            }
        })
    }

    /// Builds an index over `ads` and swaps it in. On error the current
    /// generation keeps serving.
    pub fn rebuild_from_ads(&self, ads: &[Ad], params: IndexParams) -> Result<Arc<Snapshot>> {
        let embedder = self.rebuild_embedder(ads)?;
        let index = AdIndex::build(ads, embedder.as_ref(), self.pctr.as_ref(), params)?;
        Ok(self.install(index, embedder))
    }

    /// Rebuild from the configured pool file.
    pub fn rebuild_blocking(&self) -> Result<Arc<Snapshot>> {
        let path = self
            .config
            .pool_path
            .as_ref()
            .ok_or_else(|| Error::Config("no pool_path configured".into()))?;
        let pool = load_pool(path, self.config.top_publishers)?;
        self.rebuild_from_ads(pool.ads(), self.config.index)
    }

    /// Serializes concurrent rebuild requests.
    pub async fn rebuild_guard(&self) -> tokio::sync::MutexGuard<'_, ()> {
        self.rebuild.lock().await
    }

    /// Validates every event, then appends all of them as JSON lines.
    pub fn append_events(&self, events: &[UiEvent]) -> Result<usize> {
        for e in events {
            e.validate()?;
        }
        let mut guard = self.events.lock().expect("event log lock");
        if guard.is_none() {
            *guard = Some(open_append(&self.config.events_path)?);
        }
        let file = guard.as_mut().expect("opened above");
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e)?;
            buf.push(b'\n');
        }
        file.write_all(&buf)?;
        file.flush()?;
        Ok(events.len())
    }
}

fn open_append(path: &Path) -> Result<File> {
    Ok(OpenOptions::new().create(true).append(true).open(path)?)
}
