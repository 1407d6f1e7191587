use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use adstrength_core::analytics::{load_events, report as session_report, sessionize};
use adstrength_core::annindex::{AdIndex, IndexParams, SearchMode};
use adstrength_core::anonymize::{anonymize, BlockList};
use adstrength_core::corpus::{advertiser_overlap, split, write_ads, Ad, Fractions, SplitMode};
use adstrength_core::ctrmodel::{train, LrModel, TrainConfig, Variant};
use adstrength_core::embed::cosine;
use adstrength_core::metrics::{report as metrics_report, EvalRecord, Notion};
use adstrength_core::simpairs::{export_pairs, generate_pairs, import_pairs, pair_loss, Strategy};
use adstrength_core::synth;
use adstrength_core::textproc::{compose_ad_text, stopwords, AdText, FeatureScheme, Vocab};
use adstrength_core::tsi::{delta_sweep, precision_table, relative_lift, score_text, write_sweep_csv, TsiConfig};
use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::common::*;

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value_t = 13)]
    pub top_publishers: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PoolSummary {
    ads: usize,
    advertisers: usize,
    campaigns: usize,
    adgroups: usize,
    categories: BTreeMap<String, usize>,
    impressions: u64,
    clicks: u64,
    publisher_whitelist: Vec<String>,
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let pool = pool(&a.pool, a.top_publishers)?;
    let distinct = |f: fn(&Ad) -> &str| pool.ads().iter().map(f).collect::<BTreeSet<_>>().len();
    let mut categories = BTreeMap::new();
    for ad in pool.ads() {
        *categories.entry(ad.category.clone()).or_insert(0) += 1;
    }
    let summary = PoolSummary {
        ads: pool.len(),
        advertisers: distinct(|a| &a.advertiser_id),
        campaigns: distinct(|a| &a.campaign_id),
        adgroups: distinct(|a| &a.adgroup_id),
        categories,
        impressions: pool.ads().iter().map(|a| a.impressions).sum(),
        clicks: pool.ads().iter().map(|a| a.clicks).sum(),
        publisher_whitelist: pool.publisher_whitelist().to_vec(),
    };
    emit_json(&summary, a.out.as_deref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Warm,
    Cold,
}

impl From<ModeArg> for SplitMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Warm => SplitMode::Warm,
            ModeArg::Cold => SplitMode::Cold,
        }
    }
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, value_enum, default_value = "cold")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.8,0.06,0.14")]
    pub fractions: String,
    #[arg(long, default_value_t = 13)]
    pub top_publishers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SplitSummary {
    mode: SplitMode,
    seed: u64,
    train: usize,
    validation: usize,
    test: usize,
    advertiser_overlap: usize,
}

pub fn split_cmd(a: &SplitArgs) -> Result<()> {
    let pool = pool(&a.pool, a.top_publishers)?;
    let f: Vec<f64> = parse_list(&a.fractions, "fraction")?;
    let [train, validation, test] = f[..] else {
        return Err(invalid("--fractions needs three values"));
    };
    let fractions = Fractions::new(train, validation, test)?;
    let s = split(&pool, fractions, a.mode.into(), a.seed)?;
    let overlap = advertiser_overlap(&pool, &s);
    if s.mode == SplitMode::Cold && !overlap.is_empty() {
        anyhow::bail!("cold split shares advertisers across partitions: {overlap:?}");
    }
    s.save(&a.out)?;
    emit_json(
        &SplitSummary {
            mode: s.mode,
            seed: s.seed,
            train: s.train.len(),
            validation: s.validation.len(),
            test: s.test.len(),
            advertiser_overlap: overlap.len(),
        },
        None,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Lr,
    Nblr,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Lr => Variant::Lr,
            VariantArg::Nblr => Variant::Nblr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeaturesArg {
    Counts,
    Tfidf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub pool: PathBuf,
    /// Trains on the train partition; all ads when absent.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "nblr")]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value = "counts")]
    pub features: FeaturesArg,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub nb_alpha: Option<f64>,
    #[arg(long, default_value_t = 2)]
    pub min_df: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 13)]
    pub top_publishers: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch training loss as CSV.
    #[arg(long)]
    pub loss_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainSummary {
    variant: Variant,
    train_ads: usize,
    vocab_size: usize,
    epochs: usize,
    final_loss: Option<f64>,
    vocab_hash: String,
}

pub fn train_ctr(a: &TrainArgs) -> Result<()> {
    let pool = pool(&a.pool, a.top_publishers)?;
    let ads: Vec<&Ad> = match &a.split {
        Some(p) => partition(&pool, &split_file(p)?, Partition::Train)?,
        None => pool.ads().iter().collect(),
    };
    let d = TrainConfig::default();
    let config = TrainConfig {
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        epochs: a.epochs.unwrap_or(d.epochs),
        l2_penalty: a.l2.unwrap_or(d.l2_penalty),
        nb_alpha: a.nb_alpha.unwrap_or(d.nb_alpha),
        seed: a.seed,
        feature_scheme: match a.features {
            FeaturesArg::Counts => FeatureScheme::Counts,
            FeaturesArg::Tfidf => FeatureScheme::Tfidf,
        },
        max_publishers: a.top_publishers,
    };
    let vocab = Vocab::build(ads.iter().map(|ad| ad.text().into_string()), a.min_df);
    let (model, loss) = train::<f64>(ads.iter().copied(), &vocab, pool.publisher_whitelist(), &config, a.variant.into())?;
    model.save(&a.out)?;
    if let Some(p) = &a.loss_out {
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in loss.iter().enumerate() {
            writeln!(csv, "{},{l}", i + 1)?;
        }
        emit_text(&csv, Some(p))?;
    }
    emit_json(
        &TrainSummary {
            variant: model.variant(),
            train_ads: ads.len(),
            vocab_size: vocab.len(),
            epochs: loss.len(),
            final_loss: loss.last().copied(),
            vocab_hash: model.vocab_hash().to_string(),
        },
        None,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct EvalCtrArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// One or more trained models, one report row each.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub partition: Partition,
    #[arg(long, default_value_t = 13)]
    pub top_publishers: usize,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalRow {
    model: String,
    variant: Variant,
    auc: f64,
    upper_bound_auc: f64,
    relative_auc: f64,
    ktc: f64,
    srcc: f64,
}

#[derive(Serialize)]
struct EvalReport {
    split_mode: SplitMode,
    ads: usize,
    train_test_advertiser_overlap: usize,
    rows: Vec<EvalRow>,
}

pub fn eval_ctr(a: &EvalCtrArgs) -> Result<()> {
    let pool = pool(&a.pool, a.top_publishers)?;
    let s = split_file(&a.split)?;
    let train_adv: BTreeSet<&str> = partition(&pool, &s, Partition::Train)?
        .iter()
        .map(|ad| ad.advertiser_id.as_str())
        .collect();
    let ads = partition(&pool, &s, a.partition)?;
    let overlap = ads.iter().filter(|ad| train_adv.contains(ad.advertiser_id.as_str())).map(|ad| &ad.advertiser_id).collect::<BTreeSet<_>>().len();
    if s.mode == SplitMode::Cold && a.partition != Partition::Train && overlap != 0 {
        anyhow::bail!("cold split: {overlap} advertisers appear in both train and evaluation partitions");
    }
    let mut rows = Vec::new();
    for path in &a.model {
        require_file(path)?;
        let model = LrModel::<f64>::load(path).with_context(|| format!("loading model {}", path.display()))?;
        let records = EvalRecord::collect(ads.iter().copied(), &model)?;
        let r = metrics_report(&records)?;
        rows.push(EvalRow {
            model: path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
            variant: model.variant(),
            auc: r.auc,
            upper_bound_auc: r.upper_bound_auc,
            relative_auc: r.relative_auc,
            ktc: r.ktc,
            srcc: r.srcc,
        });
    }
    let report = EvalReport {
        split_mode: s.mode,
        ads: ads.len(),
        train_test_advertiser_overlap: overlap,
        rows,
    };
    match a.format {
        Format::Json => emit_json(&report, a.out.as_deref()),
        Format::Table => {
            let mut t = format!("{:<24} {:>8} {:>10} {:>8} {:>8}\n", "Model", "AUC", "Rel. AUC", "KTC", "SRCC");
            for r in &report.rows {
                let name = format!("{} ({:?})", r.model, r.variant);
                writeln!(t, "{name:<24} {:>8.4} {:>10.4} {:>8.4} {:>8.4}", r.auc, r.relative_auc, r.ktc, r.srcc)?;
            }
            writeln!(t, "upper-bound AUC {:.4} over {} ads ({:?} split, advertiser overlap {})", report.rows[0].upper_bound_auc, report.ads, report.split_mode, report.train_test_advertiser_overlap)?;
            emit_text(&t, a.out.as_deref())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    AdvertiserCat,
    CampaignCat,
    AdgroupCat,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::AdvertiserCat => Strategy::AdvertiserCat,
            StrategyArg::CampaignCat => Strategy::CampaignCat,
            StrategyArg::AdgroupCat => Strategy::AdgroupCat,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenPairsArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, value_enum, default_value = "advertiser-cat")]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = adstrength_core::simpairs::DEFAULT_NEG_RATIO)]
    pub neg_ratio: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = adstrength_core::simpairs::DEFAULT_POSITIVE_CAP)]
    pub positive_cap: usize,
    #[arg(long, default_value_t = 13)]
    pub top_publishers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct PairSummary {
    strategy: Strategy,
    positives: usize,
    negatives: usize,
}

pub fn gen_pairs(a: &GenPairsArgs) -> Result<()> {
    let pool = pool(&a.pool, a.top_publishers)?;
    let pairs = generate_pairs(pool.ads(), a.strategy.into(), a.neg_ratio, a.seed, a.positive_cap)?;
    export_pairs(&pairs, pool.ads(), &a.out)?;
    emit_json(
        &PairSummary {
            strategy: pairs.strategy,
            positives: pairs.positives(),
            negatives: pairs.negatives(),
        },
        None,
    )
}

#[derive(Debug, Args)]
pub struct EvalPairsArgs {
    /// Exported pairs from `gen-pairs`.
    #[arg(long)]
    pub pairs: PathBuf,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PairEval {
    pairs: usize,
    mean_loss: f64,
    mean_cosine_positive: Option<f64>,
    mean_cosine_negative: Option<f64>,
}

pub fn eval_pairs(a: &EvalPairsArgs) -> Result<()> {
    require_file(&a.pairs)?;
    let pairs = import_pairs(&a.pairs)?;
    if pairs.is_empty() {
        return Err(invalid("pair file is empty"));
    }
    let embedder = a.embed.provider(pairs.iter().flat_map(|p| [p.text_a.as_str(), p.text_b.as_str()]))?;
    let (mut loss, mut pos, mut neg) = (0.0, Vec::new(), Vec::new());
    for p in &pairs {
        let (x, y) = (embedder.embed(&AdText::new(&p.text_a))?, embedder.embed(&AdText::new(&p.text_b))?);
        loss += pair_loss(&x, &y, p.label)?;
        let c = cosine(&x, &y)?;
        if p.label > 0 { pos.push(c) } else { neg.push(c) }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    emit_json(
        &PairEval {
            pairs: pairs.len(),
            mean_loss: loss / pairs.len() as f64,
            mean_cosine_positive: mean(&pos),
            mean_cosine_negative: mean(&neg),
        },
        a.out.as_deref(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchArg {
    Hnsw,
    BruteForce,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub pool: PathBuf,
    /// Indexes only this partition of the split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "train")]
    pub partition: Partition,
    #[command(flatten)]
    pub pctr: PctrArgs,
    #[arg(long, default_value_t = 2000)]
    pub pctr_timeout_ms: u64,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[arg(long, value_enum, default_value = "hnsw")]
    pub mode: SearchArg,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub ef_construction: Option<usize>,
    #[arg(long)]
    pub ef_search: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 13)]
    pub top_publishers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct IndexSummary {
    ads: usize,
    dim: usize,
    digest: String,
}

pub fn build_index(a: &BuildIndexArgs) -> Result<()> {
    let pool = pool(&a.pool, a.top_publishers)?;
    let ads: Vec<&Ad> = match &a.split {
        Some(p) => partition(&pool, &split_file(p)?, a.partition)?,
        None => pool.ads().iter().collect(),
    };
    let texts: Vec<String> = ads.iter().map(|ad| ad.text().into_string()).collect();
    let embedder = a.embed.provider(texts.iter().map(String::as_str))?;
    let pctr = a.pctr.provider(Duration::from_millis(a.pctr_timeout_ms))?;
    let mut params = IndexParams {
        mode: match a.mode {
            SearchArg::Hnsw => SearchMode::Hnsw,
            SearchArg::BruteForce => SearchMode::BruteForce,
        },
        build_seed: a.seed,
        ..IndexParams::default()
    };
    if let Some(m) = a.m {
        params.hnsw.m = m;
    }
    if let Some(ef) = a.ef_construction {
        params.hnsw.ef_construction = ef;
    }
    if let Some(ef) = a.ef_search {
        params.hnsw.ef_search = ef;
    }
    let index = AdIndex::build(ads.iter().copied(), embedder.as_ref(), pctr.as_ref(), params)?;
    index.save(&a.out)?;
    emit_json(
        &IndexSummary {
            ads: index.len(),
            dim: index.dim(),
            digest: index.digest().to_string(),
        },
        None,
    )
}

fn load_index(path: &Path) -> Result<AdIndex> {
    require_file(path)?;
    AdIndex::load(path).with_context(|| format!("loading index {}", path.display()))
}

#[derive(Debug, Args)]
pub struct EvalRetrievalArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Index over the train partition.
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long, default_value = "1,5,10")]
    pub k: String,
    #[arg(long, default_value = "adgroup,campaign,advertiser,category")]
    pub notions: String,
    #[arg(long, value_enum, default_value = "test")]
    pub partition: Partition,
    #[arg(long, default_value_t = 13)]
    pub top_publishers: usize,
    #[arg(long, default_value_t = 2000)]
    pub embed_timeout_ms: u64,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn eval_retrieval(a: &EvalRetrievalArgs) -> Result<()> {
    let pool = pool(&a.pool, a.top_publishers)?;
    let s = split_file(&a.split)?;
    let index = load_index(&a.index)?;
    let embedder = index_embedder(index.embedder(), Duration::from_millis(a.embed_timeout_ms))?;
    let k_list: Vec<usize> = parse_list(&a.k, "k")?;
    let notions: Vec<Notion> = parse_list(&a.notions, "notion")?;
    let test = partition(&pool, &s, a.partition)?;
    let rows = precision_table(&index, &pool, test.iter().copied(), embedder.as_ref(), &notions, &k_list)?;
    match a.format {
        Format::Json => emit_json(&rows, a.out.as_deref()),
        Format::Table => {
            let mut t = format!("{:<12}", "Notion");
            for k in &k_list {
                write!(t, " {:>8}", format!("P@{k}"))?;
            }
            t.push('\n');
            for n in &notions {
                write!(t, "{:<12}", format!("{n:?}").to_lowercase())?;
                for r in rows.iter().filter(|r| r.notion == *n) {
                    write!(t, " {:>8.4}", r.precision)?;
                }
                t.push('\n');
            }
            emit_text(&t, a.out.as_deref())
        }
    }
}

#[derive(Debug, Args)]
pub struct TsiArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[command(flatten)]
    pub pctr: PctrArgs,
    #[arg(long, default_value = "")]
    pub title: String,
    #[arg(long, default_value = "")]
    pub description: String,
    #[arg(long, default_value = "")]
    pub cta: String,
    #[arg(long, default_value = adstrength_core::corpus::OTHER_PUBLISHER)]
    pub publisher: String,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0.3)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.6)]
    pub min_sim: f64,
    #[arg(long)]
    pub blocklist: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub timeout_ms: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Serialize)]
struct TsiOutput {
    input_pctr: f64,
    tsi: u8,
    median_above: Option<f64>,
    neighbors: Vec<TsiNeighbor>,
    suggestions: Vec<TsiNeighbor>,
}

#[derive(Serialize)]
struct TsiNeighbor {
    ad_id: String,
    pctr: f64,
    similarity: f64,
    lift: f64,
    text: String,
}

pub fn tsi(a: &TsiArgs) -> Result<()> {
    let text = compose_ad_text(&a.title, &a.description, &a.cta);
    if text.is_empty() {
        return Err(invalid("--title, --description or --cta must be non-empty"));
    }
    let config = TsiConfig::new(a.k, a.delta, a.min_sim)?;
    let timeout = Duration::from_millis(a.timeout_ms);
    let index = load_index(&a.index)?;
    let embedder = index_embedder(index.embedder(), timeout)?;
    let pctr = a.pctr.provider(timeout)?;
    let blocklist = match &a.blocklist {
        Some(p) => {
            require_file(p)?;
            BlockList::load(p)?
        }
        None => BlockList::empty(),
    };
    let r = score_text(&text, &a.publisher, &index, embedder.as_ref(), pctr.as_ref(), &config)?;
    let row = |n: &adstrength_core::NeighborF64, masked: bool| TsiNeighbor {
        ad_id: n.ad_id.clone(),
        pctr: n.pctr,
        similarity: n.similarity,
        lift: relative_lift(&n.pctr, &r.input_pctr),
        text: if masked {
            anonymize(&AdText::new(&n.text), &blocklist).into_string()
        } else {
            n.text.clone()
        },
    };
    let out = TsiOutput {
        input_pctr: r.input_pctr,
        tsi: r.tsi,
        median_above: r.median_above,
        neighbors: r.neighbors.iter().map(|n| row(n, false)).collect(),
        suggestions: r.suggestions.iter().map(|n| row(n, true)).collect(),
    };
    if a.json {
        return emit_json(&out, None);
    }
    let mut t = format!("input: {}\ninput pctr: {}\n", text.as_str(), out.input_pctr);
    writeln!(t, "neighbors (k={}, min_sim={}):", a.k, a.min_sim)?;
    for n in &out.neighbors {
        writeln!(t, "  {:<10} pctr {:<8} sim {:.3}  {}", n.ad_id, n.pctr, n.similarity, n.text)?;
    }
    match out.median_above {
        Some(m) => writeln!(
            t,
            "median pctr above input: {m} (relative lift {:.4}, delta {})",
            relative_lift(&m, &out.input_pctr),
            a.delta
        )?,
        None => writeln!(t, "no neighbor above input")?,
    }
    let verdict = if out.tsi == 0 { "weak" } else { "strong" };
    writeln!(t, "TSI = {} ({verdict})", out.tsi)?;
    if !out.suggestions.is_empty() {
        writeln!(t, "suggestions:")?;
        for n in &out.suggestions {
            writeln!(t, "  {:<10} pctr {:<8} lift {:.4}  {}", n.ad_id, n.pctr, n.lift, n.text)?;
        }
    }
    emit_text(&t, None)
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Index over the train ads.
    #[arg(long)]
    pub index: PathBuf,
    #[command(flatten)]
    pub pctr: PctrArgs,
    /// Test ads as a pool file.
    #[arg(long, conflicts_with_all = ["pool", "split"])]
    pub test: Option<PathBuf>,
    /// Pool and split whose test partition is swept.
    #[arg(long, requires = "split")]
    pub pool: Option<PathBuf>,
    #[arg(long, requires = "pool")]
    pub split: Option<PathBuf>,
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub deltas: String,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0.6)]
    pub min_sim: f64,
    #[arg(long, default_value_t = 13)]
    pub top_publishers: usize,
    #[arg(long, default_value_t = 2000)]
    pub timeout_ms: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn sweep_delta(a: &SweepArgs) -> Result<()> {
    let deltas: Vec<f64> = parse_list(&a.deltas, "delta")?;
    let config = TsiConfig::new(a.k, 0.0, a.min_sim)?;
    let timeout = Duration::from_millis(a.timeout_ms);
    let index = load_index(&a.index)?;
    let embedder = index_embedder(index.embedder(), timeout)?;
    let pctr = a.pctr.provider(timeout)?;
    let points = match (&a.test, &a.pool, &a.split) {
        (Some(t), _, _) => {
            let test = pool(t, a.top_publishers)?;
            delta_sweep(test.ads(), &index, embedder.as_ref(), pctr.as_ref(), &deltas, &config)?
        }
        (None, Some(p), Some(s)) => {
            let pool = pool(p, a.top_publishers)?;
            let s = split_file(s)?;
            let test = partition(&pool, &s, Partition::Test)?;
            delta_sweep(test.iter().copied(), &index, embedder.as_ref(), pctr.as_ref(), &deltas, &config)?
        }
        _ => return Err(invalid("give --test or both --pool and --split")),
    };
    let mut csv = Vec::new();
    write_sweep_csv(&points, &mut csv)?;
    emit_text(&String::from_utf8(csv)?, a.out.as_deref())
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Composer event log (JSON Lines).
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn analyze_sessions(a: &AnalyzeArgs) -> Result<()> {
    require_file(&a.events)?;
    let events = load_events(&a.events)?;
    for e in &events {
        e.validate()?;
    }
    let sessions = sessionize(events);
    emit_json(&session_report(&sessions, stopwords())?, a.out.as_deref())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML configuration; `ADSTRENGTH_*` variables override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    if let Some(p) = &a.config {
        require_file(p)?;
    }
    let config = adstrength_service::ServiceConfig::load(a.config.as_deref())?;
    let listen = config.listen;
    let state = Arc::new(adstrength_service::AppState::from_config(config)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        log::info!("listening on {}", listener.local_addr()?);
        adstrength_service::serve(state, listener).await?;
        Ok(())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorpusKind {
    /// Ads with planted CTR structure for model training.
    Ctr,
    /// Category-themed pool for retrieval precision.
    Retrieval,
    /// Paraphrase clusters with a pCTR table; `--out` gets train ads, `--test-out` test ads.
    Sweep,
    /// The five-neighbor rule example with its pCTR table.
    Worked,
    /// Composer event log with known session outcomes.
    Events,
    /// CTR corpus plus the probe cluster, with a model trained on the corpus only.
    Service,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: CorpusKind,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    #[arg(long)]
    pub pctr_out: Option<PathBuf>,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Advertisers in the CTR corpus.
    #[arg(long)]
    pub advertisers: Option<usize>,
    /// Ads in the retrieval pool or service fixture.
    #[arg(long)]
    pub ads: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub clusters: usize,
    #[arg(long, default_value_t = 5)]
    pub paraphrases: usize,
    #[arg(long, default_value_t = 300)]
    pub sessions: usize,
}

#[derive(Serialize)]
struct SynthSummary {
    kind: &'static str,
    seed: u64,
    records: usize,
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| invalid(format!("this corpus kind needs {flag}")))
}

pub fn synth_corpus(a: &SynthArgs) -> Result<()> {
    let (kind, records) = match a.kind {
        CorpusKind::Ctr => {
            let cfg = synth::CtrCorpusConfig {
                seed: a.seed,
                advertisers: a.advertisers.unwrap_or(synth::CtrCorpusConfig::default().advertisers),
                ..synth::CtrCorpusConfig::default()
            };
            let ads = synth::ctr_corpus(&cfg);
            write_ads(&a.out, &ads)?;
            ("ctr", ads.len())
        }
        CorpusKind::Retrieval => {
            let cfg = synth::RetrievalPoolConfig {
                seed: a.seed,
                ads: a.ads.unwrap_or(synth::RetrievalPoolConfig::default().ads),
                ..synth::RetrievalPoolConfig::default()
            };
            let ads = synth::retrieval_pool(&cfg);
            write_ads(&a.out, &ads)?;
            ("retrieval", ads.len())
        }
        CorpusKind::Sweep => {
            let f = synth::sweep_fixture(a.seed, a.clusters, a.paraphrases)?;
            write_ads(&a.out, &f.train)?;
            write_ads(need(&a.test_out, "--test-out")?, &f.test)?;
            f.pctr.save(need(&a.pctr_out, "--pctr-out")?)?;
            ("sweep", f.train.len() + f.test.len())
        }
        CorpusKind::Worked => {
            let ex = synth::worked_example()?;
            write_ads(&a.out, &ex.pool)?;
            ex.pctr.save(need(&a.pctr_out, "--pctr-out")?)?;
            ("worked", ex.pool.len())
        }
        CorpusKind::Events => {
            let log = synth::event_log(a.seed, a.sessions);
            let mut text = String::new();
            for e in &log.events {
                text.push_str(&serde_json::to_string(e)?);
                text.push('\n');
            }
            emit_text(&text, Some(&a.out))?;
            ("events", log.events.len())
        }
        CorpusKind::Service => {
            let model_out = need(&a.model_out, "--model-out")?;
            let f = synth::service_fixture(a.ads.unwrap_or(50_000), a.seed)?;
            write_ads(&a.out, f.pool.ads())?;
            f.model.save(model_out)?;
            ("service", f.pool.len())
        }
    };
    emit_json(
        &SynthSummary {
            kind,
            seed: a.seed,
            records,
        },
        None,
    )
}
