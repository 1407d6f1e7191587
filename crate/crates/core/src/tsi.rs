//! The strength rule, the threshold sweep and retrieval precision tables.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use crate::annindex::Neighbor;

use crate::annindex::AdIndex;
use crate::corpus::{Ad, AdPool};
use crate::ctrmodel::PctrProvider;
use crate::embed::EmbeddingProvider;
use crate::metrics::{precision_at_k, Notion};
use crate::textproc::AdText;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsiConfig<T> {
    pub k: usize,
    pub delta: T,
    pub min_sim: f64,
}

impl Default for TsiConfig<f64> {
    fn default() -> Self {
        TsiConfig {
            k: crate::annindex::DEFAULT_K,
            delta: 0.3,
            min_sim: crate::annindex::DEFAULT_MIN_SIM,
        }
    }
}

impl<T: Scalar> TsiConfig<T> {
    pub fn new(k: usize, delta: T, min_sim: f64) -> Result<Self> {
        let c = TsiConfig { k, delta, min_sim };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if !(self.delta >= T::zero()) {
            return Err(Error::InvalidArgument("delta must be >= 0".into()));
        }
        if !(-1.0..=1.0).contains(&self.min_sim) {
            return Err(Error::InvalidArgument("min_sim must be in [-1, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsiResult<T> {
    /// 0 = weak, 1 = strong.
    pub tsi: u8,
    pub input_pctr: T,
    pub neighbors: Vec<Neighbor<T>>,
    pub suggestions: Vec<Neighbor<T>>,
    /// Median pCTR of the neighbors strictly above the input, if any.
    pub median_above: Option<T>,
}

impl<T> TsiResult<T> {
    pub fn is_weak(&self) -> bool {
        self.tsi == 0
    }
}

/// `(p - input) / input`.
pub fn relative_lift<T: Scalar>(p: &T, input: &T) -> T {
    (p.clone() - input.clone()) / input.clone()
}

fn median<T: Scalar>(mut v: Vec<T>) -> Option<T> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2].clone()
    } else {
        (v[n / 2 - 1].clone() + v[n / 2].clone()) / T::two()
    })
}

/// Applies the rule: the ad is weak when the median pCTR of neighbors
/// strictly above it beats it by more than `delta` relative. Weak ads get
/// every neighbor whose own lift clears `delta` as a suggestion, highest
/// pCTR first.
pub fn tsi_score<T: Scalar>(input_pctr: T, neighbors: Vec<Neighbor<T>>, config: &TsiConfig<T>) -> Result<TsiResult<T>> {
    if !(input_pctr > T::zero() && input_pctr < T::one()) {
        return Err(Error::InvalidArgument(format!("input pctr {input_pctr:?} outside (0, 1)")));
    }
    let above: Vec<T> = neighbors
        .iter()
        .filter(|n| n.pctr > input_pctr)
        .map(|n| n.pctr.clone())
        .collect();
    let median_above = median(above);
    let weak = median_above
        .as_ref()
        .is_some_and(|m| relative_lift(m, &input_pctr) > config.delta);
    let mut suggestions: Vec<Neighbor<T>> = if weak {
        neighbors
            .iter()
            .filter(|n| relative_lift(&n.pctr, &input_pctr) > config.delta)
            .cloned()
            .collect()
    } else {
        Vec::new()
    };
    suggestions.sort_by(|a, b| {
        b.pctr
            .partial_cmp(&a.pctr)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.ad_id.cmp(&b.ad_id))
    });
    Ok(TsiResult {
        tsi: if weak { 0 } else { 1 },
        input_pctr,
        neighbors,
        suggestions,
        median_above,
    })
}

/// pCTR of the input and its retrieved neighbors, before the rule is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub input_pctr: f64,
    pub neighbors: Vec<Neighbor<f64>>,
}

/// Predicts, embeds and retrieves for one ad text.
pub fn score_inputs<E, P>(
    text: &AdText,
    publisher: &str,
    index: &AdIndex,
    embedder: &E,
    pctr: &P,
    config: &TsiConfig<f64>,
) -> Result<Scored>
where
    E: EmbeddingProvider + ?Sized,
    P: PctrProvider + ?Sized,
{
    let input_pctr = pctr.predict(text, publisher)?;
    let q = embedder.embed(text)?;
    let neighbors = index.query_approx(&q, config.k, config.min_sim, None)?;
    Ok(Scored {
        input_pctr,
        neighbors,
    })
}

/// Full library composition: pCTR, retrieval, rule.
pub fn score_text<E, P>(
    text: &AdText,
    publisher: &str,
    index: &AdIndex,
    embedder: &E,
    pctr: &P,
    config: &TsiConfig<f64>,
) -> Result<TsiResult<f64>>
where
    E: EmbeddingProvider + ?Sized,
    P: PctrProvider + ?Sized,
{
    config.validate()?;
    let s = score_inputs(text, publisher, index, embedder, pctr, config)?;
    tsi_score(s.input_pctr, s.neighbors, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub rate: f64,
}

/// Fraction of `test_ads` rated weak at each threshold.
pub fn delta_sweep<'a, E, P>(
    test_ads: impl IntoIterator<Item = &'a Ad>,
    index: &AdIndex,
    embedder: &E,
    pctr: &P,
    deltas: &[f64],
    config: &TsiConfig<f64>,
) -> Result<Vec<SweepPoint>>
where
    E: EmbeddingProvider + ?Sized,
    P: PctrProvider + ?Sized,
{
    if deltas.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("deltas must be sorted ascending".into()));
    }
    if deltas.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::InvalidArgument("deltas must be >= 0".into()));
    }
    let mut scored = Vec::new();
    for ad in test_ads {
        let s = score_inputs(&ad.text(), &ad.publisher, index, embedder, pctr, config).map_err(|e| match e {
            Error::Provider(source) => Error::AdProvider {
                ad_id: ad.ad_id.clone(),
                source,
            },
            other => other,
        })?;
        scored.push(s);
    }
    sweep_scored(&scored, deltas, config)
}

/// Sweep over already retrieved inputs.
pub fn sweep_scored(scored: &[Scored], deltas: &[f64], config: &TsiConfig<f64>) -> Result<Vec<SweepPoint>> {
    if scored.is_empty() {
        return Err(Error::InvalidArgument("no test ads".into()));
    }
    if deltas.is_empty() || deltas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("deltas must be non-empty and strictly increasing".into()));
    }
    deltas
        .iter()
        .map(|&delta| {
            let cfg = TsiConfig { delta, ..config.clone() };
            let mut weak = 0usize;
            for s in scored {
                if tsi_score(s.input_pctr, s.neighbors.clone(), &cfg)?.is_weak() {
                    weak += 1;
                }
            }
            Ok(SweepPoint {
                delta,
                rate: weak as f64 / scored.len() as f64,
            })
        })
        .collect()
}

pub fn write_sweep_csv(points: &[SweepPoint], mut w: impl Write) -> Result<()> {
    writeln!(w, "delta,rate")?;
    for p in points {
        writeln!(w, "{},{}", p.delta, p.rate)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRow {
    pub notion: Notion,
    pub k: usize,
    pub precision: f64,
    /// Queries that retrieved fewer than `k` ads.
    pub short_lists: usize,
}

/// Mean precision@k for every (notion, k) over `test_ads`, retrieving from
/// an index built on the train ads in `pool`.
pub fn precision_table<'a, E>(
    index: &AdIndex,
    pool: &AdPool,
    test_ads: impl IntoIterator<Item = &'a Ad>,
    embedder: &E,
    notions: &[Notion],
    k_list: &[usize],
) -> Result<Vec<PrecisionRow>>
where
    E: EmbeddingProvider + ?Sized,
{
    let kmax = k_list.iter().copied().max().ok_or_else(|| Error::InvalidArgument("empty k list".into()))?;
    let mut sums = vec![(0.0f64, 0usize); notions.len() * k_list.len()];
    let mut queries = 0usize;
    for ad in test_ads {
        let q = embedder.embed(&ad.text())?;
        let hits = index.query_approx(&q, kmax, -1.0, Some(&ad.ad_id))?;
        let retrieved: Vec<&Ad> = hits
            .iter()
            .map(|n| pool.get(&n.ad_id).ok_or_else(|| Error::InvalidArgument(format!("indexed ad {} not in pool", n.ad_id))))
            .collect::<Result<_>>()?;
        for (ni, &notion) in notions.iter().enumerate() {
            for (ki, &k) in k_list.iter().enumerate() {
                let p = precision_at_k(ad, &retrieved, k, notion)?;
                let slot = &mut sums[ni * k_list.len() + ki];
                slot.0 += p.value;
                slot.1 += usize::from(p.short);
            }
        }
        queries += 1;
    }
    if queries == 0 {
        return Err(Error::InvalidArgument("no test ads".into()));
    }
    let mut rows = Vec::new();
    for (ni, &notion) in notions.iter().enumerate() {
        for (ki, &k) in k_list.iter().enumerate() {
            let (sum, short) = sums[ni * k_list.len() + ki];
            rows.push(PrecisionRow {
                notion,
                k,
                precision: sum / queries as f64,
                short_lists: short,
            });
        }
    }
    Ok(rows)
}
