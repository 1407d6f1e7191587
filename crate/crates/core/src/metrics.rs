//! Evaluation metrics: impression-weighted AUC, relative AUC, Kendall tau-b,
//! Spearman correlation and hierarchy precision@k.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::Ad;
use crate::ctrmodel::PctrProvider;
use crate::{Error, Result};

/// One evaluated ad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub ad_id: String,
    pub pctr: f64,
    pub true_ctr: f64,
    pub clicks: u64,
    pub impressions: u64,
}

impl EvalRecord {
    /// Scores every ad with at least one impression.
    pub fn collect<'a, P: PctrProvider + ?Sized>(
        ads: impl IntoIterator<Item = &'a Ad>,
        provider: &P,
    ) -> Result<Vec<EvalRecord>> {
        ads.into_iter()
            .filter(|ad| ad.impressions > 0)
            .map(|ad| {
                let pctr = provider
                    .predict(&ad.text(), &ad.publisher)
                    .map_err(|source| Error::AdProvider {
                        ad_id: ad.ad_id.clone(),
                        source,
                    })?;
                Ok(EvalRecord {
                    ad_id: ad.ad_id.clone(),
                    pctr,
                    true_ctr: ad.clicks as f64 / ad.impressions as f64,
                    clicks: ad.clicks,
                    impressions: ad.impressions,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreField {
    Pctr,
    TrueCtr,
}

fn cmp_scores<T: PartialOrd>(a: &T, b: &T) -> Result<Ordering> {
    a.partial_cmp(b)
        .ok_or_else(|| Error::InvalidArgument("scores must be totally ordered (no NaN)".into()))
}

fn sort_indices<T: PartialOrd>(scores: &[T]) -> Result<Vec<usize>> {
    if let Some(i) = scores.iter().position(|s| s.partial_cmp(s).is_none()) {
        return Err(Error::InvalidArgument(format!("score {i} is not comparable")));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    Ok(idx)
}

/// AUC where every impression is a sample: an ad contributes `clicks`
/// positives and `impressions - clicks` negatives, all sharing its score.
/// Tied scores count one half per pair.
pub fn weighted_auc_scores<T: PartialOrd>(scores: &[T], clicks: &[u64], impressions: &[u64]) -> Result<f64> {
    if scores.len() != clicks.len() || scores.len() != impressions.len() {
        return Err(Error::InvalidArgument("parallel slices differ in length".into()));
    }
    let pos: u128 = clicks.iter().map(|&c| u128::from(c)).sum();
    let neg: u128 = impressions
        .iter()
        .zip(clicks)
        .map(|(&i, &c)| u128::from(i.saturating_sub(c)))
        .sum();
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate("AUC needs both click and non-click mass".into()));
    }
    let order = sort_indices(scores)?;
    // Twice the Mann-Whitney numerator, accumulated exactly.
    let mut twice_num: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u128, 0u128);
        while j < order.len() && cmp_scores(&scores[order[j]], &scores[order[i]])? == Ordering::Equal {
            let k = order[j];
            gp += u128::from(clicks[k]);
            gn += u128::from(impressions[k].saturating_sub(clicks[k]));
            j += 1;
        }
        twice_num += 2 * gp * neg_below + gp * gn;
        neg_below += gn;
        i = j;
    }
    Ok(twice_num as f64 / (2.0 * pos as f64 * neg as f64))
}

pub fn weighted_auc(records: &[EvalRecord], field: ScoreField) -> Result<f64> {
    let scores: Vec<f64> = records
        .iter()
        .map(|r| match field {
            ScoreField::Pctr => r.pctr,
            ScoreField::TrueCtr => r.true_ctr,
        })
        .collect();
    let clicks: Vec<u64> = records.iter().map(|r| r.clicks).collect();
    let imps: Vec<u64> = records.iter().map(|r| r.impressions).collect();
    weighted_auc_scores(&scores, &clicks, &imps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeAuc {
    pub auc: f64,
    pub upper_bound: f64,
    pub ratio: f64,
}

/// AUC against the upper bound reached by scoring with the observed CTR.
pub fn relative_auc(records: &[EvalRecord]) -> Result<RelativeAuc> {
    let auc = weighted_auc(records, ScoreField::Pctr)?;
    let upper_bound = weighted_auc(records, ScoreField::TrueCtr)?;
    Ok(RelativeAuc {
        auc,
        upper_bound,
        ratio: auc / upper_bound,
    })
}

/// Kendall tau-b in O(n log n): sort by (x, y), count discordances with a
/// merge sort over y.
pub fn kendall_tau_b<T: PartialOrd + Clone>(x: &[T], y: &[T]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len();
    let mut idx = sort_indices(x)?;
    sort_indices(y)?;
    idx.sort_by(|&a, &b| {
        x[a].partial_cmp(&x[b])
            .unwrap_or(Ordering::Equal)
            .then_with(|| y[a].partial_cmp(&y[b]).unwrap_or(Ordering::Equal))
    });

    let ties = |same: &dyn Fn(usize, usize) -> bool, order: &[usize]| -> u64 {
        let mut total = 0u64;
        let mut run = 1u64;
        for w in order.windows(2) {
            if same(w[0], w[1]) {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };
    let eq = |a: &T, b: &T| a.partial_cmp(b) == Some(Ordering::Equal);
    let x_ties = ties(&|a, b| eq(&x[a], &x[b]), &idx);
    let both_ties = ties(&|a, b| eq(&x[a], &x[b]) && eq(&y[a], &y[b]), &idx);

    let mut ys: Vec<T> = idx.iter().map(|&i| y[i].clone()).collect();
    let swaps = merge_count(&mut ys);
    let y_order: Vec<usize> = (0..n).collect();
    let y_ties = ties(&|a, b| eq(&ys[a], &ys[b]), &y_order);

    let pairs = (n as u64) * (n as u64 - 1) / 2;
    let con_minus_dis = pairs as i128 - x_ties as i128 - y_ties as i128 + both_ties as i128 - 2 * swaps as i128;
    let denom = ((pairs - x_ties) as f64) * ((pairs - y_ties) as f64);
    if pairs == x_ties || pairs == y_ties {
        return Err(Error::Degenerate("tau-b undefined when one ranking is all ties".into()));
    }
    Ok(con_minus_dis as f64 / denom.sqrt())
}

/// Sorts ascending, returning the number of strict inversions.
fn merge_count<T: PartialOrd + Clone>(v: &mut [T]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            count += (mid - i) as u64;
            merged.push(v[j].clone());
            j += 1;
        } else {
            merged.push(v[i].clone());
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.clone_from_slice(&merged);
    count
}

fn check_pair<T>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("rankings differ in length".into()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("need at least two observations".into()));
    }
    Ok(())
}

/// 1-based ranks with ties sharing their mean rank.
pub fn average_ranks<T: PartialOrd>(v: &[T]) -> Result<Vec<f64>> {
    let order = sort_indices(v)?;
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]].partial_cmp(&v[order[i]]) == Some(Ordering::Equal) {
            j += 1;
        }
        let mean = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = mean;
        }
        i = j;
    }
    Ok(ranks)
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman<T: PartialOrd>(x: &[T], y: &[T]) -> Result<f64> {
    check_pair(x, y)?;
    let rx = average_ranks(x)?;
    let ry = average_ranks(y)?;
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero rank variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// AUC and rank agreement of pCTR against observed CTR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub upper_bound_auc: f64,
    pub relative_auc: f64,
    pub ktc: f64,
    pub srcc: f64,
}

pub fn report(records: &[EvalRecord]) -> Result<MetricsReport> {
    let rel = relative_auc(records)?;
    let pctr: Vec<f64> = records.iter().map(|r| r.pctr).collect();
    let ctr: Vec<f64> = records.iter().map(|r| r.true_ctr).collect();
    Ok(MetricsReport {
        auc: rel.auc,
        upper_bound_auc: rel.upper_bound,
        relative_auc: rel.ratio,
        ktc: kendall_tau_b(&pctr, &ctr)?,
        srcc: spearman(&pctr, &ctr)?,
    })
}

/// Level of the campaign hierarchy (or the category label) two ads must
/// share to count as a hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Notion {
    Adgroup,
    Campaign,
    Advertiser,
    Category,
}

impl Notion {
    pub const ALL: [Notion; 4] = [Notion::Adgroup, Notion::Campaign, Notion::Advertiser, Notion::Category];

    pub fn key<'a>(&self, ad: &'a Ad) -> &'a str {
        match self {
            Notion::Adgroup => &ad.adgroup_id,
            Notion::Campaign => &ad.campaign_id,
            Notion::Advertiser => &ad.advertiser_id,
            Notion::Category => &ad.category,
        }
    }
}

impl std::str::FromStr for Notion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adgroup" => Ok(Notion::Adgroup),
            "campaign" => Ok(Notion::Campaign),
            "advertiser" => Ok(Notion::Advertiser),
            "category" => Ok(Notion::Category),
            other => Err(Error::InvalidArgument(format!("unknown similarity notion {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Precision {
    pub value: f64,
    /// Fewer than `k` ads were retrieved; `value` is over what was available.
    pub short: bool,
}

pub fn precision_at_k(query: &Ad, retrieved: &[&Ad], k: usize, notion: Notion) -> Result<Precision> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if retrieved.iter().any(|a| a.ad_id == query.ad_id) {
        return Err(Error::InvalidArgument(format!("query {} is in its own result list", query.ad_id)));
    }
    let top = &retrieved[..k.min(retrieved.len())];
    let hits = top.iter().filter(|a| notion.key(a) == notion.key(query)).count();
    Ok(Precision {
        value: if top.is_empty() { 0.0 } else { hits as f64 / top.len() as f64 },
        short: top.len() < k,
    })
}
