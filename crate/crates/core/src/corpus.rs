//! Ad records, pool ingestion and train/validation/test splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::textproc::{compose_ad_text, AdText};
use crate::{Error, Result};

/// Publisher bucket for everything outside the whitelist.
pub const OTHER_PUBLISHER: &str = "OTHER";

pub const DEFAULT_TOP_PUBLISHERS: usize = 13;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ad {
    pub ad_id: String,
    pub advertiser_id: String,
    pub campaign_id: String,
    pub adgroup_id: String,
    pub category: String,
    pub title: String,
    pub description: String,
    pub cta: String,
    pub publisher: String,
    pub impressions: u64,
    pub clicks: u64,
}

impl Ad {
    pub fn text(&self) -> AdText {
        compose_ad_text(&self.title, &self.description, &self.cta)
    }

    pub fn ctr(&self) -> Option<f64> {
        (self.impressions > 0).then(|| self.clicks as f64 / self.impressions as f64)
    }
}

/// Validated, immutable set of ads.
#[derive(Debug, Clone, PartialEq)]
pub struct AdPool {
    ads: Vec<Ad>,
    publisher_whitelist: Vec<String>,
    by_id: HashMap<String, usize>,
}

impl AdPool {
    /// Validates `ads` and buckets publishers outside the `top_k_publishers`
    /// most impressed into [`OTHER_PUBLISHER`].
    pub fn new(mut ads: Vec<Ad>, top_k_publishers: usize) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(ads.len());
        let mut campaign_of: HashMap<&str, &str> = HashMap::new();
        let mut advertiser_of: HashMap<&str, &str> = HashMap::new();
        for (i, ad) in ads.iter().enumerate() {
            if ad.clicks > ad.impressions {
                return Err(Error::ClicksExceedImpressions {
                    ad_id: ad.ad_id.clone(),
                    clicks: ad.clicks,
                    impressions: ad.impressions,
                });
            }
            if by_id.insert(ad.ad_id.clone(), i).is_some() {
                return Err(Error::DuplicateAd(ad.ad_id.clone()));
            }
            let c = *campaign_of.entry(&ad.adgroup_id).or_insert(&ad.campaign_id);
            if c != ad.campaign_id {
                return Err(Error::Hierarchy(format!(
                    "adgroup {} belongs to campaigns {} and {} (ad {})",
                    ad.adgroup_id, c, ad.campaign_id, ad.ad_id
                )));
            }
            let a = *advertiser_of.entry(&ad.campaign_id).or_insert(&ad.advertiser_id);
            if a != ad.advertiser_id {
                return Err(Error::Hierarchy(format!(
                    "campaign {} belongs to advertisers {} and {} (ad {})",
                    ad.campaign_id, a, ad.advertiser_id, ad.ad_id
                )));
            }
        }

        let publisher_whitelist = top_publishers(&ads, top_k_publishers);
        for ad in &mut ads {
            if !publisher_whitelist.contains(&ad.publisher) {
                ad.publisher = OTHER_PUBLISHER.to_string();
            }
        }
        Ok(AdPool {
            ads,
            publisher_whitelist,
            by_id,
        })
    }

    pub fn ads(&self) -> &[Ad] {
        &self.ads
    }

    pub fn publisher_whitelist(&self) -> &[String] {
        &self.publisher_whitelist
    }

    pub fn get(&self, ad_id: &str) -> Option<&Ad> {
        self.by_id.get(ad_id).map(|&i| &self.ads[i])
    }

    pub fn position(&self, ad_id: &str) -> Option<usize> {
        self.by_id.get(ad_id).copied()
    }

    pub fn len(&self) -> usize {
        self.ads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ads.is_empty()
    }

    /// Ads whose ids are listed, in list order. Unknown ids are skipped.
    pub fn select<'a>(&'a self, ids: &'a [String]) -> impl Iterator<Item = &'a Ad> + 'a {
        ids.iter().filter_map(|id| self.get(id))
    }
}

/// Publishers ranked by summed impressions, ties broken lexicographically.
fn top_publishers(ads: &[Ad], k: usize) -> Vec<String> {
    let mut mass: BTreeMap<&str, u64> = BTreeMap::new();
    for ad in ads {
        if ad.publisher != OTHER_PUBLISHER {
            *mass.entry(&ad.publisher).or_insert(0) += ad.impressions;
        }
    }
    let mut ranked: Vec<(&str, u64)> = mass.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(k).map(|(p, _)| p.to_string()).collect()
}

/// Reads a JSON Lines pool file.
pub fn load_pool(path: &Path, top_k_publishers: usize) -> Result<AdPool> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut ads = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ad: Ad = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        ads.push(ad);
    }
    AdPool::new(ads, top_k_publishers)
}

pub fn write_ads<'a>(path: &Path, ads: impl IntoIterator<Item = &'a Ad>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for ad in ads {
        serde_json::to_writer(&mut w, ad)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// One side of an ad's impressions: clicks (label 1) or non-clicks (label 0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub ad_id: String,
    pub label: u8,
    pub weight: u64,
}

/// Splits an ad into at most two weighted samples, positive first.
pub fn expand_samples(ad: &Ad) -> Vec<WeightedSample> {
    let mut out = Vec::with_capacity(2);
    if ad.clicks > 0 {
        out.push(WeightedSample {
            ad_id: ad.ad_id.clone(),
            label: 1,
            weight: ad.clicks,
        });
    }
    if ad.impressions > ad.clicks {
        out.push(WeightedSample {
            ad_id: ad.ad_id.clone(),
            label: 0,
            weight: ad.impressions - ad.clicks,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Warm,
    Cold,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warm" => Ok(SplitMode::Warm),
            "cold" => Ok(SplitMode::Cold),
            other => Err(Error::InvalidArgument(format!("unknown split mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Fractions {
    pub const DEFAULT: Fractions = Fractions {
        train: 0.8,
        validation: 0.06,
        test: 0.14,
    };

    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let f = Fractions {
            train,
            validation,
            test,
        };
        let all = [train, validation, test];
        if all.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("fractions must be positive: {all:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("fractions must sum to 1: {all:?}")));
        }
        Ok(f)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub mode: SplitMode,
    pub seed: u64,
    pub fractions: Fractions,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn partitions(&self) -> [&[String]; 3] {
        [&self.train, &self.validation, &self.test]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(std::fs::File::open(path)?))?)
    }
}

/// Largest-remainder apportionment of `total` units over `fractions`.
/// Remainders tie-break toward the earlier partition.
pub fn largest_remainder(total: u64, fractions: &[f64]) -> Vec<u64> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

/// Seeded split of the pool.
///
/// Warm mode shuffles ads and cuts contiguous runs sized by largest-remainder
/// rounding of the ad count. Cold mode shuffles advertisers and fills the
/// partitions in order, each until its share of the impression mass is
/// reached, so no advertiser straddles two partitions.
pub fn split(pool: &AdPool, fractions: Fractions, mode: SplitMode, seed: u64) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fr = fractions.as_array();
    let mut parts: [Vec<String>; 3] = Default::default();
    match mode {
        SplitMode::Warm => {
            let mut ids: Vec<&str> = pool.ads().iter().map(|a| a.ad_id.as_str()).collect();
            ids.shuffle(&mut rng);
            let counts = largest_remainder(ids.len() as u64, &fr);
            let mut it = ids.into_iter();
            for (p, &c) in parts.iter_mut().zip(&counts) {
                p.extend(it.by_ref().take(c as usize).map(str::to_string));
            }
        }
        SplitMode::Cold => {
            let mut mass: BTreeMap<&str, u64> = BTreeMap::new();
            for ad in pool.ads() {
                *mass.entry(&ad.advertiser_id).or_insert(0) += ad.impressions;
            }
            if mass.len() < parts.len() {
                return Err(Error::InvalidArgument(format!(
                    "cold split needs at least {} advertisers, pool has {}",
                    parts.len(),
                    mass.len()
                )));
            }
            let mut advertisers: Vec<&str> = mass.keys().copied().collect();
            advertisers.shuffle(&mut rng);
            let total: u64 = mass.values().sum();
            let targets = largest_remainder(total, &fr);

            let mut assigned: HashMap<&str, usize> = HashMap::new();
            let mut filled = [0u64; 3];
            let mut p = 0usize;
            let last = parts.len() - 1;
            for (i, adv) in advertisers.iter().enumerate() {
                assigned.insert(adv, p);
                filled[p] += mass[adv];
                let remaining = advertisers.len() - i - 1;
                if p < last && (filled[p] >= targets[p] || remaining <= last - p) {
                    p += 1;
                }
            }
            for ad in pool.ads() {
                parts[assigned[ad.advertiser_id.as_str()]].push(ad.ad_id.clone());
            }
            // Stable, seed-dependent order within each partition.
            for part in &mut parts {
                part.shuffle(&mut rng);
            }
        }
    }
    let [train, validation, test] = parts;
    Ok(Split {
        mode,
        seed,
        fractions,
        train,
        validation,
        test,
    })
}

/// Advertisers that occur in more than one partition.
pub fn advertiser_overlap(pool: &AdPool, split: &Split) -> BTreeSet<String> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut overlap = BTreeSet::new();
    for (p, ids) in split.partitions().iter().enumerate() {
        for ad in pool.select(ids) {
            let first = *seen.entry(&ad.advertiser_id).or_insert(p);
            if first != p {
                overlap.insert(ad.advertiser_id.clone());
            }
        }
    }
    overlap
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    pub(crate) fn ad(id: &str, adv: &str, publisher: &str, imp: u64, clicks: u64) -> Ad {
        Ad {
            ad_id: id.into(),
            advertiser_id: adv.into(),
            campaign_id: format!("{adv}-c"),
            adgroup_id: format!("{adv}-g"),
            category: "cat".into(),
            title: format!("title {id}"),
            description: "desc".into(),
            cta: "Learn More".into(),
            publisher: publisher.into(),
            impressions: imp,
            clicks,
        }
    }

    #[test]
    fn small_pool_keeps_all_publishers() {
        let ads = vec![
            ad("1", "a", "p1", 100, 1),
            ad("2", "a", "p2", 50, 1),
            ad("3", "b", "p3", 1, 0),
        ];
        let pool = AdPool::new(ads, 3).unwrap();
        assert_eq!(pool.publisher_whitelist(), &["p1", "p2", "p3"]);
        assert!(pool.ads().iter().all(|a| a.publisher != OTHER_PUBLISHER));
    }

    #[test]
    fn publisher_cutoff_ties_are_lexicographic() {
        let ads = vec![
            ad("1", "a", "zeta", 100, 1),
            ad("2", "a", "beta", 50, 1),
            ad("3", "b", "alpha", 50, 0),
            ad("4", "b", "gamma", 50, 0),
        ];
        let pool = AdPool::new(ads.clone(), 2).unwrap();
        // Oracle: exhaustive sort of (−mass, name).
        let mut all: Vec<(i64, &str)> = vec![(-100, "zeta"), (-50, "beta"), (-50, "alpha"), (-50, "gamma")];
        all.sort();
        let want: Vec<&str> = all.iter().take(2).map(|x| x.1).collect();
        assert_eq!(pool.publisher_whitelist(), want.as_slice());
        assert_eq!(pool.get("2").unwrap().publisher, OTHER_PUBLISHER);
        assert_eq!(pool.get("3").unwrap().publisher, "alpha");
    }

    #[test]
    fn validation_errors() {
        let e = AdPool::new(vec![ad("x", "a", "p", 5, 6)], 3).unwrap_err();
        assert!(matches!(e, Error::ClicksExceedImpressions { ref ad_id, .. } if ad_id == "x"));
        let e = AdPool::new(vec![ad("x", "a", "p", 5, 1), ad("x", "b", "p", 5, 1)], 3).unwrap_err();
        assert!(matches!(e, Error::DuplicateAd(ref id) if id == "x"));
        let mut bad = ad("y", "b", "p", 5, 1);
        bad.campaign_id = "a-c".into();
        bad.adgroup_id = "b-g".into();
        let e = AdPool::new(vec![ad("x", "a", "p", 5, 1), bad], 3).unwrap_err();
        assert!(matches!(e, Error::Hierarchy(_)));
    }

    #[test]
    fn load_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        let good = serde_json::to_string(&ad("1", "a", "p", 3, 1)).unwrap();
        std::fs::write(&path, format!("{good}\n{{\"ad_id\": \"2\"}}\n")).unwrap();
        match load_pool(&path, 13).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn load_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        let ads: Vec<Ad> = (0..20).map(|i| ad(&i.to_string(), &format!("a{}", i % 4), &format!("p{}", i % 5), 10 + i, 1)).collect();
        write_ads(&path, &ads).unwrap();
        assert_eq!(load_pool(&path, 3).unwrap(), load_pool(&path, 3).unwrap());
    }

    #[test]
    fn expand_examples() {
        let s = expand_samples(&ad("1", "a", "p", 100, 5));
        assert_eq!(s.iter().map(|x| (x.label, x.weight)).collect::<Vec<_>>(), vec![(1, 5), (0, 95)]);
        let s = expand_samples(&ad("1", "a", "p", 40, 0));
        assert_eq!(s.iter().map(|x| (x.label, x.weight)).collect::<Vec<_>>(), vec![(0, 40)]);
        assert!(expand_samples(&ad("1", "a", "p", 0, 0)).is_empty());
        let s = expand_samples(&ad("1", "a", "p", 7, 7));
        assert_eq!(s.iter().map(|x| (x.label, x.weight)).collect::<Vec<_>>(), vec![(1, 7)]);
    }

    #[test]
    fn expand_is_lossless_on_random_ads() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for i in 0..1000 {
            let imp = rng.random_range(0..10_000u64);
            let clicks = rng.random_range(0..=imp);
            let s = expand_samples(&ad(&i.to_string(), "a", "p", imp, clicks));
            assert_eq!(s.iter().map(|x| x.weight).sum::<u64>(), imp);
            let pos: u64 = s.iter().filter(|x| x.label == 1).map(|x| x.weight).sum();
            assert_eq!(pos, clicks);
            assert_eq!(imp - pos, s.iter().filter(|x| x.label == 0).map(|x| x.weight).sum::<u64>());
            assert!(s.len() <= 2);
        }
    }

    #[test]
    fn warm_split_of_ten() {
        // Quotas 8, 0.6, 1.4 -> floors 8, 0, 1; the one leftover goes to the
        // largest remainder (0.6, validation).
        assert_eq!(largest_remainder(10, &[0.8, 0.06, 0.14]), vec![8, 1, 1]);
        let ads: Vec<Ad> = (0..10).map(|i| ad(&i.to_string(), "a", "p", 10, 1)).collect();
        let pool = AdPool::new(ads, 13).unwrap();
        let s = split(&pool, Fractions::DEFAULT, SplitMode::Warm, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
        assert_eq!(s, split(&pool, Fractions::DEFAULT, SplitMode::Warm, 7).unwrap());
    }

    #[test]
    fn fractions_are_validated() {
        assert!(Fractions::new(0.5, 0.5, 0.0).is_err());
        assert!(Fractions::new(0.5, 0.3, 0.3).is_err());
        assert!(Fractions::new(0.8, 0.06, 0.14).is_ok());
    }

    #[test]
    fn cold_split_needs_three_advertisers() {
        let ads: Vec<Ad> = (0..10).map(|i| ad(&i.to_string(), &format!("a{}", i % 2), "p", 10, 1)).collect();
        let pool = AdPool::new(ads, 13).unwrap();
        assert!(split(&pool, Fractions::DEFAULT, SplitMode::Cold, 1).is_err());
    }

    fn random_pool(seed: u64, n: usize, advertisers: usize) -> AdPool {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ads = (0..n)
            .map(|i| {
                let imp = rng.random_range(0..500);
                ad(&format!("ad{i}"), &format!("adv{}", rng.random_range(0..advertisers)), "p", imp, imp / 10)
            })
            .collect();
        AdPool::new(ads, 13).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn splits_partition_the_pool(seed in any::<u64>(), n in 3usize..80, advs in 3usize..12, cold in any::<bool>()) {
            let pool = random_pool(seed, n, advs);
            let mode = if cold { SplitMode::Cold } else { SplitMode::Warm };
            let distinct: BTreeSet<&str> = pool.ads().iter().map(|a| a.advertiser_id.as_str()).collect();
            prop_assume!(!cold || distinct.len() >= 3);
            let s = split(&pool, Fractions::DEFAULT, mode, seed).unwrap();
            let mut all: Vec<&String> = s.partitions().iter().flat_map(|p| p.iter()).collect();
            prop_assert_eq!(all.len(), pool.len());
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), pool.len());
            if cold {
                prop_assert!(advertiser_overlap(&pool, &s).is_empty());
                prop_assert!(s.partitions().iter().all(|p| !p.is_empty()));
            }
        }
    }
}
