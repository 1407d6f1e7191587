//! Weak similarity labels from the campaign hierarchy, the cosine regression
//! loss, and pair export for external fine-tuning.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Ad;
use crate::embed::{cosine, Embedding, EmbeddingProvider};
use crate::{Error, Result};

pub const DEFAULT_NEG_RATIO: usize = 30;
pub const DEFAULT_POSITIVE_CAP: usize = 1000;

/// Which hierarchy level must match for a positive pair. Negatives always
/// need a different advertiser and a different category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "advertiser-cat")]
    AdvertiserCat,
    #[serde(rename = "campaign-cat")]
    CampaignCat,
    #[serde(rename = "adgroup-cat")]
    AdgroupCat,
}

impl Strategy {
    fn group<'a>(&self, ad: &'a Ad) -> &'a str {
        match self {
            Strategy::AdvertiserCat => &ad.advertiser_id,
            Strategy::CampaignCat => &ad.campaign_id,
            Strategy::AdgroupCat => &ad.adgroup_id,
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "advertiser-cat" => Ok(Strategy::AdvertiserCat),
            "campaign-cat" => Ok(Strategy::CampaignCat),
            "adgroup-cat" => Ok(Strategy::AdgroupCat),
            other => Err(Error::InvalidArgument(format!("unknown pair strategy {other:?}"))),
        }
    }
}

/// `Some(1)`, `Some(-1)` or `None` when neither rule fires.
pub fn label_pair(a: &Ad, b: &Ad, strategy: Strategy) -> Option<i8> {
    let same_cat = a.category == b.category;
    if same_cat && strategy.group(a) == strategy.group(b) {
        Some(1)
    } else if !same_cat && a.advertiser_id != b.advertiser_id {
        Some(-1)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    pub ad_id_a: String,
    pub ad_id_b: String,
    pub label: i8,
    pub strategy: Strategy,
}

impl LabeledPair {
    fn new(a: &Ad, b: &Ad, label: i8, strategy: Strategy) -> Self {
        let (x, y) = if a.ad_id <= b.ad_id { (a, b) } else { (b, a) };
        LabeledPair {
            ad_id_a: x.ad_id.clone(),
            ad_id_b: y.ad_id.clone(),
            label,
            strategy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub strategy: Strategy,
    pub neg_ratio: usize,
    pub seed: u64,
    pub pairs: Vec<LabeledPair>,
}

impl PairSet {
    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == -1).count()
    }
}

fn choose2(n: usize) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

/// Number of pairs with different advertiser and different category, by
/// inclusion-exclusion over the same-advertiser and same-category counts.
pub fn available_negatives(ads: &[Ad]) -> u128 {
    let mut adv: HashMap<&str, usize> = HashMap::new();
    let mut cat: HashMap<&str, usize> = HashMap::new();
    let mut both: HashMap<(&str, &str), usize> = HashMap::new();
    for a in ads {
        *adv.entry(&a.advertiser_id).or_default() += 1;
        *cat.entry(&a.category).or_default() += 1;
        *both.entry((&a.advertiser_id, &a.category)).or_default() += 1;
    }
    let same = |counts: &mut dyn Iterator<Item = &usize>| counts.map(|&c| choose2(c)).sum::<u128>();
    choose2(ads.len()) + same(&mut both.values()) - same(&mut adv.values()) - same(&mut cat.values())
}

/// Enumerates positives per (group, category) bucket, keeping at most
/// `positive_cap` per bucket, then samples `min(available, positives *
/// neg_ratio)` distinct negatives uniformly.
pub fn generate_pairs(ads: &[Ad], strategy: Strategy, neg_ratio: usize, seed: u64, positive_cap: usize) -> Result<PairSet> {
    if ads.len() < 2 {
        return Err(Error::InvalidArgument("need at least two ads".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, a) in ads.iter().enumerate() {
        buckets.entry((strategy.group(a), &a.category)).or_default().push(i);
    }
    let mut pairs = Vec::new();
    for members in buckets.values() {
        let mut bucket = Vec::new();
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                bucket.push(LabeledPair::new(&ads[i], &ads[j], 1, strategy));
            }
        }
        if bucket.len() > positive_cap {
            bucket.partial_shuffle(&mut rng, positive_cap);
            bucket.truncate(positive_cap);
            bucket.sort_by(|a, b| (&a.ad_id_a, &a.ad_id_b).cmp(&(&b.ad_id_a, &b.ad_id_b)));
        }
        pairs.extend(bucket);
    }
    if pairs.is_empty() {
        return Err(Error::Degenerate("no positive pairs under this strategy".into()));
    }

    let available = available_negatives(ads);
    let target = (pairs.len() as u128 * neg_ratio as u128).min(available) as usize;
    let eligible = |i: usize, j: usize| label_pair(&ads[i], &ads[j], strategy) == Some(-1);
    let mut negatives: Vec<(usize, usize)> = Vec::with_capacity(target);
    if target == 0 {
    } else if available <= 4 * target as u128 || available <= 2_000_000 {
        let mut all: Vec<(usize, usize)> = Vec::with_capacity(available as usize);
        for i in 0..ads.len() {
            for j in i + 1..ads.len() {
                if eligible(i, j) {
                    all.push((i, j));
                }
            }
        }
        all.partial_shuffle(&mut rng, target);
        all.truncate(target);
        negatives = all;
    } else {
        // Sparse target relative to the eligible set: rejection sampling.
        let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(target);
        while negatives.len() < target {
            let i = rng.random_range(0..ads.len());
            let j = rng.random_range(0..ads.len());
            let key = (i.min(j), i.max(j));
            if i != j && eligible(i, j) && seen.insert(key) {
                negatives.push(key);
            }
        }
    }
    pairs.extend(negatives.into_iter().map(|(i, j)| LabeledPair::new(&ads[i], &ads[j], -1, strategy)));
    Ok(PairSet {
        strategy,
        neg_ratio,
        seed,
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLoss {
    pub mean: f64,
    pub per_pair: Vec<f64>,
}

/// `(cos(a, b) - label)^2` for one pair.
pub fn pair_loss(a: &Embedding, b: &Embedding, label: i8) -> Result<f64> {
    Ok((cosine(a, b)? - f64::from(label)).powi(2))
}

/// Mean squared error between pair cosines and their labels.
pub fn cosine_mse_loss<E: EmbeddingProvider + ?Sized>(pairs: &PairSet, ads: &[Ad], embedder: &E) -> Result<PairLoss> {
    if pairs.pairs.is_empty() {
        return Err(Error::InvalidArgument("empty pair set".into()));
    }
    let by_id: HashMap<&str, &Ad> = ads.iter().map(|a| (a.ad_id.as_str(), a)).collect();
    let mut cache: HashMap<&str, Embedding> = HashMap::new();
    let mut embed = |id: &str| -> Result<Embedding> {
        if let Some(e) = cache.get(id) {
            return Ok(e.clone());
        }
        let (key, ad) = by_id.get_key_value(id).ok_or_else(|| Error::MissingEmbedding(id.to_string()))?;
        let e = embedder.embed(&ad.text())?;
        cache.insert(key, e.clone());
        Ok(e)
    };
    let mut per_pair = Vec::with_capacity(pairs.pairs.len());
    for p in &pairs.pairs {
        let (a, b) = (embed(&p.ad_id_a)?, embed(&p.ad_id_b)?);
        per_pair.push(pair_loss(&a, &b, p.label)?);
    }
    Ok(PairLoss {
        mean: per_pair.iter().sum::<f64>() / per_pair.len() as f64,
        per_pair,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedPair {
    pub text_a: String,
    pub text_b: String,
    pub label: i8,
}

pub fn export_pairs(pairs: &PairSet, ads: &[Ad], path: &Path) -> Result<()> {
    let by_id: HashMap<&str, &Ad> = ads.iter().map(|a| (a.ad_id.as_str(), a)).collect();
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for p in &pairs.pairs {
        let text = |id: &str| {
            by_id
                .get(id)
                .map(|a| a.text().into_string())
                .ok_or_else(|| Error::MissingEmbedding(id.to_string()))
        };
        let row = ExportedPair {
            text_a: text(&p.ad_id_a)?,
            text_b: text(&p.ad_id_b)?,
            label: p.label,
        };
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn import_pairs(path: &Path) -> Result<Vec<ExportedPair>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(std::fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{EmbedderSpec, HashedEmbedder};
    use crate::textproc::AdText;
    use crate::ProviderError;
    use proptest::prelude::*;
    use super::Strategy;

    fn ad(id: &str, adv: &str, cat: &str) -> Ad {
        Ad {
            ad_id: id.into(),
            advertiser_id: adv.into(),
            campaign_id: format!("{adv}-c"),
            adgroup_id: format!("{adv}-g"),
            category: cat.into(),
            title: format!("ad {id} words"),
            description: String::new(),
            cta: String::new(),
            publisher: "p".into(),
            impressions: 1,
            clicks: 0,
        }
    }

    fn grid(advs: usize, cats: usize, per: usize) -> Vec<Ad> {
        let mut v = Vec::new();
        for a in 0..advs {
            for c in 0..cats {
                for i in 0..per {
                    v.push(ad(&format!("a{a}c{c}i{i}"), &format!("adv{a}"), &format!("cat{c}")));
                }
            }
        }
        v
    }

    /// All unordered pairs labeled by direct rule evaluation.
    fn enumerate(ads: &[Ad], s: Strategy) -> (usize, usize) {
        let (mut pos, mut neg) = (0, 0);
        for i in 0..ads.len() {
            for j in i + 1..ads.len() {
                match label_pair(&ads[i], &ads[j], s) {
                    Some(1) => pos += 1,
                    Some(-1) => neg += 1,
                    _ => {}
                }
            }
        }
        (pos, neg)
    }

    #[test]
    fn label_rules() {
        let a = ad("1", "x", "shoes");
        assert_eq!(label_pair(&a, &ad("2", "x", "shoes"), Strategy::AdvertiserCat), Some(1));
        assert_eq!(label_pair(&a, &ad("2", "y", "food"), Strategy::AdvertiserCat), Some(-1));
        assert_eq!(label_pair(&a, &ad("2", "x", "food"), Strategy::AdvertiserCat), None);
        assert_eq!(label_pair(&a, &ad("2", "y", "shoes"), Strategy::AdvertiserCat), None);
        let mut other_campaign = ad("2", "x", "shoes");
        other_campaign.campaign_id = "x-c2".into();
        other_campaign.adgroup_id = "x-g2".into();
        assert_eq!(label_pair(&a, &other_campaign, Strategy::AdvertiserCat), Some(1));
        assert_eq!(label_pair(&a, &other_campaign, Strategy::CampaignCat), None);
        assert_eq!(label_pair(&a, &other_campaign, Strategy::AdgroupCat), None);
    }

    #[test]
    fn single_bucket_has_no_negatives() {
        let ads: Vec<Ad> = (0..3).map(|i| ad(&i.to_string(), "x", "c")).collect();
        let ps = generate_pairs(&ads, Strategy::AdvertiserCat, 30, 1, 1000).unwrap();
        assert_eq!((ps.positives(), ps.negatives()), (3, 0));
    }

    #[test]
    fn grid_counts_match_enumeration() {
        let ads = grid(4, 2, 5);
        let (pos, neg) = enumerate(&ads, Strategy::AdvertiserCat);
        assert_eq!(pos, 4 * 2 * 10);
        assert_eq!(neg as u128, available_negatives(&ads));
        // 40 ads; per pair of (adv, cat) cells differing in both: C(4,2) * 2 * 25.
        assert_eq!(neg, 300);
        let ps = generate_pairs(&ads, Strategy::AdvertiserCat, 30, 1, 1000).unwrap();
        assert_eq!(ps.positives(), pos);
        assert_eq!(ps.negatives(), neg.min(pos * 30));
        let ps = generate_pairs(&ads, Strategy::AdvertiserCat, 2, 1, 1000).unwrap();
        assert_eq!(ps.negatives(), 160);
        assert_eq!(ps, generate_pairs(&ads, Strategy::AdvertiserCat, 2, 1, 1000).unwrap());
        assert_ne!(ps, generate_pairs(&ads, Strategy::AdvertiserCat, 2, 2, 1000).unwrap());
    }

    #[test]
    fn rejection_path_samples_distinct_eligible_pairs() {
        // 3000 ads over 60 advertisers and 10 categories: ~4.5M pairs, well
        // above the enumeration cutoff with a small target.
        let ads: Vec<Ad> = (0..3000)
            .map(|i| ad(&format!("{i:05}"), &format!("adv{}", i % 60), &format!("cat{}", (i / 60) % 10)))
            .collect();
        let ps = generate_pairs(&ads, Strategy::AdvertiserCat, 1, 3, 2).unwrap();
        let by_id: HashMap<&str, &Ad> = ads.iter().map(|a| (a.ad_id.as_str(), a)).collect();
        let mut seen = HashSet::new();
        for p in &ps.pairs {
            assert!(p.ad_id_a < p.ad_id_b);
            assert!(seen.insert((p.ad_id_a.clone(), p.ad_id_b.clone())));
            let (a, b) = (by_id[p.ad_id_a.as_str()], by_id[p.ad_id_b.as_str()]);
            assert_eq!(label_pair(a, b, ps.strategy), Some(p.label));
        }
        assert_eq!(ps.negatives(), ps.positives());
        // Every (advertiser, category) bucket holds 5 ads, 10 pairs, capped to 2.
        assert_eq!(ps.positives(), 600 * 2);
    }

    #[test]
    fn generation_errors() {
        assert!(generate_pairs(&[ad("1", "x", "c")], Strategy::AdvertiserCat, 30, 0, 10).is_err());
        let ads = vec![ad("1", "x", "c"), ad("2", "y", "d")];
        assert!(matches!(generate_pairs(&ads, Strategy::AdvertiserCat, 30, 0, 10), Err(Error::Degenerate(_))));
    }

    struct Fixed(HashMap<String, Vec<f32>>);

    impl EmbeddingProvider for Fixed {
        fn dim(&self) -> usize {
            2
        }
        fn embed(&self, text: &AdText) -> Result<Embedding, ProviderError> {
            Embedding::from_raw(self.0[text.as_str()].clone())
        }
        fn spec(&self) -> EmbedderSpec {
            EmbedderSpec::External { endpoint: String::new(), dim: 2 }
        }
    }

    #[test]
    fn loss_by_hand() {
        // Five pairs with cosines 1, 0, 0.6, -0.8 and 0.8.
        let vecs = [
            ("A", vec![1.0, 0.0]),
            ("B", vec![0.0, 1.0]),
            ("C", vec![0.6, 0.8]),
            ("D", vec![-0.6, -0.8]),
        ];
        let ads: Vec<Ad> = vecs.iter().map(|(id, _)| {
            let mut a = ad(id, id, id);
            a.title = id.to_string();
            a
        }).collect();
        let fixed = Fixed(vecs.iter().map(|(id, v)| (id.to_string(), v.clone())).collect());
        let mk = |a: &str, b: &str, label| LabeledPair {
            ad_id_a: a.into(),
            ad_id_b: b.into(),
            label,
            strategy: Strategy::AdvertiserCat,
        };
        let ps = PairSet {
            strategy: Strategy::AdvertiserCat,
            neg_ratio: 30,
            seed: 0,
            pairs: vec![mk("A", "A", 1), mk("A", "B", -1), mk("A", "C", 1), mk("B", "D", -1), mk("B", "C", -1)],
        };
        let loss = cosine_mse_loss(&ps, &ads, &fixed).unwrap();
        let want = [0.0, 1.0, 0.16, 0.04, 3.24];
        for (g, w) in loss.per_pair.iter().zip(want) {
            assert!((g - w).abs() < 1e-6, "{g} vs {w}");
        }
        assert!((loss.mean - want.iter().sum::<f64>() / 5.0).abs() < 1e-6);

        let mut missing = ps.clone();
        missing.pairs.push(mk("A", "Z", 1));
        assert!(matches!(cosine_mse_loss(&missing, &ads, &fixed), Err(Error::MissingEmbedding(_))));
    }

    #[test]
    fn interpolating_a_positive_pair_lowers_its_loss() {
        let a = [1.0f32, 0.0, 0.0];
        let b = [0.0f32, 1.0, 0.3];
        let mut last = f64::INFINITY;
        for step in 0..=10 {
            let t = step as f32 / 10.0;
            let moved: Vec<f32> = b.iter().zip(&a).map(|(x, y)| x + t * (y - x)).collect();
            let l = pair_loss(&Embedding::from_raw(a.to_vec()).unwrap(), &Embedding::from_raw(moved).unwrap(), 1).unwrap();
            assert!(l <= last + 1e-12);
            last = l;
        }
        assert!(last < 1e-12);
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ads = grid(2, 2, 2);
        let empty = PairSet {
            strategy: Strategy::AdvertiserCat,
            neg_ratio: 30,
            seed: 0,
            pairs: vec![],
        };
        let path = dir.path().join("empty.jsonl");
        export_pairs(&empty, &ads, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");

        let ps = generate_pairs(&ads, Strategy::AdvertiserCat, 30, 4, 1000).unwrap();
        let path = dir.path().join("pairs.jsonl");
        export_pairs(&ps, &ads, &path).unwrap();
        let raw = std::fs::read_to_string(&path).unwrap();
        assert_eq!(raw.lines().count(), ps.pairs.len());
        let first: serde_json::Value = serde_json::from_str(raw.lines().next().unwrap()).unwrap();
        let mut keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["label", "text_a", "text_b"]);
        let back = import_pairs(&path).unwrap();
        let text = |id: &str| ads.iter().find(|a| a.ad_id == id).unwrap().text().into_string();
        for (p, e) in ps.pairs.iter().zip(&back) {
            assert_eq!((text(&p.ad_id_a), text(&p.ad_id_b), p.label), (e.text_a.clone(), e.text_b.clone(), e.label));
        }
    }

    #[test]
    fn hashed_provider_gives_zero_loss_for_identical_texts() {
        let h = HashedEmbedder::new(32, 0).unwrap();
        let e = h.embed(&AdText::new("same text")).unwrap();
        assert!(pair_loss(&e, &e, 1).unwrap() < 1e-12);
    }

    proptest! {
        #[test]
        fn labels_are_symmetric_and_consistent(
            a in (0u8..3, 0u8..3), b in (0u8..3, 0u8..3), s in 0usize..3
        ) {
            let strategy = [Strategy::AdvertiserCat, Strategy::CampaignCat, Strategy::AdgroupCat][s];
            let x = ad("x", &format!("adv{}", a.0), &format!("c{}", a.1));
            let y = ad("y", &format!("adv{}", b.0), &format!("c{}", b.1));
            let l = label_pair(&x, &y, strategy);
            prop_assert_eq!(l, label_pair(&y, &x, strategy));
            match l {
                Some(1) => prop_assert_eq!(&x.category, &y.category),
                Some(-1) => prop_assert!(x.category != y.category && x.advertiser_id != y.advertiser_id),
                _ => {}
            }
        }

        #[test]
        fn generated_sets_obey_rules(seed in any::<u64>(), advs in 2usize..5, cats in 2usize..4, per in 1usize..4) {
            let ads = grid(advs, cats, per);
            let (pos, neg) = enumerate(&ads, Strategy::AdvertiserCat);
            prop_assume!(pos > 0);
            let ps = generate_pairs(&ads, Strategy::AdvertiserCat, 3, seed, 1000).unwrap();
            prop_assert_eq!(ps.positives(), pos);
            prop_assert_eq!(ps.negatives(), neg.min(pos * 3));
            let by_id: HashMap<&str, &Ad> = ads.iter().map(|a| (a.ad_id.as_str(), a)).collect();
            let mut seen = HashSet::new();
            for p in &ps.pairs {
                prop_assert!(seen.insert((p.ad_id_a.clone(), p.ad_id_b.clone())));
                let (a, b) = (by_id[p.ad_id_a.as_str()], by_id[p.ad_id_b.as_str()]);
                if p.label == 1 {
                    prop_assert_eq!(&a.category, &b.category);
                } else {
                    prop_assert!(a.category != b.category);
                }
            }
        }
    }
}
