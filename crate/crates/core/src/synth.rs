//! Seeded synthetic corpora: a CTR corpus with planted token effects, a
//! category-themed retrieval pool, threshold-sweep clusters, the worked
//! example pool and a composer event log.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analytics::{EventKind, UiEvent};
use crate::annindex::{AdIndex, IndexParams};
use crate::corpus::{Ad, AdPool, DEFAULT_TOP_PUBLISHERS};
use crate::ctrmodel::{train, LrModel, PctrTable, TrainConfig, Variant};
use crate::embed::HashedEmbedder;
use crate::textproc::{compose_ad_text, AdText, Vocab};
use crate::Result;

pub const CATEGORIES: [(&str, &[&str]); 8] = [
    ("auto", &[
        "car", "truck", "suv", "sedan", "tires", "engine", "brakes", "dealer", "lease", "hybrid", "electric", "mileage",
        "warranty", "oil", "repair", "parts", "wheels", "motor", "drive", "coupe", "battery", "towing", "rims", "garage", "diesel",
    ]),
    ("travel", &[
        "flights", "hotel", "resort", "cruise", "beach", "vacation", "airfare", "island", "tour", "passport", "luggage",
        "getaway", "villa", "booking", "destination", "trip", "safari", "lodge", "airline", "hostel", "itinerary", "seaside",
        "backpacking", "excursion", "sightseeing",
    ]),
    ("finance", &[
        "loan", "mortgage", "credit", "bank", "savings", "invest", "stocks", "retirement", "insurance", "refinance",
        "interest", "budget", "tax", "wealth", "portfolio", "broker", "dividend", "pension", "debt", "equity", "annuity",
        "cashback", "checking", "fund", "advisor",
    ]),
    ("food", &[
        "pizza", "burger", "recipe", "organic", "snack", "coffee", "grocery", "delivery", "kitchen", "vegan", "pasta",
        "salad", "bakery", "dessert", "chocolate", "cheese", "sushi", "tacos", "barbecue", "cereal", "juice", "meal",
        "spices", "noodles", "brunch",
    ]),
    ("fashion", &[
        "dress", "shoes", "jacket", "jeans", "sneakers", "handbag", "boutique", "denim", "scarf", "boots", "jewelry",
        "watch", "sunglasses", "blouse", "skirt", "tailored", "leather", "wardrobe", "apparel", "outfit", "sweater",
        "sandals", "hoodie", "couture", "accessories",
    ]),
    ("tech", &[
        "laptop", "smartphone", "tablet", "headphones", "software", "cloud", "router", "gaming", "monitor", "keyboard",
        "camera", "charger", "speaker", "processor", "storage", "wireless", "smartwatch", "drone", "console", "printer",
        "antivirus", "bluetooth", "streaming", "gadget", "app",
    ]),
    ("health", &[
        "fitness", "vitamins", "yoga", "clinic", "dental", "therapy", "wellness", "pharmacy", "gym", "nutrition",
        "skincare", "supplements", "doctor", "sleep", "protein", "massage", "meditation", "cardio", "physio", "allergy",
        "immunity", "hearing", "vision", "diet", "workout",
    ]),
    ("home", &[
        "furniture", "sofa", "mattress", "kitchenware", "garden", "decor", "lighting", "flooring", "paint", "curtains",
        "plumbing", "roofing", "tiles", "lamp", "rug", "cabinets", "patio", "bedding", "appliances", "renovation",
        "shelves", "closet", "fence", "windows", "grill",
    ]),
];

/// Tokens with a planted effect on the click logit.
pub const QUALITY_TOKENS: [(&str, f64); 14] = [
    ("free", 1.2),
    ("exclusive", 1.0),
    ("official", 0.8),
    ("bonus", 0.9),
    ("instant", 0.7),
    ("guaranteed", 0.6),
    ("save", 0.8),
    ("basic", -0.9),
    ("generic", -1.1),
    ("info", -0.8),
    ("various", -0.7),
    ("standard", -0.6),
    ("details", -0.9),
    ("general", -1.0),
];

pub const FILLER: [&str; 10] = ["quality", "best", "great", "top", "online", "deals", "offer", "shop", "find", "more"];

pub const CTAS: [(&str, f64); 6] = [
    ("Shop Now", 0.3),
    ("Learn More", -0.2),
    ("Sign Up", 0.1),
    ("Get Offer", 0.2),
    ("Book Now", 0.1),
    ("Download", 0.0),
];

const SYLLABLES: [&str; 24] = [
    "ka", "zo", "ri", "tex", "mon", "lu", "vy", "bra", "qui", "dor", "fen", "sa", "pel", "nox", "tri", "gal", "vek", "os",
    "pra", "zu", "mir", "ten", "col", "hax",
];

/// Pronounceable pseudo-word; the numeric suffix keeps it unique.
fn pseudo_word(rng: &mut ChaCha8Rng, id: usize) -> String {
    let n = rng.random_range(2..=3);
    let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
    w.push_str(&id.to_string());
    w
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtrCorpusConfig {
    pub seed: u64,
    pub advertisers: usize,
    pub publishers: usize,
    pub base_ctr: f64,
    pub min_impressions: u64,
    pub max_impressions: u64,
    /// Size of the vocabulary whose word frequencies depend on the latent
    /// ad class.
    pub signal_words: usize,
    pub signal_per_ad: usize,
    /// Logit gap between the two latent classes.
    pub class_effect: f64,
}

impl Default for CtrCorpusConfig {
    fn default() -> Self {
        CtrCorpusConfig {
            seed: 42,
            advertisers: 600,
            publishers: 20,
            base_ctr: 0.02,
            min_impressions: 300,
            max_impressions: 20_000,
            signal_words: 300,
            signal_per_ad: 5,
            class_effect: 3.0,
        }
    }
}

/// Ads whose click rates follow a logistic model of a latent class,
/// category, advertiser, publisher, quality-token and call-to-action
/// effects, with binomial clicks. Signal words are drawn from a
/// class-dependent distribution.
pub fn ctr_corpus(cfg: &CtrCorpusConfig) -> Vec<Ad> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n01 = |sd: f64| Normal::new(0.0, sd).expect("valid sd");
    let cat_effect: Vec<f64> = CATEGORIES.iter().map(|_| n01(0.3).sample(&mut rng)).collect();
    let publishers: Vec<(String, f64)> = (0..cfg.publishers)
        .map(|i| (format!("pub{i:02}"), n01(0.4).sample(&mut rng)))
        .collect();
    // Skewed publisher traffic so the top-k cut is meaningful.
    let pub_weights: Vec<f64> = (0..cfg.publishers).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let pub_total: f64 = pub_weights.iter().sum();
    let base = (cfg.base_ctr / (1.0 - cfg.base_ctr)).ln();
    let (lo, hi) = ((cfg.min_impressions as f64).ln(), (cfg.max_impressions as f64).ln());

    let mut word_id = 0usize;
    let signal: Vec<String> = (0..cfg.signal_words)
        .map(|_| {
            word_id += 1;
            pseudo_word(&mut rng, word_id)
        })
        .collect();
    let tilt: Vec<f64> = signal.iter().map(|_| n01(1.0).sample(&mut rng)).collect();
    let class_dist = |sign: f64| {
        WeightedIndex::new(tilt.iter().map(|t| (sign * t / 2.0).exp())).expect("positive weights")
    };
    let (good_words, bad_words) = (class_dist(1.0), class_dist(-1.0));

    let mut ads = Vec::new();
    for a in 0..cfg.advertisers {
        let cat = rng.random_range(0..CATEGORIES.len());
        let (cat_name, topics) = CATEGORIES[cat];
        word_id += 1;
        let brand = pseudo_word(&mut rng, word_id);
        let adv_effect = n01(0.3).sample(&mut rng);
        for c in 0..rng.random_range(1..=3) {
            word_id += 1;
            let product = pseudo_word(&mut rng, word_id);
            for g in 0..rng.random_range(1..=3) {
                for i in 0..rng.random_range(1..=6) {
                    let good = rng.random_bool(0.5);
                    let mut logit = base + cat_effect[cat] + adv_effect + n01(0.2).sample(&mut rng);
                    logit += if good { cfg.class_effect / 2.0 } else { -cfg.class_effect / 2.0 };
                    let words = if good { &good_words } else { &bad_words };
                    let signals: Vec<&str> = (0..cfg.signal_per_ad).map(|_| signal[words.sample(&mut rng)].as_str()).collect();
                    let mut pick = rng.random::<f64>() * pub_total;
                    let mut p = 0;
                    while pick > pub_weights[p] && p + 1 < publishers.len() {
                        pick -= pub_weights[p];
                        p += 1;
                    }
                    logit += publishers[p].1;
                    let mut quality = Vec::new();
                    for _ in 0..rng.random_range(0..=3) {
                        let (tok, eff) = *QUALITY_TOKENS.choose(&mut rng).expect("non-empty");
                        if !quality.contains(&tok) {
                            quality.push(tok);
                            logit += eff;
                        }
                    }
                    let (cta, cta_eff) = *CTAS.choose(&mut rng).expect("non-empty");
                    logit += cta_eff;
                    let t: Vec<&str> = topics.choose_multiple(&mut rng, 3).copied().collect();
                    let filler = *FILLER.choose(&mut rng).expect("non-empty");
                    let split = quality.len().min(1);
                    let title = [vec![brand.as_str(), t[0], t[1]], quality[..split].to_vec()].concat().join(" ");
                    let description = [vec![product.as_str(), t[2], filler], quality[split..].to_vec(), signals].concat().join(" ");
                    let impressions = rng.random_range(lo..hi).exp().round() as u64;
                    let clicks = Binomial::new(impressions, sigmoid(logit)).expect("valid p").sample(&mut rng);
                    ads.push(Ad {
                        ad_id: format!("a{a:04}-c{c}-g{g}-{i}"),
                        advertiser_id: format!("adv{a:04}"),
                        campaign_id: format!("adv{a:04}-c{c}"),
                        adgroup_id: format!("adv{a:04}-c{c}-g{g}"),
                        category: cat_name.to_string(),
                        title,
                        description,
                        cta: cta.to_string(),
                        publisher: publishers[p].0.clone(),
                        impressions,
                        clicks,
                    });
                }
            }
        }
    }
    ads
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalPoolConfig {
    pub seed: u64,
    pub ads: usize,
    pub advertisers_per_category: usize,
}

impl Default for RetrievalPoolConfig {
    fn default() -> Self {
        RetrievalPoolConfig {
            seed: 7,
            ads: 4000,
            advertisers_per_category: 25,
        }
    }
}

/// Ads over the eight categories, each drawing topical words from its own
/// category only, plus brand (advertiser), product (campaign) and theme
/// (adgroup) words and shared filler.
pub fn retrieval_pool(cfg: &RetrievalPoolConfig) -> Vec<Ad> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    struct Group {
        adv: usize,
        camp: usize,
        grp: usize,
        cat: usize,
        brand: String,
        product: String,
        theme: String,
    }
    let mut groups = Vec::new();
    let mut word_id = 0usize;
    for cat in 0..CATEGORIES.len() {
        for a in 0..cfg.advertisers_per_category {
            word_id += 1;
            let brand = pseudo_word(&mut rng, word_id);
            for c in 0..rng.random_range(1..=3) {
                word_id += 1;
                let product = pseudo_word(&mut rng, word_id);
                for g in 0..rng.random_range(1..=3) {
                    word_id += 1;
                    groups.push(Group {
                        adv: cat * cfg.advertisers_per_category + a,
                        camp: c,
                        grp: g,
                        cat,
                        brand: brand.clone(),
                        product: product.clone(),
                        theme: pseudo_word(&mut rng, word_id),
                    });
                }
            }
        }
    }
    (0..cfg.ads)
        .map(|i| {
            let g = &groups[rng.random_range(0..groups.len())];
            let (cat_name, topics) = CATEGORIES[g.cat];
            let t: Vec<&str> = topics.choose_multiple(&mut rng, 4).copied().collect();
            let f: Vec<&str> = FILLER.choose_multiple(&mut rng, 2).copied().collect();
            let (cta, _) = *CTAS.choose(&mut rng).expect("non-empty");
            Ad {
                ad_id: format!("r{i:05}"),
                advertiser_id: format!("adv{:03}", g.adv),
                campaign_id: format!("adv{:03}-c{}", g.adv, g.camp),
                adgroup_id: format!("adv{:03}-c{}-g{}", g.adv, g.camp, g.grp),
                category: cat_name.to_string(),
                title: format!("{} {} {} {}", g.brand, t[0], t[1], f[0]),
                description: format!("{} {} {} {} {}", g.product, g.theme, t[2], t[3], f[1]),
                cta: cta.to_string(),
                publisher: "pub00".into(),
                impressions: 1000,
                clicks: 10,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFixture {
    /// Pool paraphrases, indexed as the train partition.
    pub train: Vec<Ad>,
    /// One query ad per cluster.
    pub test: Vec<Ad>,
    pub pctr: PctrTable,
    /// Test ads whose neighbors all beat them by at least 25%.
    pub lifted: usize,
}

/// Clusters of one test ad and `paraphrases` train ads sharing all but one
/// cluster-unique word. Half the clusters get neighbor lifts in
/// [0.25, 1.0], the rest in [-0.5, 0.15], so exactly half the test ads have
/// a neighbor at least 20% better.
pub fn sweep_fixture(seed: u64, clusters: usize, paraphrases: usize) -> Result<SweepFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut table = Vec::new();
    let mut word_id = 0usize;
    let mut lifted = 0;
    for c in 0..clusters {
        let words: Vec<String> = (0..6)
            .map(|_| {
                word_id += 1;
                pseudo_word(&mut rng, word_id)
            })
            .collect();
        let strong = c % 2 == 0;
        lifted += usize::from(strong);
        let base = rng.random_range(0.01..0.05);
        let mk = |id: String, words: &[String]| Ad {
            ad_id: id,
            advertiser_id: format!("adv{c:04}"),
            campaign_id: format!("adv{c:04}-c0"),
            adgroup_id: format!("adv{c:04}-c0-g0"),
            category: "misc".into(),
            title: words[..3].join(" "),
            description: words[3..].join(" "),
            cta: String::new(),
            publisher: "pub00".into(),
            impressions: 1000,
            clicks: 10,
        };
        let q = mk(format!("t{c:04}"), &words);
        table.push((q.text(), base));
        test.push(q);
        for j in 0..paraphrases {
            let mut w = words.clone();
            word_id += 1;
            w[j % 6] = pseudo_word(&mut rng, word_id);
            let lift = if strong { rng.random_range(0.25..=1.0) } else { rng.random_range(-0.5..=0.15) };
            let ad = mk(format!("p{c:04}-{j}"), &w);
            table.push((ad.text(), base * (1.0 + lift)));
            train.push(ad);
        }
    }
    Ok(SweepFixture {
        train,
        test,
        pctr: PctrTable::new(table, None)?,
        lifted,
    })
}

/// Small pool reproducing the hand-worked rule example: the input scores
/// 0.02 and its five neighbors 0.03, 0.01, 0.027, 0.005 and 0.015.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkedExample {
    pub pool: Vec<Ad>,
    pub input_title: String,
    pub input_description: String,
    pub input_cta: String,
    pub pctr: PctrTable,
}

pub fn worked_example() -> Result<WorkedExample> {
    let base = ["trail", "hiking", "boots", "waterproof", "grip", "summer"];
    let swaps = ["rugged", "mountain", "sturdy", "lightweight", "traction"];
    let pctrs = [0.03, 0.01, 0.027, 0.005, 0.015];
    let mut pool = Vec::new();
    let mut table = Vec::new();
    for (i, (&swap, &p)) in swaps.iter().zip(&pctrs).enumerate() {
        let mut w: Vec<&str> = base.to_vec();
        w[i] = swap;
        let ad = Ad {
            ad_id: format!("ex{}", i + 1),
            advertiser_id: format!("outdoor{}", i + 1),
            campaign_id: format!("outdoor{}-c", i + 1),
            adgroup_id: format!("outdoor{}-g", i + 1),
            category: "fashion".into(),
            title: w[..3].join(" "),
            description: w[3..].join(" "),
            cta: "Shop Now".into(),
            publisher: "pub00".into(),
            impressions: 1000,
            clicks: (p * 1000.0) as u64,
        };
        table.push((ad.text(), p));
        pool.push(ad);
    }
    let input_title = base[..3].join(" ");
    let input_description = base[3..].join(" ");
    table.push((compose_ad_text(&input_title, &input_description, "Shop Now"), 0.02));
    Ok(WorkedExample {
        pool,
        input_title,
        input_description,
        input_cta: "Shop Now".into(),
        pctr: PctrTable::new(table, None)?,
    })
}

/// Title of the probe ad planted by [`probe_cluster`].
pub const PROBE_TITLE: &str = "glimmer lantern festival";
pub const PROBE_DESCRIPTION: &str = "tickets evening";

/// Six ads repeating the probe's words plus strongly positive quality
/// tokens. Added to a pool that a model was trained without, they are near
/// neighbors of the probe with clearly higher predicted CTR.
pub fn probe_cluster() -> Vec<Ad> {
    let boosts = [
        "free exclusive",
        "free bonus",
        "exclusive bonus",
        "free official",
        "bonus instant",
        "exclusive free",
    ];
    boosts
        .iter()
        .enumerate()
        .map(|(i, b)| Ad {
            ad_id: format!("probe{i}"),
            advertiser_id: format!("probe-adv{i}"),
            campaign_id: format!("probe-adv{i}-c"),
            adgroup_id: format!("probe-adv{i}-g"),
            category: "travel".into(),
            title: PROBE_TITLE.into(),
            description: format!("{PROBE_DESCRIPTION} {b}"),
            cta: String::new(),
            publisher: crate::corpus::OTHER_PUBLISHER.into(),
            impressions: 1000,
            clicks: 100,
        })
        .collect()
}

pub fn probe_text() -> AdText {
    compose_ad_text(PROBE_TITLE, PROBE_DESCRIPTION, "")
}

/// A scoring service setup at pool scale: an LR model trained on a CTR
/// corpus, a hashed embedder and an index over the corpus plus the
/// [`probe_cluster`] ads, which the model never saw.
pub struct ServiceFixture {
    pub pool: AdPool,
    pub model: LrModel<f64>,
    pub embedder: HashedEmbedder,
    pub index: AdIndex,
}

pub const SERVICE_EMBED_DIM: usize = 128;

pub fn service_fixture(n_ads: usize, seed: u64) -> Result<ServiceFixture> {
    let probes = probe_cluster();
    let target = n_ads.saturating_sub(probes.len()).max(1);
    let cfg = CtrCorpusConfig {
        seed,
        advertisers: target / 10 + 1,
        ..CtrCorpusConfig::default()
    };
    let mut ads = ctr_corpus(&cfg);
    let mut extra = 1;
    while ads.len() < target {
        ads.extend(
            ctr_corpus(&CtrCorpusConfig {
                seed: seed.wrapping_add(extra),
                advertisers: (target - ads.len()) / 10 + 1,
                ..cfg.clone()
            })
            .into_iter()
            .map(|mut a| {
                a.ad_id = format!("x{extra}-{}", a.ad_id);
                a.advertiser_id = format!("x{extra}-{}", a.advertiser_id);
                a.campaign_id = format!("x{extra}-{}", a.campaign_id);
                a.adgroup_id = format!("x{extra}-{}", a.adgroup_id);
                a
            }),
        );
        extra += 1;
    }
    ads.truncate(target);
    let corpus = AdPool::new(ads, DEFAULT_TOP_PUBLISHERS)?;
    let vocab = Vocab::build(corpus.ads().iter().map(|a| a.text().into_string()), 2);
    let train_cfg = TrainConfig {
        epochs: 300,
        ..TrainConfig::default()
    };
    let (model, _) = train::<f64>(corpus.ads(), &vocab, corpus.publisher_whitelist(), &train_cfg, Variant::Lr)?;
    let mut all = corpus.ads().to_vec();
    all.extend(probes);
    let pool = AdPool::new(all, DEFAULT_TOP_PUBLISHERS)?;
    let embedder = HashedEmbedder::new(SERVICE_EMBED_DIM, seed)?;
    let params = IndexParams {
        build_seed: seed,
        ..IndexParams::default()
    };
    let index = AdIndex::build(pool.ads(), &embedder, &model, params)?;
    Ok(ServiceFixture {
        pool,
        model,
        embedder,
        index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<UiEvent>,
    pub sessions: usize,
    pub recommended_sessions: usize,
    pub adopters: usize,
}

/// Composer sessions with known outcomes: a third rated strong, a third
/// weak and ignored, a third weak with a suggestion word adopted.
pub fn event_log(seed: u64, sessions: usize) -> EventLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut clocks: BTreeMap<usize, f64> = BTreeMap::new();
    let (mut rec, mut adopt) = (0, 0);
    for s in 0..sessions {
        let adv = rng.random_range(0..(sessions / 3).max(1));
        // Sessions last at most 1890 s; the next one of the same advertiser
        // starts more than the gap after that.
        let t = clocks.entry(adv).or_insert(1_600_000_000.0);
        *t += 4000.0 + rng.random_range(0.0..600.0);
        let t0 = *t;
        let (cat, topics) = CATEGORIES[s % CATEGORIES.len()];
        let original = format!("{} {}", topics[0], topics[1]);
        let suggestion = format!("{} {} free delivery", topics[0], topics[2]);
        let aid = format!("adv{adv:03}");
        let sid = format!("s{s:04}-{cat}");
        let mut push = |dt: f64, kind: EventKind, before: Option<&str>, after: Option<&str>, shown: Option<Vec<String>>, tsi: Option<u8>| {
            events.push(UiEvent {
                advertiser_id: aid.clone(),
                timestamp: t0 + dt,
                kind,
                session_id: Some(sid.clone()),
                text_before: before.map(str::to_string),
                text_after: after.map(str::to_string),
                suggestions_shown: shown,
                tsi,
            });
        };
        push(0.0, EventKind::Compose, None, Some(&original), None, None);
        match s % 3 {
            0 => {
                push(30.0, EventKind::TsiShown, Some(&original), None, Some(vec![]), Some(1));
                push(60.0, EventKind::Submit, None, Some(&original), None, None);
            }
            1 => {
                rec += 1;
                push(30.0, EventKind::TsiShown, Some(&original), None, Some(vec![suggestion.clone()]), Some(0));
                push(1800.0, EventKind::Submit, None, Some(&format!("{original} today")), None, None);
            }
            _ => {
                rec += 1;
                adopt += 1;
                push(30.0, EventKind::TsiShown, Some(&original), None, Some(vec![suggestion.clone()]), Some(0));
                push(90.0, EventKind::Edit, Some(&original), Some(&format!("{original} {}", topics[2])), None, None);
                push(1890.0, EventKind::Submit, None, Some(&format!("{original} {} delivery", topics[2])), None, None);
            }
        }
    }
    EventLog {
        events,
        sessions,
        recommended_sessions: rec,
        adopters: adopt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{report, sessionize};
    use crate::corpus::AdPool;
    use crate::textproc::stopwords;
    use std::collections::HashSet;

    #[test]
    fn category_vocabularies_are_disjoint() {
        let mut seen = HashSet::new();
        for (_, words) in CATEGORIES {
            for w in words {
                assert!(seen.insert(*w), "{w} repeated");
            }
        }
        for (q, _) in QUALITY_TOKENS {
            assert!(seen.insert(q));
        }
        for f in FILLER {
            assert!(seen.insert(f));
        }
    }

    #[test]
    fn ctr_corpus_is_valid_and_deterministic() {
        let cfg = CtrCorpusConfig {
            advertisers: 50,
            ..CtrCorpusConfig::default()
        };
        let ads = ctr_corpus(&cfg);
        assert_eq!(ads, ctr_corpus(&cfg));
        let pool = AdPool::new(ads.clone(), 13).unwrap();
        assert!(pool.ads().iter().any(|a| a.publisher == crate::corpus::OTHER_PUBLISHER));
        let publishers: HashSet<&str> = ads.iter().map(|a| a.publisher.as_str()).collect();
        assert!(publishers.len() > 13);
        assert!(ads.iter().all(|a| a.clicks <= a.impressions && a.impressions >= 300));
    }

    #[test]
    fn retrieval_pool_shape() {
        let ads = retrieval_pool(&RetrievalPoolConfig::default());
        assert_eq!(ads.len(), 4000);
        let cats: HashSet<&str> = ads.iter().map(|a| a.category.as_str()).collect();
        assert_eq!(cats.len(), 8);
        AdPool::new(ads, 13).unwrap();
    }

    #[test]
    fn sweep_fixture_halves() {
        let f = sweep_fixture(1, 40, 5).unwrap();
        assert_eq!(f.test.len(), 40);
        assert_eq!(f.train.len(), 200);
        assert_eq!(f.lifted, 20);
        AdPool::new(f.train.iter().chain(&f.test).cloned().collect(), 13).unwrap();
    }

    #[test]
    fn small_service_fixture_flags_probe() {
        let f = service_fixture(3000, 5).unwrap();
        assert_eq!(f.pool.len(), 3000);
        assert_eq!(f.index.len(), 3000);
        let r = crate::tsi::score_text(
            &probe_text(),
            crate::corpus::OTHER_PUBLISHER,
            &f.index,
            &f.embedder,
            &f.model,
            &crate::tsi::TsiConfig::default(),
        )
        .unwrap();
        assert_eq!(r.tsi, 0);
        assert!(!r.suggestions.is_empty());
        assert!(r.neighbors.iter().all(|n| n.ad_id.starts_with("probe")));
    }

    #[test]
    fn event_log_counts_match_analysis() {
        for (seed, n) in [(3, 30), (8, 90), (1, 300)] {
            let log = event_log(seed, n);
            let sessions = sessionize(log.events.clone());
            assert_eq!(sessions.len(), log.sessions);
            let r = report(&sessions, stopwords()).unwrap();
            assert_eq!(r.recommended_sessions, log.recommended_sessions);
            assert_eq!(r.adopters, log.adopters);
        }
    }
}
