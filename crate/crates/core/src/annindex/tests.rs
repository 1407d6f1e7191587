use super::*;
use crate::ctrmodel::ConstantPctr;
use crate::embed::HashedEmbedder;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Embedding {
    let v: Vec<f32> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    Embedding::from_raw(v).unwrap()
}

fn random_index(n: usize, d: usize, seed: u64, mode: SearchMode) -> (AdIndex, Vec<Embedding>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vecs: Vec<Embedding> = (0..n).map(|_| random_unit(&mut rng, d)).collect();
    let entries = vecs
        .iter()
        .enumerate()
        .map(|(i, e)| IndexEntry {
            ad_id: format!("ad{i:06}"),
            text: format!("text {i}"),
            embedding: e.clone(),
            pctr: 0.01 + (i % 50) as f64 / 1000.0,
        })
        .collect();
    let params = IndexParams {
        mode,
        build_seed: seed,
        ..IndexParams::default()
    };
    let spec = EmbedderSpec::Hashed { dim: d, seed: 0 };
    (AdIndex::from_entries(entries, spec, params).unwrap(), vecs)
}

/// Independent scan: similarity by plain f64 loop, sorted with the same key.
fn scan_oracle(vecs: &[Embedding], q: &Embedding, k: usize, min_sim: f64, exclude: Option<usize>) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = vecs
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, v)| {
            let mut s = 0.0f64;
            for j in 0..v.dim() {
                s += v.as_slice()[j] as f64 * q.as_slice()[j] as f64;
            }
            (format!("ad{i:06}"), s.clamp(-1.0, 1.0))
        })
        .filter(|(_, s)| *s >= min_sim)
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn ad(id: &str, title: &str) -> Ad {
    Ad {
        ad_id: id.into(),
        advertiser_id: "a".into(),
        campaign_id: "c".into(),
        adgroup_id: "g".into(),
        category: "x".into(),
        title: title.into(),
        description: String::new(),
        cta: String::new(),
        publisher: "p".into(),
        impressions: 1,
        clicks: 0,
    }
}

#[test]
fn single_ad_pool() {
    let h = HashedEmbedder::new(16, 0).unwrap();
    let a = ad("only", "lonely ad");
    let idx = AdIndex::build([&a], &h, &ConstantPctr(0.1), IndexParams::default()).unwrap();
    assert_eq!(idx.len(), 1);
    let q = h.embed(&a.text()).unwrap();
    let got = idx.query_approx(&q, 1, 0.6, None).unwrap();
    assert_eq!(got[0].ad_id, "only");
    assert!((got[0].similarity - 1.0).abs() < 1e-6);
    assert_eq!(got[0].pctr, 0.1);
    assert!(idx.query_approx(&q, 1, 0.6, Some("only")).unwrap().is_empty());
    assert!(AdIndex::build(std::iter::empty::<&Ad>(), &h, &ConstantPctr(0.1), IndexParams::default()).is_err());
}

#[test]
fn provider_failure_names_the_ad() {
    let h = HashedEmbedder::new(16, 0).unwrap();
    let ads = [ad("a1", "x"), ad("a2", "y")];
    let table = crate::ctrmodel::PctrTable::new([(AdText::new("x"), 0.2)], None).unwrap();
    match AdIndex::build(&ads, &h, &table, IndexParams::default()) {
        Err(Error::AdProvider { ad_id, .. }) => assert_eq!(ad_id, "a2"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn exact_query_matches_scan_oracle() {
    let (idx, vecs) = random_index(2000, 24, 1, SearchMode::Hnsw);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for t in 0..50 {
        let q = if t % 2 == 0 { random_unit(&mut rng, 24) } else { vecs[t * 7].clone() };
        let min_sim = if t % 3 == 0 { -1.0 } else { 0.2 };
        let exclude = (t % 4 == 1).then_some(t * 7);
        let ex_id = exclude.map(|i| format!("ad{i:06}"));
        let got: Vec<(String, f64)> = idx
            .query_exact(&q, 10, min_sim, ex_id.as_deref())
            .unwrap()
            .into_iter()
            .map(|n| (n.ad_id, n.similarity))
            .collect();
        assert_eq!(got, scan_oracle(&vecs, &q, 10, min_sim, exclude));
    }
}

#[test]
fn self_query_ranks_self_first() {
    let (idx, vecs) = random_index(500, 16, 3, SearchMode::Hnsw);
    for i in [0, 17, 499] {
        let exact = idx.query_exact(&vecs[i], 3, 0.6, None).unwrap();
        assert_eq!(exact[0].ad_id, format!("ad{i:06}"));
        assert!((exact[0].similarity - 1.0).abs() < 1e-6);
        let approx = idx.query_approx(&vecs[i], 1, 0.6, None).unwrap();
        assert_eq!(approx[0].ad_id, format!("ad{i:06}"));
    }
}

#[test]
fn orthogonal_pool_is_filtered_out() {
    let basis = |i: usize| {
        let mut v = vec![0.0f32; 4];
        v[i] = 1.0;
        Embedding::from_raw(v).unwrap()
    };
    let entries = (0..3)
        .map(|i| IndexEntry {
            ad_id: i.to_string(),
            text: String::new(),
            embedding: basis(i),
            pctr: 0.5,
        })
        .collect();
    let idx = AdIndex::from_entries(entries, EmbedderSpec::Hashed { dim: 4, seed: 0 }, IndexParams::default()).unwrap();
    assert!(idx.query_exact(&basis(3), 5, 0.6, None).unwrap().is_empty());
    assert!(idx.query_approx(&basis(3), 5, 0.6, None).unwrap().is_empty());
    assert!(idx.query_exact(&basis(3), 0, 0.6, None).is_err());
    assert!(idx.query_exact(&Embedding::zeros(5), 1, 0.6, None).is_err());
}

#[test]
fn recall_brute_force_and_oversized_k() {
    let (idx, vecs) = random_index(300, 8, 4, SearchMode::BruteForce);
    assert_eq!(recall_at_k(&idx, &vecs[..20], 10).unwrap(), 1.0);
    assert_eq!(recall_at_k(&idx, &vecs[..5], 1000).unwrap(), 1.0);
    assert!(recall_at_k(&idx, &[], 10).is_err());
}

#[test]
fn hnsw_recall_on_random_vectors() {
    let (idx, _) = random_index(5000, 32, 5, SearchMode::Hnsw);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let queries: Vec<Embedding> = (0..200).map(|_| random_unit(&mut rng, 32)).collect();
    let r = recall_at_k(&idx, &queries, 10).unwrap();
    // Scripted separately: count overlap of the two id lists by hand.
    let mut manual = 0usize;
    for q in &queries {
        let a: Vec<String> = idx.query_approx(q, 10, -1.0, None).unwrap().into_iter().map(|n| n.ad_id).collect();
        let e: Vec<String> = idx.query_exact(q, 10, -1.0, None).unwrap().into_iter().map(|n| n.ad_id).collect();
        manual += a.iter().filter(|x| e.contains(x)).count();
    }
    assert!((r - manual as f64 / 2000.0).abs() <= 0.02);
    assert!(r >= 0.95, "recall {r}");
}

#[test]
fn build_is_deterministic_and_persists() {
    let (a, _) = random_index(1000, 16, 7, SearchMode::Hnsw);
    let (b, _) = random_index(1000, 16, 7, SearchMode::Hnsw);
    assert_eq!(a.digest(), b.digest());
    assert_eq!(a, b);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("idx.bin");
    a.save(&path).unwrap();
    let back = AdIndex::load(&path).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.digest(), a.digest());
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], MAGIC);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), FORMAT_VERSION);
    assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 1000);
    assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 16);
    assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 7);

    assert!(AdIndex::from_bytes(&bytes[..100]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(AdIndex::from_bytes(&bad), Err(Error::Format(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn approx_results_are_exact_sorted_and_floored(seed in 0u64..1000, min_sim in -0.5f64..0.5, k in 1usize..20) {
        let (idx, _) = random_index(400, 12, seed, SearchMode::Hnsw);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 99);
        let q = random_unit(&mut rng, 12);
        let got = idx.query_approx(&q, k, min_sim, None).unwrap();
        prop_assert!(got.len() <= k);
        for w in got.windows(2) {
            prop_assert!(w[0].similarity > w[1].similarity || (w[0].similarity == w[1].similarity && w[0].ad_id < w[1].ad_id));
        }
        for n in &got {
            let i = idx.position(&n.ad_id).unwrap();
            prop_assert!(n.similarity >= min_sim);
            prop_assert_eq!(n.similarity, dot_f64(q.as_slice(), idx.vector(i)).clamp(-1.0, 1.0));
        }
        let all = idx.query_exact(&q, idx.len(), -1.0, None).unwrap();
        prop_assert_eq!(all.len(), idx.len());
    }
}
