mod common;

use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use adstrength_core::anonymize::{anonymize, BlockList};
use adstrength_core::corpus::Ad;
use adstrength_core::ctrmodel::LrModel;
use adstrength_core::embed::{EmbeddingProvider, HashedEmbedder};
use adstrength_core::synth::{service_fixture, PROBE_DESCRIPTION, PROBE_TITLE};
use adstrength_core::textproc::AdText;
use adstrength_core::tsi::score_text;
use adstrength_service::{AppState, ServiceConfig};
use common::{agent, post, start, state};
use serde_json::{json, Value};

const POOL_SIZE: usize = 50_000;

struct Fixture {
    base: String,
    state: Arc<AppState>,
    model: LrModel<f64>,
    embedder: HashedEmbedder,
    ads: Vec<Ad>,
    _dir: tempfile::TempDir,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let fx = service_fixture(POOL_SIZE, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg = ServiceConfig {
            events_path: dir.path().join("events.jsonl"),
            ..ServiceConfig::default()
        };
        let s = state(cfg, Arc::new(fx.model.clone()));
        s.install(fx.index, Arc::new(fx.embedder.clone()));
        Fixture {
            base: start(s.clone()),
            state: s,
            model: fx.model,
            embedder: fx.embedder,
            ads: fx.pool.ads().to_vec(),
            _dir: dir,
        }
    })
}

/// Keeps latency measurement free of concurrent test traffic.
fn exclusive() -> MutexGuard<'static, ()> {
    static L: Mutex<()> = Mutex::new(());
    L.lock().unwrap_or_else(|e| e.into_inner())
}

fn request(ad: &Ad) -> Value {
    json!({"title": ad.title, "description": ad.description, "cta": ad.cta, "publisher": ad.publisher})
}

fn sample(ads: &[Ad], n: usize) -> impl Iterator<Item = &Ad> {
    let step = ads.len() / n;
    ads.iter().step_by(step.max(1)).take(n)
}

#[test]
fn tsi_endpoint_matches_library() {
    let _g = exclusive();
    let f = fixture();
    let snap = f.state.snapshot().unwrap();
    let a = agent();
    for ad in sample(&f.ads, 100) {
        let (code, resp) = post(&a, &format!("{}/v1/tsi", f.base), &request(ad).to_string());
        assert_eq!(code, 200, "{resp}");
        let want = score_text(&ad.text(), &ad.publisher, &snap.index, &f.embedder, &f.model, &f.state.tsi).unwrap();
        assert_eq!(resp["pctr"].as_f64().unwrap(), want.input_pctr, "{}", ad.ad_id);
        assert_eq!(resp["tsi"].as_u64().unwrap(), want.tsi as u64);
        assert_eq!(resp["neighbors_considered"].as_u64().unwrap(), want.neighbors.len() as u64);
        let got: Vec<(String, f64, String)> = resp["suggestions"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| {
                (
                    s["ad_id"].as_str().unwrap().to_string(),
                    s["pctr"].as_f64().unwrap(),
                    s["anonymized_text"].as_str().unwrap().to_string(),
                )
            })
            .collect();
        let expected: Vec<(String, f64, String)> = want
            .suggestions
            .iter()
            .map(|n| {
                let masked = anonymize(&AdText::new(&n.text), &BlockList::empty()).into_string();
                (n.ad_id.clone(), n.pctr, masked)
            })
            .collect();
        assert_eq!(got, expected);
    }
}

#[test]
fn similar_endpoint_matches_library() {
    let _g = exclusive();
    let f = fixture();
    let snap = f.state.snapshot().unwrap();
    let a = agent();
    for ad in sample(&f.ads, 50) {
        let body = json!({"title": ad.title, "description": ad.description, "cta": ad.cta, "k": 10, "min_sim": 0.1});
        let (code, resp) = post(&a, &format!("{}/v1/similar", f.base), &body.to_string());
        assert_eq!(code, 200);
        let q = f.embedder.embed(&ad.text()).unwrap();
        let want = snap.index.query_approx(&q, 10, 0.1, None).unwrap();
        let got: Vec<(&str, f64)> = resp["neighbors"]
            .as_array()
            .unwrap()
            .iter()
            .map(|n| (n["ad_id"].as_str().unwrap(), n["similarity"].as_f64().unwrap()))
            .collect();
        let want: Vec<(&str, f64)> = want.iter().map(|n| (n.ad_id.as_str(), n.similarity)).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn probe_is_rated_weak_with_probe_suggestions() {
    let _g = exclusive();
    let f = fixture();
    let body = json!({"title": PROBE_TITLE, "description": PROBE_DESCRIPTION});
    let (code, resp) = post(&agent(), &format!("{}/v1/tsi", f.base), &body.to_string());
    assert_eq!(code, 200, "{resp}");
    assert_eq!(resp["tsi"], 0, "{resp}");
    let suggestions = resp["suggestions"].as_array().unwrap();
    assert!(!suggestions.is_empty());
    let input = resp["pctr"].as_f64().unwrap();
    for s in suggestions {
        assert!(s["ad_id"].as_str().unwrap().starts_with("probe"), "{s}");
        assert!(s["pctr"].as_f64().unwrap() > input * (1.0 + f.state.tsi.delta));
    }
}

#[test]
fn p95_latency_under_one_second() {
    let _g = exclusive();
    let f = fixture();
    let a = agent();
    let url = format!("{}/v1/tsi", f.base);
    let mut latencies: Vec<f64> = sample(&f.ads, 500)
        .map(|ad| {
            let body = request(ad).to_string();
            let t = Instant::now();
            let (code, _) = post(&a, &url, &body);
            assert_eq!(code, 200);
            t.elapsed().as_secs_f64()
        })
        .collect();
    assert_eq!(latencies.len(), 500);
    latencies.sort_by(f64::total_cmp);
    let p95 = latencies[(0.95 * latencies.len() as f64).ceil() as usize - 1];
    println!("pool {POOL_SIZE}: p50 {:.2} ms, p95 {:.2} ms", latencies[249] * 1e3, p95 * 1e3);
    assert!(p95 < 1.0, "p95 {p95} s");
}
