mod common;

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use adstrength_core::annindex::{AdIndex, IndexParams};
use adstrength_core::corpus::write_ads;
use adstrength_core::ctrmodel::{PctrProvider, PctrTable};
use adstrength_core::embed::HashedEmbedder;
use adstrength_core::synth::worked_example;
use adstrength_core::textproc::AdText;
use adstrength_core::ProviderError;
use adstrength_service::config::Budgets;
use adstrength_service::ServiceConfig;
use common::{agent, get, post, start, state};
use serde_json::json;

fn config(dir: &tempfile::TempDir) -> ServiceConfig {
    ServiceConfig {
        events_path: dir.path().join("events.jsonl"),
        ..ServiceConfig::default()
    }
}

fn fallback_pctr() -> Arc<dyn PctrProvider> {
    Arc::new(PctrTable::new([], Some(0.05)).unwrap())
}

#[test]
fn not_ready_before_build() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(state(config(&dir), fallback_pctr()));
    let a = agent();
    let (code, health) = get(&a, &format!("{base}/v1/healthz"));
    assert_eq!(code, 200);
    assert_eq!(health["ready"], false);
    assert_eq!(health["pool_size"], 0);
    let body = json!({"title": "hello"}).to_string();
    assert_eq!(post(&a, &format!("{base}/v1/tsi"), &body).0, 503);
    assert_eq!(post(&a, &format!("{base}/v1/similar"), &body).0, 503);
    // pCTR alone does not need the index.
    let (code, resp) = post(&a, &format!("{base}/v1/pctr"), &body);
    assert_eq!(code, 200);
    assert_eq!(resp["pctr"], 0.05);
}

#[test]
fn invalid_requests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(state(config(&dir), fallback_pctr()));
    let a = agent();
    for body in [
        "not json",
        r#"{"title": "", "description": "  ", "cta": ""}"#,
        "{}",
        r#"{"title": "x", "colour": "red"}"#,
        r#"{"title": 5}"#,
    ] {
        for route in ["tsi", "pctr", "similar"] {
            let (code, resp) = post(&a, &format!("{base}/v1/{route}"), body);
            assert_eq!(code, 400, "{route} {body}");
            assert!(resp["error"].is_string());
        }
    }
}

fn ready_base(dir: &tempfile::TempDir) -> (String, Arc<adstrength_service::AppState>) {
    let ex = worked_example().unwrap();
    let s = state(config(dir), Arc::new(ex.pctr.clone()));
    s.rebuild_from_ads(&ex.pool, IndexParams::default()).unwrap();
    (start(s.clone()), s)
}

#[test]
fn similar_validates_k_and_min_sim() {
    let dir = tempfile::tempdir().unwrap();
    let (base, _) = ready_base(&dir);
    let a = agent();
    let url = format!("{base}/v1/similar");
    assert_eq!(post(&a, &url, r#"{"title": "trail hiking boots", "k": 0}"#).0, 400);
    assert_eq!(post(&a, &url, r#"{"title": "trail hiking boots", "k": 100000}"#).0, 400);
    assert_eq!(post(&a, &url, r#"{"title": "trail hiking boots", "min_sim": 1.5}"#).0, 400);
    let (code, resp) = post(&a, &url, r#"{"title": "trail hiking boots", "k": 3, "min_sim": -1}"#);
    assert_eq!(code, 200);
    let n = resp["neighbors"].as_array().unwrap();
    assert_eq!(n.len(), 3);
    let sims: Vec<f64> = n.iter().map(|x| x["similarity"].as_f64().unwrap()).collect();
    assert!(sims.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn events_are_appended_or_rejected_whole() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(state(config(&dir), fallback_pctr()));
    let a = agent();
    let url = format!("{base}/v1/events");
    let path = dir.path().join("events.jsonl");
    let good = json!({"advertiser_id": "adv1", "timestamp": 100.0, "kind": "compose", "text_before": "a"});
    let (code, resp) = post(&a, &url, &good.to_string());
    assert_eq!(code, 200);
    assert_eq!(resp["appended"], 1);
    let (code, resp) = post(&a, &url, &json!([good, good]).to_string());
    assert_eq!(code, 200);
    assert_eq!(resp["appended"], 2);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);

    let bad_ts = json!({"advertiser_id": "adv1", "timestamp": -1.0, "kind": "edit"});
    let missing_list = json!({"advertiser_id": "adv1", "timestamp": 1.0, "kind": "tsi_shown"});
    for body in [
        json!([good, bad_ts]).to_string(),
        missing_list.to_string(),
        json!({"advertiser_id": "adv1", "timestamp": 1.0, "kind": "delete"}).to_string(),
        "{".to_string(),
    ] {
        assert_eq!(post(&a, &url, &body).0, 400, "{body}");
    }
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
}

#[test]
fn rebuild_swaps_generation_and_keeps_old_on_failure() {
    let dir = tempfile::tempdir().unwrap();
    let ex = worked_example().unwrap();
    let pool_path = dir.path().join("pool.jsonl");
    write_ads(&pool_path, &ex.pool).unwrap();
    let cfg = ServiceConfig {
        pool_path: Some(pool_path.clone()),
        ..config(&dir)
    };
    let base = start(state(cfg, Arc::new(ex.pctr.clone())));
    let a = agent();
    let (code, resp) = post(&a, &format!("{base}/v1/index/rebuild"), "");
    assert_eq!(code, 200, "{resp}");
    assert_eq!(resp["index_generation"], 1);
    assert_eq!(resp["pool_size"], ex.pool.len());
    let (_, health) = get(&a, &format!("{base}/v1/healthz"));
    assert_eq!(health["ready"], true);
    assert_eq!(health["index_generation"], 1);
    assert_eq!(health["index_digest"], resp["index_digest"]);

    std::fs::write(&pool_path, "{ broken\n").unwrap();
    let (code, _) = post(&a, &format!("{base}/v1/index/rebuild"), "");
    assert_eq!(code, 500);
    let (_, after) = get(&a, &format!("{base}/v1/healthz"));
    assert_eq!(after, health);
    let body = json!({"title": ex.input_title, "description": ex.input_description, "cta": ex.input_cta});
    let (code, tsi) = post(&a, &format!("{base}/v1/tsi"), &body.to_string());
    assert_eq!(code, 200);
    assert_eq!(tsi["index_generation"], 1);
}

#[test]
fn rebuild_without_pool_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(state(config(&dir), fallback_pctr()));
    assert_eq!(post(&agent(), &format!("{base}/v1/index/rebuild"), "").0, 400);
}

struct Slow(Duration);

impl PctrProvider for Slow {
    fn predict(&self, _: &AdText, _: &str) -> Result<f64, ProviderError> {
        thread::sleep(self.0);
        Ok(0.1)
    }
}

struct Failing;

impl PctrProvider for Failing {
    fn predict(&self, _: &AdText, _: &str) -> Result<f64, ProviderError> {
        Err(ProviderError::Network("connection refused".into()))
    }
}

#[test]
fn slow_provider_times_out_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig {
        budgets: Budgets {
            pctr_ms: 50,
            ..Budgets::default()
        },
        ..config(&dir)
    };
    let ex = worked_example().unwrap();
    let s = state(cfg, Arc::new(Slow(Duration::from_millis(600))));
    let embedder = HashedEmbedder::new(64, 0).unwrap();
    let index = AdIndex::build(&ex.pool, &embedder, &ex.pctr, IndexParams::default()).unwrap();
    s.install(index, Arc::new(embedder));
    let base = start(s);
    let a = agent();
    for route in ["tsi", "pctr"] {
        let t = Instant::now();
        let (code, resp) = post(&a, &format!("{base}/v1/{route}"), r#"{"title": "boots"}"#);
        assert_eq!(code, 504, "{route} {resp}");
        assert!(t.elapsed() < Duration::from_millis(400), "{:?}", t.elapsed());
    }
}

#[test]
fn provider_failure_is_bad_gateway() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(state(config(&dir), Arc::new(Failing)));
    let (code, resp) = post(&agent(), &format!("{base}/v1/pctr"), r#"{"title": "boots"}"#);
    assert_eq!(code, 502);
    assert!(resp["error"].as_str().unwrap().contains("connection refused"));
}

#[test]
fn worked_example_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let ex = worked_example().unwrap();
    let (base, _) = ready_base(&dir);
    let body = json!({
        "title": ex.input_title,
        "description": ex.input_description,
        "cta": ex.input_cta,
    });
    let (code, resp) = post(&agent(), &format!("{base}/v1/tsi"), &body.to_string());
    assert_eq!(code, 200, "{resp}");
    assert_eq!(resp["pctr"], 0.02);
    assert!(resp["latency_ms"].as_f64().unwrap() >= 0.0);
    assert!(resp["neighbors_considered"].as_u64().unwrap() <= 5);
}
