#![allow(dead_code)]

use std::sync::Arc;
use std::thread;

use adstrength_core::anonymize::BlockList;
use adstrength_core::ctrmodel::PctrProvider;
use adstrength_service::{AppState, ServiceConfig};
use serde_json::Value;
use ureq::Agent;

/// Runs the router on an ephemeral port in a background runtime.
pub fn start(state: Arc<AppState>) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            adstrength_service::serve(state, listener).await.unwrap();
        });
    });
    base
}

pub fn state(config: ServiceConfig, pctr: Arc<dyn PctrProvider>) -> Arc<AppState> {
    Arc::new(AppState::new(config, pctr, BlockList::empty()).unwrap())
}

pub fn agent() -> Agent {
    Agent::config_builder().http_status_as_error(false).build().into()
}

pub fn post(agent: &Agent, url: &str, body: &str) -> (u16, Value) {
    let mut resp = agent
        .post(url)
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap_or(Value::Null))
}

pub fn get(agent: &Agent, url: &str) -> (u16, Value) {
    let mut resp = agent.get(url).call().unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap_or(Value::Null))
}
