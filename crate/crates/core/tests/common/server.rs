//! In-process server on an ephemeral port plus a small JSON client.

use std::sync::Arc;

use reqwest::{Method, StatusCode};
use serde_json::Value;
use shipcheck::api::{self, AppState, ServerConfig};
use shipcheck::clock::Clock;
use shipcheck::content::{default_pack, ContentPack};
use shipcheck::engine::EngineConfig;
use shipcheck::store::{MemoryStore, Store};

pub const ADMIN_PASSWORD: &str = "admin-pass";
pub const TTL_SECS: u64 = 3600;

pub struct TestServer {
    pub base: String,
    pub state: AppState,
    task: tokio::task::JoinHandle<()>,
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

pub fn zero_wait_pack() -> ContentPack {
    default_pack().with_wait_seconds(0)
}

pub async fn start(pack: ContentPack, clock: Arc<dyn Clock>) -> TestServer {
    start_with_store(pack, clock, Arc::new(MemoryStore::default())).await
}

pub async fn start_with_store(pack: ContentPack, clock: Arc<dyn Clock>, store: Arc<dyn Store>) -> TestServer {
    let config = ServerConfig {
        token_secret: b"test secret".to_vec(),
        token_ttl_secs: TTL_SECS,
        engine: EngineConfig {
            seed: Some(11),
            ..EngineConfig::default()
        },
    };
    let state = AppState::new(Arc::new(pack), store, clock, config).expect("state builds");
    if !state.auth.has_account("admin") {
        state.auth.create_user("admin", ADMIN_PASSWORD).expect("admin account");
    }
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
    let base = format!("http://{}", listener.local_addr().expect("address"));
    let served = state.clone();
    let task = tokio::spawn(async move {
        api::serve(listener, served).await.expect("server runs");
    });
    TestServer { base, state, task }
}

#[derive(Clone)]
pub struct Client {
    pub base: String,
    pub http: reqwest::Client,
    pub token: Option<String>,
}

impl Client {
    pub fn anonymous(base: &str) -> Self {
        Self {
            base: base.to_string(),
            http: reqwest::Client::new(),
            token: None,
        }
    }

    pub async fn login(base: &str, username: &str, password: &str) -> Self {
        let mut c = Self::anonymous(base);
        let (status, body) = c
            .call(Method::POST, "/api/login", Some(serde_json::json!({ "username": username, "password": password })))
            .await;
        assert_eq!(status, StatusCode::OK, "login {username}: {body}");
        c.token = Some(body["token"].as_str().expect("token").to_string());
        c
    }

    pub async fn call(&self, method: Method, path: &str, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.expect("request sent");
        let status = resp.status();
        let text = resp.text().await.expect("body read");
        let value = serde_json::from_str(&text).unwrap_or(Value::String(text));
        (status, value)
    }

    pub async fn get(&self, path: &str) -> (StatusCode, Value) {
        self.call(Method::GET, path, None).await
    }

    pub async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, path, Some(body)).await
    }

    pub async fn put(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::PUT, path, Some(body)).await
    }

    pub async fn state(&self) -> Value {
        let (status, body) = self.get("/api/state").await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body
    }

    pub fn ws_url(&self) -> String {
        let token = self.token.as_deref().unwrap_or("");
        format!("{}/api/events?token={token}", self.base.replacen("http", "ws", 1))
    }
}
