#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chatpoints_core::{synthesize_dataset, write_dataset, Dataset, SynthesisSpec};
use chatpoints_server::{build, AppState, ServerConfig};
use reqwest::StatusCode;
use serde_json::Value;
use tokio::task::JoinHandle;

pub const CAT: usize = 3;
pub const DOG: usize = 5;

/// Ten CIFAR-named classes of 50; cats 150..=159 are predicted as dog.
pub fn scenario() -> Dataset {
    let spec = SynthesisSpec::new(10, 50, 16, 7).with_confusion(CAT, DOG, 0.2);
    synthesize_dataset(&spec).unwrap()
}

/// Eight correct dogs and three cats predicted as dog.
pub fn eleven_cluster() -> Vec<u64> {
    let mut ids: Vec<u64> = (250..258).collect();
    ids.extend([150, 151, 152]);
    ids
}

pub fn write_scenario(root: &Path) -> PathBuf {
    let dir = root.join("data");
    write_dataset(&dir, &scenario()).unwrap();
    dir
}

pub struct Server {
    pub base: String,
    pub state: Arc<AppState>,
    pub client: reqwest::Client,
    task: JoinHandle<()>,
}

impl Drop for Server {
    fn drop(&mut self) {
        self.task.abort();
    }
}

impl Server {
    pub async fn start(config: &ServerConfig) -> Self {
        let (router, state) = build(config).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let task = tokio::spawn(async move {
            axum::serve(listener, router).await.unwrap();
        });
        Self {
            base: format!("http://{addr}"),
            state,
            client: reqwest::Client::new(),
            task,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn get(&self, path: &str) -> (StatusCode, Value) {
        let resp = self.client.get(self.url(path)).send().await.unwrap();
        decode(resp).await
    }

    pub async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let resp = self.client.post(self.url(path)).json(&body).send().await.unwrap();
        decode(resp).await
    }

    pub async fn patch(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let resp = self.client.patch(self.url(path)).json(&body).send().await.unwrap();
        decode(resp).await
    }

    pub async fn delete(&self, path: &str) -> (StatusCode, Value) {
        let resp = self.client.delete(self.url(path)).send().await.unwrap();
        decode(resp).await
    }

    /// Start the default projection and wait for it to finish.
    pub async fn project(&self, body: Value) -> Value {
        let (status, _) = self.post("/api/projection", body).await;
        assert_eq!(status, StatusCode::ACCEPTED);
        self.wait_projection(Duration::from_secs(120)).await
    }

    pub async fn wait_projection(&self, limit: Duration) -> Value {
        let started = Instant::now();
        loop {
            let (status, body) = self.get("/api/projection").await;
            match body["status"].as_str() {
                Some("done") => {
                    assert_eq!(status, StatusCode::OK);
                    return body;
                }
                Some("running") => assert_eq!(status, StatusCode::ACCEPTED),
                other => panic!("unexpected projection status {other:?}: {body}"),
            }
            assert!(started.elapsed() < limit, "projection did not finish");
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }
}

pub async fn decode(resp: reqwest::Response) -> (StatusCode, Value) {
    let status = resp.status();
    let bytes = resp.bytes().await.unwrap();
    let body = serde_json::from_slice(&bytes)
        .unwrap_or_else(|_| panic!("non-JSON body for {status}: {}", String::from_utf8_lossy(&bytes)));
    (status, body)
}

/// Asserts `body` is exactly one ApiError with the given code and returns its message.
pub fn expect_api_error(status: StatusCode, body: &Value, want_status: u16, want_code: &str) -> String {
    assert_eq!(status.as_u16(), want_status, "body: {body}");
    let obj = body.as_object().unwrap_or_else(|| panic!("error body not an object: {body}"));
    for key in obj.keys() {
        assert!(["code", "message", "detail"].contains(&key.as_str()), "stray key {key} in {body}");
    }
    assert_eq!(obj["code"], want_code, "body: {body}");
    let message = obj["message"].as_str().expect("message is text");
    assert!(!message.is_empty());
    message.to_string()
}
