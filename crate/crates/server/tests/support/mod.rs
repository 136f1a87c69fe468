//! Shared fixtures for the HTTP tests: a seeded store, a server on an
//! ephemeral port and scripted participants.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use phonolearn_core::phoneme::PhonemeInventory;
use phonolearn_core::pwld::CostConfig;
use phonolearn_core::task::{generate_tasks, GenerationPlan};
use phonolearn_core::Store;
use phonolearn_server::api::{
    router, AppState, NextTask, Policy, SessionCreated, SubmitReceipt, TaskView,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const SEED: u64 = 7;

pub fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ghazal_001.json")
}

pub fn fixture() -> String {
    std::fs::read_to_string(fixture_path()).unwrap()
}

/// Store with the fixture ingested and 20 + 2 tasks published.
pub fn seeded_store(dir: Option<&Path>) -> Arc<Store> {
    let inv = Arc::new(PhonemeInventory::persian());
    let store = match dir {
        Some(d) => Store::open(d, inv, CostConfig::default()).unwrap(),
        None => Store::in_memory(inv, CostConfig::default()),
    };
    store.ingest_alignment(&fixture()).unwrap();
    let plan = GenerationPlan {
        seed: SEED,
        ..GenerationPlan::default()
    };
    let tasks = generate_tasks(
        &store.word_items(),
        store.inventory(),
        store.cost_config(),
        &plan,
    )
    .unwrap();
    store.publish_tasks(&tasks).unwrap();
    Arc::new(store)
}

pub struct Server {
    pub base: String,
    pub store: Arc<Store>,
    pub client: reqwest::Client,
}

impl Server {
    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let res = self
            .client
            .post(self.url(path))
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = res.status().as_u16();
        (status, res.json().await.unwrap_or(Value::Null))
    }

    pub async fn get(&self, path: &str) -> (u16, String) {
        let res = self.client.get(self.url(path)).send().await.unwrap();
        (res.status().as_u16(), res.text().await.unwrap())
    }

    pub async fn profile(&self, body: Value) -> String {
        let (status, v) = self.post("/api/profiles", body).await;
        assert_eq!(status, 201, "{v}");
        v["profile_id"].as_str().unwrap().to_owned()
    }

    pub async fn session(&self, profile_id: &str) -> SessionCreated {
        let (status, v) = self
            .post("/api/sessions", json!({ "profile_id": profile_id }))
            .await;
        assert_eq!(status, 201, "{v}");
        serde_json::from_value(v).unwrap()
    }

    pub async fn next(&self, session_id: &str) -> NextTask {
        let (status, body) = self.get(&format!("/api/sessions/{session_id}/next")).await;
        assert_eq!(status, 200, "{body}");
        serde_json::from_str(&body).unwrap()
    }

    pub async fn submit(&self, session_id: &str, body: Value, on_site: bool) -> (u16, Value) {
        let mut req = self
            .client
            .post(self.url(&format!("/api/sessions/{session_id}/responses")))
            .json(&body);
        if on_site {
            req = req.header("x-participation-mode", "on_site");
        }
        let res = req.send().await.unwrap();
        let status = res.status().as_u16();
        (status, res.json().await.unwrap_or(Value::Null))
    }
}

pub fn audio_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let bytes: Vec<u8> = (0..=255u8).cycle().take(4096).collect();
    std::fs::write(dir.path().join("hafez-001-01.mp3"), bytes).unwrap();
    dir
}

/// Serves `store` on 127.0.0.1 with an ephemeral port.
pub async fn spawn(store: Arc<Store>, policy: Policy, assets: &Path) -> Server {
    let state = AppState {
        store: Arc::clone(&store),
        policy,
        intro: "Listen, then choose the transcription you hear.".into(),
        assets_dir: assets.to_path_buf(),
    };
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    Server {
        base: format!("http://{addr}"),
        store,
        client: reqwest::Client::new(),
    }
}

/// One scripted participant working through a whole session over HTTP.
///
/// The script reads ground truth from the store (never from the wire) and
/// answers correctly with a probability that falls with the item's
/// complexity. Returns the number of submitted answers.
pub async fn scripted_session(server: &Server, participant: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + participant);
    let l1 = ["english", "german", "french", "spanish"][participant as usize % 4];
    let profile = server
        .profile(json!({
            "l1_language": l1,
            "l2_languages": ["arabic"],
            "age": 20 + participant,
        }))
        .await;
    let session = server.session(&profile).await;
    let mut answered = 0;
    loop {
        let task = match server.next(&session.session_id).await {
            NextTask::Complete => break,
            NextTask::Task { task } => task,
        };
        let body = script_answer(server, &task, &mut rng);
        let (status, receipt) = server
            .submit(&session.session_id, body, participant.is_multiple_of(5))
            .await;
        assert_eq!(status, 201, "{receipt}");
        let receipt: SubmitReceipt = serde_json::from_value(receipt).unwrap();
        answered += 1;
        assert_eq!(receipt.cursor, answered);
    }
    answered
}

fn script_answer(server: &Server, view: &TaskView, rng: &mut ChaCha8Rng) -> Value {
    let task = server.store.task(&view.task_id).unwrap();
    let truth = task.truth().unwrap().as_ipa().to_owned();
    let p_correct = (0.85 - 0.6 * task.complexity().unwrap()).clamp(0.1, 0.95);
    let correct = rng.random_bool(p_correct);
    if view.options.is_empty() {
        let typed = if correct {
            truth
        } else {
            view.displayed.clone()
        };
        json!({ "task_id": view.task_id, "typed": typed })
    } else {
        let truth_at = view.options.iter().position(|o| *o == truth).unwrap();
        let index = if correct {
            truth_at
        } else {
            (truth_at + rng.random_range(1..view.options.len())) % view.options.len()
        };
        json!({ "task_id": view.task_id, "option_index": index })
    }
}

/// The full study loop on a fresh store: 16 scripted sessions, then the
/// exported CSV.
pub async fn end_to_end(dir: Option<&Path>) -> String {
    let assets = audio_dir();
    let server = spawn(seeded_store(dir), Policy::default(), assets.path()).await;
    for participant in 0..16 {
        assert_eq!(scripted_session(&server, participant).await, 22);
    }
    let (status, csv) = server.get("/api/export.csv").await;
    assert_eq!(status, 200);
    csv
}
