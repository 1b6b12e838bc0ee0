//! Request shapes against an in-process OpenAI-compatible fake.

use std::sync::{Arc, Mutex};

use axum::extract::{Multipart, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use orality_core::providers::{ChatRequest, ProviderError};
use orality_server::http_providers::{Endpoint, ProviderConfig};
use serde_json::{json, Value};

#[derive(Default)]
struct Seen {
    bodies: Vec<(String, Value)>,
    auth: Vec<String>,
    audio: Vec<(String, usize, String)>,
}

type Shared = Arc<Mutex<Seen>>;

fn record(seen: &Shared, path: &str, headers: &HeaderMap, body: Value) {
    let mut s = seen.lock().unwrap();
    s.bodies.push((path.to_owned(), body));
    s.auth
        .push(headers.get("authorization").unwrap().to_str().unwrap().to_owned());
}

async fn chat(State(seen): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let user = body["messages"][1]["content"].as_str().unwrap_or_default().to_owned();
    record(&seen, "chat", &headers, body);
    match user.as_str() {
        "slow down" => (StatusCode::TOO_MANY_REQUESTS, Json(json!({"error": "rate"}))),
        "broken" => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": "boom"}))),
        "empty" => (StatusCode::OK, Json(json!({"choices": []}))),
        _ => (
            StatusCode::OK,
            Json(json!({"choices": [{"message": {"role": "assistant", "content": "[\"Why?\"]"}}]})),
        ),
    }
}

async fn embeddings(State(seen): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    let n = body["input"].as_array().map_or(0, Vec::len);
    let dim = body["dimensions"].as_u64().unwrap_or(4) as usize;
    record(&seen, "embeddings", &headers, body);
    // Reverse order to check index sorting.
    let data: Vec<Value> = (0..n)
        .rev()
        .map(|i| json!({"index": i, "embedding": vec![i as f64; dim]}))
        .collect();
    Json(json!({"data": data}))
}

async fn transcribe(State(seen): State<Shared>, mut form: Multipart) -> Json<Value> {
    let mut model = String::new();
    let mut len = 0;
    let mut name = String::new();
    while let Some(field) = form.next_field().await.unwrap() {
        match field.name() {
            Some("model") => model = field.text().await.unwrap(),
            Some("file") => {
                name = field.file_name().unwrap_or_default().to_owned();
                len = field.bytes().await.unwrap().len();
            }
            _ => {}
        }
    }
    seen.lock().unwrap().audio.push((model, len, name));
    Json(json!({"text": "  we study typing in VR  "}))
}

fn fake_server() -> (String, Shared) {
    let seen: Shared = Arc::default();
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/embeddings", post(embeddings))
        .route("/v1/audio/transcriptions", post(transcribe))
        .with_state(Arc::clone(&seen));
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (format!("http://{}/v1", rx.recv().unwrap()), seen)
}

fn config(base: &str, dim: usize) -> ProviderConfig {
    let ep = |key: &str, model: &str| Endpoint {
        base_url: base.to_owned(),
        api_key: key.to_owned(),
        model: model.to_owned(),
    };
    ProviderConfig {
        chat: ep("chat-key", "chat-model"),
        embed: ep("embed-key", "embed-model"),
        embed_dim: dim,
        transcribe: ep("stt-key", "stt-model"),
    }
}

#[test]
fn chat_sends_system_and_user_messages() {
    let (base, seen) = fake_server();
    let p = config(&base, 1536).build().unwrap();
    let out = p
        .chat
        .chat_complete(&ChatRequest::json("be terse", "Topic: X"))
        .unwrap();
    assert_eq!(out, "[\"Why?\"]");
    let s = seen.lock().unwrap();
    let (path, body) = &s.bodies[0];
    assert_eq!(path, "chat");
    assert_eq!(body["model"], "chat-model");
    assert_eq!(body["messages"][0], json!({"role": "system", "content": "be terse"}));
    assert_eq!(body["messages"][1], json!({"role": "user", "content": "Topic: X"}));
    assert!(body.get("response_format").is_none());
    assert_eq!(s.auth[0], "Bearer chat-key");
}

#[test]
fn chat_errors_map_to_provider_errors() {
    let (base, _) = fake_server();
    let p = config(&base, 1536).build().unwrap();
    let ask = |m: &str| p.chat.chat_complete(&ChatRequest::text("s", m)).unwrap_err();
    assert_eq!(ask("slow down"), ProviderError::RateLimited);
    assert!(matches!(ask("broken"), ProviderError::Transport(m) if m.contains("500")));
    assert!(matches!(ask("empty"), ProviderError::InvalidResponse(_)));

    let dead = config("http://127.0.0.1:9", 1536).build().unwrap();
    assert!(matches!(
        dead.chat.chat_complete(&ChatRequest::text("s", "u")).unwrap_err(),
        ProviderError::Transport(_)
    ));
}

#[test]
fn embeddings_are_reordered_and_dimension_is_requested() {
    let (base, seen) = fake_server();
    let p = config(&base, 8).build().unwrap();
    assert_eq!(p.embedder.dimension(), 8);
    let v = p.embedder.embed(&["a".into(), "b".into(), "c".into()]).unwrap();
    assert_eq!(v, vec![vec![0.0; 8], vec![1.0; 8], vec![2.0; 8]]);
    assert!(p.embedder.embed(&[]).unwrap().is_empty());
    let s = seen.lock().unwrap();
    assert_eq!(s.bodies.len(), 1);
    assert_eq!(
        s.bodies[0].1,
        json!({"model": "embed-model", "input": ["a", "b", "c"], "dimensions": 8})
    );
    assert_eq!(s.auth[0], "Bearer embed-key");
}

#[test]
fn default_dimension_omits_the_field() {
    let (base, seen) = fake_server();
    let p = config(&base, 1536).build().unwrap();
    p.embedder.embed(&["a".into()]).unwrap();
    assert!(seen.lock().unwrap().bodies[0].1.get("dimensions").is_none());
}

#[test]
fn transcription_uploads_one_wav_at_finish() {
    let (base, seen) = fake_server();
    let p = config(&base, 1536).build().unwrap();
    let mut stream = p.transcriber.open().unwrap();
    assert!(stream.push_audio(&[0u8; 320]).unwrap().is_empty());
    assert!(stream.push_audio(&[1u8; 320]).unwrap().is_empty());
    assert!(seen.lock().unwrap().audio.is_empty());
    let chunks = stream.finish().unwrap();
    assert_eq!(chunks.len(), 1);
    assert!(chunks[0].is_final);
    assert_eq!(chunks[0].text, "we study typing in VR");
    let s = seen.lock().unwrap();
    assert_eq!(
        s.audio,
        [("stt-model".to_owned(), 44 + 640, "utterance.wav".to_owned())]
    );

    let silent = p.transcriber.open().unwrap();
    assert!(silent.finish().unwrap().is_empty());
}

/// Live smoke test; runs only when `ORALITY_LIVE_TEST=1` and keys are set.
#[test]
fn live_providers_smoke() {
    if std::env::var("ORALITY_LIVE_TEST").as_deref() != Ok("1") {
        return;
    }
    let p = ProviderConfig::from_env().unwrap().build().unwrap();
    let reply = p
        .chat
        .chat_complete(&ChatRequest::text("Reply with the word ok.", "ping"))
        .unwrap();
    assert!(!reply.trim().is_empty());
    let v = p.embedder.embed(&["hello".into()]).unwrap();
    assert_eq!(v[0].len(), p.embedder.dimension());
}
