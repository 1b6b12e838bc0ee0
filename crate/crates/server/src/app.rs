use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use chrono::Utc;
use futures_util::{SinkExt, StreamExt};
use orality_core::persist::{load_session, save_session, session_path, PersistError, SessionDocument};
use orality_core::protocol::Outbound;
use orality_core::session::{Providers, Session, SessionActor, SessionConfig, SystemClock};
use orality_core::stimulation::ConflictSettings;
use orality_core::LayoutParams;
use serde::Deserialize;
use tokio::sync::mpsc;

pub const DEFAULT_SESSION_ID: &str = "default";

pub struct AppState {
    pub providers: Providers,
    pub config: SessionConfig,
    /// Applied to new sessions only; loaded sessions keep their own.
    pub params: LayoutParams,
    pub conflicts: ConflictSettings,
    active: Mutex<HashSet<String>>,
}

impl AppState {
    pub fn new(providers: Providers, config: SessionConfig, params: LayoutParams, conflicts: ConflictSettings) -> Self {
        Self {
            providers,
            config,
            params,
            conflicts,
            active: Mutex::new(HashSet::new()),
        }
    }

    fn claim(self: &Arc<Self>, id: &str) -> Option<Claim> {
        let mut active = self.active.lock().expect("registry lock");
        active.insert(id.to_owned()).then(|| Claim {
            state: Arc::clone(self),
            id: id.to_owned(),
        })
    }

    fn file(&self, id: &str) -> Result<Option<PathBuf>, PersistError> {
        self.config
            .session_dir
            .as_deref()
            .map(|d| session_path(d, id))
            .transpose()
    }

    /// Loads `<session_dir>/<id>.orality.json` if present, else starts fresh.
    pub fn open_session(&self, id: &str) -> Result<Session, (&'static str, String)> {
        let loaded = match self.file(id) {
            Err(e) => return Err(("bad_session_id", e.to_string())),
            Ok(Some(path)) if path.exists() => {
                Some(load_session(&path).map_err(|e| ("session_load_failed", e.to_string()))?)
            }
            Ok(_) => None,
        };
        let doc = loaded.unwrap_or_else(|| {
            let mut doc = SessionDocument::new(id, self.params.clone(), Utc::now());
            doc.conflicts = self.conflicts;
            doc
        });
        Session::new(doc, self.providers.clone(), Box::new(SystemClock), self.config.clone())
            .map_err(|e| ("session_load_failed", e.to_string()))
    }
}

/// Releases a session id when the connection ends.
struct Claim {
    state: Arc<AppState>,
    id: String,
}

impl Drop for Claim {
    fn drop(&mut self) {
        if let Ok(mut active) = self.state.active.lock() {
            active.remove(&self.id);
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/ws", get(ws_handler))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
pub struct WsQuery {
    session: Option<String>,
}

async fn ws_handler(ws: WebSocketUpgrade, Query(q): Query<WsQuery>, State(state): State<Arc<AppState>>) -> Response {
    let id = q.session.unwrap_or_else(|| DEFAULT_SESSION_ID.to_owned());
    ws.on_upgrade(move |socket| serve_socket(socket, state, id))
        .into_response()
}

async fn reject(mut socket: WebSocket, code: &str, message: String) {
    tracing::warn!(code, %message, "rejecting connection");
    let _ = socket
        .send(Message::Text(Outbound::error(code, message).encode().into()))
        .await;
    let _ = socket.send(Message::Close(None)).await;
}

async fn serve_socket(socket: WebSocket, state: Arc<AppState>, id: String) {
    let Some(claim) = state.claim(&id) else {
        return reject(
            socket,
            "session_in_use",
            format!("session {id} already has a connection"),
        )
        .await;
    };
    let opened = {
        let state = Arc::clone(&state);
        let id = id.clone();
        tokio::task::spawn_blocking(move || state.open_session(&id)).await
    };
    let session = match opened {
        Ok(Ok(s)) => s,
        Ok(Err((code, msg))) => return reject(socket, code, msg).await,
        Err(e) => return reject(socket, "internal_error", e.to_string()).await,
    };
    tracing::info!(session = %id, "connected");

    let actor = SessionActor::spawn(session);
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<String>();
    actor.subscribe(Box::new(move |ev: &Outbound| out_tx.send(ev.encode()).is_ok()));

    let (mut sink, mut stream) = socket.split();
    loop {
        tokio::select! {
            frame = stream.next() => match frame {
                Some(Ok(Message::Text(text))) => {
                    if !actor.send_raw(text.as_str()) {
                        break;
                    }
                }
                Some(Ok(Message::Binary(_))) => {
                    let err = Outbound::error("bad_json", "binary frames are not accepted; send JSON text");
                    if sink.send(Message::Text(err.encode().into())).await.is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Ping(_) | Message::Pong(_))) => {}
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
            },
            out = out_rx.recv() => match out {
                Some(text) => {
                    if sink.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                None => break,
            },
        }
    }

    let final_path = state.file(&id).ok().flatten();
    let saved = tokio::task::spawn_blocking(move || {
        let doc = actor.shutdown()?;
        let path = final_path?;
        Some(save_session(&doc, &path).map(|_| path))
    })
    .await;
    match saved {
        Ok(Some(Err(e))) => tracing::error!(session = %id, error = %e, "final save failed"),
        Ok(Some(Ok(path))) => tracing::info!(session = %id, path = %path.display(), "saved"),
        _ => {}
    }
    drop(claim);
    tracing::info!(session = %id, "disconnected");
}
