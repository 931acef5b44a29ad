//! Demo backend: one typing session per WebSocket connection.
//!
//! The client sends the keys the user meant to press; the server maps each
//! key to its finger, passes it through a confusion-matrix classifier to
//! get a realistic finger distribution and feeds the result to the session
//! state machine. Every client message is answered by exactly one render
//! or error message.

pub mod wire;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use log::{info, warn};
use serde::Deserialize;
use taptype::classifier::ConfusionClassifier;
use taptype::decoder::Decoder;
use taptype::session::{classify_event, Session, SessionEvent};

pub use wire::{ClientMessage, NoiseConfig, NoiseMode, RenderMessage, ServerMessage, WireSuggestion};

/// A session with its noise source, independent of any transport.
pub struct Connection {
    session: Session,
    noise: NoiseConfig,
    classifier: ConfusionClassifier,
    seed: u64,
}

impl Connection {
    pub fn new(decoder: Decoder, noise: NoiseConfig, seed: u64) -> taptype::Result<Self> {
        let classifier = noise.classifier(seed)?;
        Ok(Self {
            session: Session::new(decoder),
            noise,
            classifier,
            seed,
        })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    /// Parses and handles one text frame.
    pub fn handle_text(&mut self, text: &str) -> ServerMessage {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(&msg),
            Err(e) => ServerMessage::error(format!("malformed message: {e}")),
        }
    }

    pub fn handle(&mut self, msg: &ClientMessage) -> ServerMessage {
        match self.try_handle(msg) {
            Ok(render) => ServerMessage::Render(render),
            Err(e) => ServerMessage::error(e.to_string()),
        }
    }

    fn try_handle(&mut self, msg: &ClientMessage) -> taptype::Result<RenderMessage> {
        let render = match msg {
            ClientMessage::TapKey { key } => {
                let (hand, finger) = self
                    .session
                    .decoder()
                    .map()
                    .finger_for(*key)
                    .ok_or_else(|| taptype::Error::Config(format!("unmapped key {key:?}")))?;
                let obs = self.classifier.observe(hand, finger, 0);
                self.session.handle(&classify_event(Some(&obs)))?
            }
            ClientMessage::Space => self.session.handle(&SessionEvent::Space)?,
            ClientMessage::Cycle => self.session.handle(&SessionEvent::Cycle)?,
            ClientMessage::Delete => self.session.handle(&SessionEvent::DeleteWord)?,
            ClientMessage::AcceptChar => self.session.handle(&SessionEvent::AcceptChar)?,
            ClientMessage::SubmitPhrase => {
                // commit what is pending, then the second space submits
                let first = self.session.handle(&SessionEvent::Space)?;
                if first.submitted.is_some() || !self.session.state().just_committed {
                    first
                } else {
                    self.session.handle(&SessionEvent::Space)?
                }
            }
            ClientMessage::Config { noise } => {
                self.classifier = noise.classifier(self.seed)?;
                self.noise = noise.clone();
                self.session.render()
            }
        };
        Ok(RenderMessage::from_render(&render, &self.session))
    }
}

/// Shared, read-only server state.
pub struct AppState {
    pub decoder: Decoder,
    pub noise: NoiseConfig,
    /// Seed of the first connection; later connections count up.
    pub base_seed: u64,
    connections: AtomicU64,
}

impl AppState {
    pub fn new(decoder: Decoder, noise: NoiseConfig, base_seed: u64) -> Self {
        Self {
            decoder,
            noise,
            base_seed,
            connections: AtomicU64::new(0),
        }
    }
}

#[derive(Debug, Deserialize)]
struct SessionParams {
    /// Fixes the noise seed for reproducible sessions.
    seed: Option<u64>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/session", get(session_upgrade))
        .with_state(state)
}

async fn session_upgrade(ws: WebSocketUpgrade, Query(params): Query<SessionParams>, State(state): State<Arc<AppState>>) -> impl IntoResponse {
    let n = state.connections.fetch_add(1, Ordering::Relaxed);
    let seed = params.seed.unwrap_or(state.base_seed.wrapping_add(n));
    ws.on_upgrade(move |socket| run_session(socket, state, seed))
}

async fn run_session(mut socket: WebSocket, state: Arc<AppState>, seed: u64) {
    let mut conn = match Connection::new(state.decoder.clone(), state.noise.clone(), seed) {
        Ok(c) => c,
        Err(e) => {
            warn!("cannot start session: {e}");
            return;
        }
    };
    info!("session started with seed {seed}");
    while let Some(Ok(msg)) = socket.recv().await {
        let reply = match msg {
            Message::Text(text) => conn.handle_text(text.as_str()),
            Message::Binary(_) => ServerMessage::error("binary frames are not supported"),
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
        };
        let text = serde_json::to_string(&reply).expect("server messages serialize");
        if socket.send(Message::Text(text.into())).await.is_err() {
            break;
        }
    }
    info!("session with seed {seed} closed");
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
