use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};

use futures_util::{SinkExt, StreamExt};
use taptype::decoder::Decoder;
use taptype::session::Mode;
use taptype_service::{router, AppState, ClientMessage, Connection, NoiseConfig, NoiseMode, RenderMessage, ServerMessage};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio_tungstenite::tungstenite::Message;

fn decoder() -> &'static Decoder {
    static D: OnceLock<Decoder> = OnceLock::new();
    D.get_or_init(|| taptype::desk_decoder().unwrap())
}

fn connection(seed: u64) -> Connection {
    Connection::new(decoder().clone(), NoiseConfig::default(), seed).unwrap()
}

fn render(reply: ServerMessage) -> RenderMessage {
    match reply {
        ServerMessage::Render(r) => r,
        ServerMessage::Error { message } => panic!("unexpected error: {message}"),
    }
}

fn keys(text: &str) -> Vec<ClientMessage> {
    text.chars()
        .map(|c| if c == ' ' { ClientMessage::Space } else { ClientMessage::TapKey { key: c } })
        .collect()
}

#[test]
fn tap_key_adds_an_asterisk() {
    let mut c = connection(0);
    let r = render(c.handle(&ClientMessage::TapKey { key: 'e' }));
    assert_eq!(r.pending, "*");
    let obs = &c.session().state().pending[0];
    assert_eq!(obs.hand, taptype::Hand::Left);
    assert_eq!(obs.argmax(), taptype::FingerClass::Middle);
    assert_eq!(obs.max_prob(), 1.0);
}

#[test]
fn unmapped_key_is_an_error_and_changes_nothing() {
    let mut c = connection(0);
    c.handle(&ClientMessage::TapKey { key: 't' });
    let before = c.session().state().clone();
    match c.handle(&ClientMessage::TapKey { key: '3' }) {
        ServerMessage::Error { message } => assert!(message.contains("unmapped key"), "{message}"),
        other => panic!("expected an error, got {other:?}"),
    }
    assert_eq!(c.session().state(), &before);
}

#[test]
fn typing_the_and_space_commits_it() {
    let mut c = connection(0);
    let mut last = None;
    for m in keys("the ") {
        last = Some(render(c.handle(&m)));
    }
    let r = last.unwrap();
    assert_eq!(r.committed, "the");
    assert_eq!(r.pending, "");
    assert_eq!(r.feedback, "click");
}

#[test]
fn submit_phrase_commits_and_submits() {
    let mut c = connection(0);
    for m in keys("the end") {
        c.handle(&m);
    }
    let r = render(c.handle(&ClientMessage::SubmitPhrase));
    assert_eq!(r.submitted.as_deref(), Some("the end"));
    assert_eq!(r.committed, "");
}

#[test]
fn config_changes_the_noise_and_keeps_the_text() {
    let mut c = connection(0);
    for m in keys("the ") {
        c.handle(&m);
    }
    let noise = NoiseConfig { accuracy: 0.8, mode: NoiseMode::Overconfident };
    let r = render(c.handle(&ClientMessage::Config { noise: noise.clone() }));
    assert_eq!(r.committed, "the");
    assert_eq!(c.noise(), &noise);
    let bad = NoiseConfig { accuracy: 1.5, mode: NoiseMode::Calibrated };
    assert!(matches!(c.handle(&ClientMessage::Config { noise: bad }), ServerMessage::Error { .. }));
    assert_eq!(c.noise(), &noise);
}

#[test]
fn oov_words_are_spelled_through_the_protocol() {
    let mut c = connection(0);
    for m in keys("zq") {
        c.handle(&m);
    }
    let r = render(c.handle(&ClientMessage::AcceptChar));
    assert_eq!(r.mode, Mode::Oov);
    assert_eq!(r.oov_prefix.len(), 2);
    let r = render(c.handle(&ClientMessage::TapKey { key: 'x' }));
    assert!(!r.suggestions.is_empty() && r.suggestions.len() <= 10);
    let r = render(c.handle(&ClientMessage::Space));
    assert_eq!(r.committed.len(), 3);
}

#[test]
fn malformed_json_is_answered_with_an_error() {
    let mut c = connection(0);
    assert!(matches!(c.handle_text("{not json"), ServerMessage::Error { .. }));
    assert!(matches!(c.handle_text(r#"{"type":"dance"}"#), ServerMessage::Error { .. }));
    assert!(matches!(c.handle_text(r#"{"type":"tap_key","key":"t"}"#), ServerMessage::Render(_)));
}

#[test]
fn wire_format_matches_the_protocol() {
    let m: ClientMessage = serde_json::from_str(r#"{"type":"config","noise":{"accuracy":0.9,"mode":"calibrated"}}"#).unwrap();
    assert_eq!(m, ClientMessage::Config { noise: NoiseConfig { accuracy: 0.9, mode: NoiseMode::Calibrated } });
    for (text, msg) in [
        (r#"{"type":"space"}"#, ClientMessage::Space),
        (r#"{"type":"cycle"}"#, ClientMessage::Cycle),
        (r#"{"type":"delete"}"#, ClientMessage::Delete),
        (r#"{"type":"accept_char"}"#, ClientMessage::AcceptChar),
        (r#"{"type":"submit_phrase"}"#, ClientMessage::SubmitPhrase),
    ] {
        assert_eq!(serde_json::from_str::<ClientMessage>(text).unwrap(), msg);
    }
    let mut c = connection(0);
    let reply = serde_json::to_value(c.handle(&ClientMessage::TapKey { key: 'a' })).unwrap();
    assert_eq!(reply["type"], "render");
    for field in ["committed", "pending", "suggestions", "cursor", "feedback"] {
        assert!(reply.get(field).is_some(), "{field} missing");
    }
    let s = &reply["suggestions"][0];
    assert!(s["word"].is_string() && s["score"].is_number());
    let err = serde_json::to_value(ServerMessage::error("x")).unwrap();
    assert_eq!(err, serde_json::json!({"type": "error", "message": "x"}));
}

#[test]
fn same_seed_replays_to_identical_renders() {
    let noise = ClientMessage::Config { noise: NoiseConfig { accuracy: 0.7, mode: NoiseMode::Calibrated } };
    let script: Vec<ClientMessage> = std::iter::once(noise).chain(keys("the quick brown fox ")).chain([ClientMessage::Cycle, ClientMessage::Delete]).collect();
    let run = |seed| {
        let mut c = connection(seed);
        script.iter().map(|m| serde_json::to_string(&c.handle(m)).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(11), run(11));
}

async fn spawn_server() -> SocketAddr {
    let state = Arc::new(AppState::new(decoder().clone(), NoiseConfig::default(), 0));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    addr
}

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn connect(addr: SocketAddr) -> Socket {
    tokio_tungstenite::connect_async(format!("ws://{addr}/session")).await.unwrap().0
}

async fn send(ws: &mut Socket, text: &str) -> ServerMessage {
    ws.send(Message::text(text)).await.unwrap();
    loop {
        match ws.next().await.unwrap().unwrap() {
            Message::Text(t) => return serde_json::from_str(t.as_str()).unwrap(),
            Message::Ping(_) | Message::Pong(_) => continue,
            other => panic!("unexpected frame {other:?}"),
        }
    }
}

async fn type_text(ws: &mut Socket, text: &str) -> RenderMessage {
    let mut last = None;
    for m in keys(text) {
        last = Some(render(send(ws, &serde_json::to_string(&m).unwrap()).await));
    }
    last.unwrap()
}

#[tokio::test]
async fn healthz_answers_200() {
    let addr = spawn_server().await;
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    stream.write_all(b"GET /healthz HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).await.unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
}

#[tokio::test]
async fn sessions_are_isolated_and_fresh_on_reconnect() {
    let addr = spawn_server().await;
    let mut a = connect(addr).await;
    let mut b = connect(addr).await;
    assert_eq!(type_text(&mut a, "the ").await.committed, "the");
    assert_eq!(type_text(&mut b, "of ").await.committed, "of");
    assert_eq!(type_text(&mut a, "end ").await.committed, "the end");
    // malformed frames keep the connection open
    assert!(matches!(send(&mut a, "][").await, ServerMessage::Error { .. }));
    let r = render(send(&mut a, r#"{"type":"cycle"}"#).await);
    assert_eq!(r.committed, "the end");
    a.close(None).await.unwrap();
    let mut again = connect(addr).await;
    let r = render(send(&mut again, r#"{"type":"cycle"}"#).await);
    assert_eq!(r.committed, "");
    assert_eq!(r.feedback, "none");
}

#[tokio::test]
async fn fixed_seed_sessions_replay_over_the_socket() {
    let addr = spawn_server().await;
    let script: Vec<String> = std::iter::once(r#"{"type":"config","noise":{"accuracy":0.8,"mode":"calibrated"}}"#.to_owned())
        .chain(keys("we should meet ").iter().map(|m| serde_json::to_string(m).unwrap()))
        .collect();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let mut ws = tokio_tungstenite::connect_async(format!("ws://{addr}/session?seed=42")).await.unwrap().0;
        let mut replies = Vec::new();
        for m in &script {
            replies.push(serde_json::to_string(&send(&mut ws, m).await).unwrap());
        }
        runs.push(replies);
    }
    assert_eq!(runs[0], runs[1]);
}
