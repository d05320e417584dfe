//! HTTP and WebSocket surface: signaling, the co-host command API and relay,
//! co-host media, chat, tablet, and the spectator `/live` tree.

use std::fs::File;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bytes::Bytes;
use futures_util::{SinkExt, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use streamfunnel::fanout::{hex, FanoutError};
use streamfunnel::scenario::ScenarioScript;
use streamfunnel::scene::Scene;
use streamfunnel::session::{route_audio, AudioPacket, CommandError, CommandRequest, Role, Session, SignalMessage};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

use crate::config::Config;
use crate::engine::Engine;
use crate::metrics::Metrics;

const WATCH_PAGE: &str = include_str!("watch.html");

#[derive(Debug, Error)]
pub enum StartError {
    /// Bad input files; the CLI exits with status 2.
    #[error("{0}")]
    Input(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("{0}")]
    Io(String),
}

type AppState = State<Arc<Engine>>;

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/watch", get(|| async { Html(WATCH_PAGE) }))
        .route("/signal", get(signal_ws))
        .route("/relay", get(relay_ws))
        .route("/media", get(media_ws))
        .route("/chat", get(chat_ws))
        .route("/api/command", post(command))
        .route("/api/chat", get(chat_list).post(chat_post))
        .route("/api/audio", post(audio))
        .route("/api/tablet", get(tablet))
        .route("/api/clock", get(clock))
        .route("/api/status", get(status))
        .route("/live/{rung}/playlist.json", get(playlist))
        .route("/live/{rung}/seg/{n}", get(segment))
        .with_state(engine)
}

async fn index() -> Html<&'static str> {
    Html(
        "<!doctype html><title>StreamFunnel</title><h1>StreamFunnel</h1>\
         <p>Spectators: <a href=\"/watch\">/watch</a>. Co-host clients connect to \
         <code>/signal</code>, <code>/media</code>, <code>/relay</code> and <code>/api/command</code>.</p>",
    )
}

fn bearer(headers: &HeaderMap, query: Option<&str>) -> Option<String> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::to_owned)
        .or_else(|| query.map(str::to_owned))
}

#[derive(Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

// Commands.

fn error_status(e: &CommandError) -> StatusCode {
    match e {
        CommandError::Auth(_) => StatusCode::UNAUTHORIZED,
        CommandError::Validation { .. } => StatusCode::BAD_REQUEST,
        CommandError::Rig(_) | CommandError::State(_) => StatusCode::CONFLICT,
    }
}

/// Reads `{token, cmd, params}`, naming the first bad field.
fn parse_request(body: &Value) -> Result<CommandRequest, CommandError> {
    let Some(obj) = body.as_object() else {
        return Err(CommandError::validation("body", "expected a JSON object"));
    };
    let token = obj.get("token").and_then(Value::as_str).ok_or_else(|| CommandError::validation("token", "missing or not a string"))?;
    let cmd = obj.get("cmd").and_then(Value::as_str).ok_or_else(|| CommandError::validation("cmd", "missing or not a string"))?;
    Ok(CommandRequest { token: token.to_owned(), cmd: cmd.to_owned(), params: obj.get("params").cloned().unwrap_or(Value::Null) })
}

fn run_command(engine: &Engine, body: &Value) -> (StatusCode, Value) {
    let out = parse_request(body).and_then(|req| engine.command(req));
    match out {
        Ok(result) => (StatusCode::OK, json!({ "ok": true, "result": result })),
        Err(e) => (error_status(&e), json!({ "ok": false, "error": e.to_json() })),
    }
}

async fn command(State(engine): AppState, body: Bytes) -> Response {
    let body: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => {
            let err = CommandError::validation("body", e.to_string());
            return (StatusCode::BAD_REQUEST, Json(json!({ "ok": false, "error": err.to_json() }))).into_response();
        }
    };
    let (status, v) = run_command(&engine, &body);
    (status, Json(v)).into_response()
}

/// Commands over a socket; an optional `req_id` is echoed back.
async fn relay_ws(State(engine): AppState, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |mut socket| async move {
        while let Some(Ok(msg)) = socket.recv().await {
            let Message::Text(text) = msg else { continue };
            let reply = match serde_json::from_str::<Value>(&text) {
                Ok(mut body) => {
                    let req_id = body.as_object_mut().and_then(|o| o.remove("req_id"));
                    let (_, mut v) = run_command(&engine, &body);
                    if let Some(id) = req_id {
                        v["req_id"] = id;
                    }
                    v
                }
                Err(e) => json!({ "ok": false, "error": CommandError::validation("body", e.to_string()).to_json() }),
            };
            if socket.send(Message::Text(reply.to_string().into())).await.is_err() {
                break;
            }
        }
    })
}

// Signaling.

#[derive(Deserialize)]
struct SignalQuery {
    client_id: Option<String>,
}

async fn signal_ws(State(engine): AppState, Query(q): Query<SignalQuery>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| signal_session(engine, socket, q.client_id))
}

async fn signal_session(engine: Arc<Engine>, socket: WebSocket, preset_id: Option<String>) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<SignalMessage>();
    let writer = tokio::spawn(async move {
        while let Some(m) = rx.recv().await {
            let text = serde_json::to_string(&m).expect("signal message serializes");
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    let reply = |m: SignalMessage| {
        let _ = tx.send(m);
    };
    let mut bound: Option<String> = None;
    if let Some(id) = preset_id {
        if engine.attach_peer(&id, tx.clone()) {
            bound = Some(id);
        } else {
            reply(SignalMessage::Error { message: format!("client id {id:?} is in use") });
        }
    }
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let parsed: SignalMessage = match serde_json::from_str(&text) {
            Ok(m) => m,
            Err(e) => {
                reply(SignalMessage::Error { message: format!("malformed signal message: {e}") });
                continue;
            }
        };
        // Without a preset id the first join names the connection.
        if bound.is_none() {
            if let SignalMessage::Join { client_id, .. } = &parsed {
                if engine.attach_peer(client_id, tx.clone()) {
                    bound = Some(client_id.clone());
                } else {
                    reply(SignalMessage::Error { message: format!("client id {client_id:?} is in use") });
                    continue;
                }
            } else {
                reply(SignalMessage::Error { message: "join first".into() });
                continue;
            }
        }
        let from = bound.clone().unwrap();
        engine.signal(&from, parsed);
    }
    if let Some(id) = bound {
        engine.detach_peer(&id);
    }
    drop(tx);
    let _ = writer.await;
}

// Media.

async fn media_ws(State(engine): AppState, headers: HeaderMap, Query(q): Query<TokenQuery>, ws: WebSocketUpgrade) -> Response {
    let token = bearer(&headers, q.token.as_deref()).unwrap_or_default();
    if engine.read(|s| s.signaling().authenticate(&token).map(|(_, r)| r)) != Some(Role::CoHost) {
        return (StatusCode::UNAUTHORIZED, "co-host session token required").into_response();
    }
    let mut frames = engine.media.subscribe();
    ws.on_upgrade(move |socket| async move {
        let (mut sink, mut stream) = socket.split();
        let mut reader = tokio::spawn(async move { while let Some(Ok(_)) = stream.next().await {} });
        loop {
            tokio::select! {
                _ = &mut reader => break,
                f = frames.recv() => match f {
                    Ok(rec) => if sink.send(Message::Binary(rec)).await.is_err() { break },
                    Err(tokio::sync::broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(_) => break,
                },
            }
        }
    })
}

// Chat.

#[derive(Deserialize)]
struct ChatQuery {
    after: Option<u64>,
}

async fn chat_list(State(engine): AppState, Query(q): Query<ChatQuery>) -> Json<Value> {
    let messages = engine.read(|s| s.chat().since(q.after.unwrap_or(0)).to_vec());
    Json(json!({ "messages": messages }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatPost {
    client_id: String,
    text: String,
    #[serde(default)]
    token: Option<String>,
}

async fn chat_post(State(engine): AppState, body: Bytes) -> Response {
    let post: ChatPost = match serde_json::from_slice(&body) {
        Ok(p) => p,
        Err(e) => return (StatusCode::BAD_REQUEST, Json(json!({ "ok": false, "error": e.to_string() }))).into_response(),
    };
    match engine.chat(post.token, &post.client_id, &post.text) {
        Ok(id) => Json(json!({ "ok": true, "msg_id": id })).into_response(),
        Err(e) => (StatusCode::BAD_REQUEST, Json(json!({ "ok": false, "error": e.to_string() }))).into_response(),
    }
}

/// Sends the ledger so far, then every new or updated message.
async fn chat_ws(State(engine): AppState, ws: WebSocketUpgrade) -> Response {
    let mut feed = engine.chat_feed.subscribe();
    let backlog = engine.read(|s| s.chat().messages().to_vec());
    ws.on_upgrade(move |socket| async move {
        let (mut sink, mut stream) = socket.split();
        for m in backlog {
            let text = serde_json::to_string(&m).expect("chat message serializes");
            if sink.send(Message::Text(text.into())).await.is_err() {
                return;
            }
        }
        let mut reader = tokio::spawn(async move { while let Some(Ok(_)) = stream.next().await {} });
        loop {
            tokio::select! {
                _ = &mut reader => break,
                m = feed.recv() => match m {
                    Ok(text) => if sink.send(Message::Text(text.into())).await.is_err() { break },
                    Err(tokio::sync::broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(_) => break,
                },
            }
        }
    })
}

// Audio, tablet, clock.

/// Routes a synthetic audio packet. Host roles must present their token.
async fn audio(State(engine): AppState, headers: HeaderMap, Query(q): Query<TokenQuery>, Json(pkt): Json<AudioPacket>) -> Response {
    let (role, on_air) = engine.read(|s| {
        let role = bearer(&headers, q.token.as_deref()).and_then(|t| s.signaling().authenticate(&t).map(|(_, r)| r));
        (role, s.on_air())
    });
    if pkt.source_role != Role::Spectator && role != Some(pkt.source_role) {
        return (StatusCode::UNAUTHORIZED, Json(json!({ "ok": false, "error": "token does not hold the source role" }))).into_response();
    }
    let destinations = route_audio(pkt.source_role, on_air);
    Json(json!({ "ok": true, "destinations": destinations, "payload_len": pkt.payload.len() })).into_response()
}

async fn tablet(State(engine): AppState, headers: HeaderMap, Query(q): Query<TokenQuery>) -> Response {
    let token = bearer(&headers, q.token.as_deref()).unwrap_or_default();
    let out = engine.read(|s| match s.signaling().authenticate(&token) {
        Some((_, Role::VrHost | Role::CoHost)) => Some(serde_json::to_value(s.tablet()).expect("tablet serializes")),
        _ => None,
    });
    match out {
        Some(v) => Json(v).into_response(),
        None => (StatusCode::UNAUTHORIZED, "host session token required").into_response(),
    }
}

async fn clock(State(engine): AppState) -> Json<Value> {
    Json(json!({ "wall_ms": engine.wall_ms(), "clock_ms": engine.read(|s| s.clock_ms()) }))
}

async fn status(State(engine): AppState) -> Json<Value> {
    let snap = engine.window.snapshot();
    let v = engine.read(|s| {
        json!({
            "clock_ms": s.clock_ms(),
            "active_rig": s.active_rig(),
            "on_air": s.on_air(),
            "co_host": s.signaling().holder(Role::CoHost).map(|(id, c)| json!({ "client_id": id, "state": c.state })),
            "vr_host": s.signaling().holder(Role::VrHost).map(|(id, c)| json!({ "client_id": id, "state": c.state })),
            "chat_messages": s.chat().len(),
        })
    });
    let mut v = v;
    v["next_seq"] = snap.next_seq.into();
    v["rungs"] = json!(engine.window.rungs());
    v["dropped_segments"] = engine.dropped_segments().into();
    v["live_edge_offset"] = engine.config.live_edge_offset.into();
    v["segment_duration_ms"] = engine.config.segment_duration_ms.into();
    Json(v)
}

// Spectator fan-out.

fn fanout_error(e: FanoutError) -> Response {
    let status = match e {
        FanoutError::Gone(_) => StatusCode::GONE,
        _ => StatusCode::NOT_FOUND,
    };
    (status, e.to_string()).into_response()
}

async fn playlist(State(engine): AppState, Path(rung): Path<String>) -> Response {
    match engine.window.serve_playlist(&rung) {
        Ok(text) => ([(header::CONTENT_TYPE, "application/json"), (header::CACHE_CONTROL, "no-cache")], text).into_response(),
        Err(e) => fanout_error(e),
    }
}

async fn segment(State(engine): AppState, Path((rung, n)): Path<(String, String)>) -> Response {
    let Ok(seq) = n.parse::<u64>() else {
        return (StatusCode::NOT_FOUND, "bad segment number").into_response();
    };
    match engine.window.serve_segment(&rung, seq) {
        Ok(p) => (
            [
                (header::CONTENT_TYPE, "application/octet-stream".to_owned()),
                (header::CACHE_CONTROL, "public, max-age=31536000, immutable".to_owned()),
                (header::HeaderName::from_static("x-content-sha256"), hex(&p.content_hash)),
            ],
            Bytes::from_owner(p.bytes),
        )
            .into_response(),
        Err(e) => fanout_error(e),
    }
}

// Process lifecycle.

pub struct RunningServer {
    pub addr: SocketAddr,
    pub engine: Arc<Engine>,
    stop: Option<oneshot::Sender<()>>,
    http: JoinHandle<()>,
    threads: Vec<std::thread::JoinHandle<()>>,
}

/// Loads the scene and script, binds the listener and starts every loop.
pub async fn start(config: Config, metrics: Metrics) -> Result<RunningServer, StartError> {
    let scene = Scene::load(&config.scene_path).map_err(|e| StartError::Input(e.to_string()))?;
    let script = ScenarioScript::load(&config.scenario_path).map_err(|e| StartError::Input(e.to_string()))?;
    let listener = TcpListener::bind(&config.listen_address)
        .await
        .map_err(|source| StartError::Bind { addr: config.listen_address.clone(), source })?;
    let addr = listener.local_addr().map_err(|e| StartError::Io(e.to_string()))?;
    let log = match &config.session_log_path {
        Some(p) => Some(File::create(p).map_err(|e| StartError::Io(format!("cannot create session log {}: {e}", p.display())))?),
        None => None,
    };
    let session = Session::new(Arc::new(scene), Arc::new(script), config.session());
    let engine = Arc::new(Engine::new(config, session, log, metrics));
    engine.join_vr_host();

    let (frames_tx, frames_rx) = std::sync::mpsc::sync_channel(engine.config.tick_hz as usize * 2);
    let ticker = {
        let e = engine.clone();
        std::thread::Builder::new().name("ticker".into()).spawn(move || e.run_ticker(frames_tx)).expect("spawn ticker")
    };
    let segmenter = {
        let e = engine.clone();
        std::thread::Builder::new().name("segmenter".into()).spawn(move || e.run_segmenter(frames_rx)).expect("spawn segmenter")
    };

    let (stop, stopped) = oneshot::channel::<()>();
    let app = router(engine.clone());
    let http = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await;
    });
    Ok(RunningServer { addr, engine, stop: Some(stop), http, threads: vec![ticker, segmenter] })
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting, drains the loops and persists the chat ledger.
    pub async fn shutdown(mut self) -> Result<Option<PathBuf>, StartError> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.engine.stop();
        // Open sockets keep graceful shutdown waiting; give them a moment.
        let _ = tokio::time::timeout(std::time::Duration::from_secs(2), &mut self.http).await;
        self.http.abort();
        let threads = std::mem::take(&mut self.threads);
        tokio::task::spawn_blocking(move || {
            for t in threads {
                let _ = t.join();
            }
        })
        .await
        .expect("join loops");
        self.engine.flush_log();
        self.engine.metrics.flush();
        let Some(path) = self.engine.config.chat_log_path.clone() else { return Ok(None) };
        let text = self.engine.read(|s| s.chat().to_jsonl());
        std::fs::write(&path, text).map_err(|e| StartError::Io(format!("cannot write chat log {}: {e}", path.display())))?;
        Ok(Some(path))
    }
}
