#![allow(dead_code)]

use std::path::PathBuf;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use funnel::config::Config;
use funnel::metrics::Metrics;
use funnel::server::{self, RunningServer};
use serde_json::Value;
use streamfunnel::session::{Role, SignalMessage};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Defaults with absolute fixture paths and an ephemeral port.
pub fn test_config() -> Config {
    Config {
        scene_path: fixtures().join("escape_room.scene.json"),
        scenario_path: fixtures().join("task_a.scenario.jsonl"),
        listen_address: "127.0.0.1:0".into(),
        ..Config::default()
    }
}

pub async fn boot(config: Config) -> RunningServer {
    server::start(config, Metrics::disabled()).await.expect("server starts")
}

pub fn ws_url(server: &RunningServer, path: &str) -> String {
    format!("ws://{}{path}", server.addr)
}

pub async fn connect(url: &str) -> Ws {
    tokio_tungstenite::connect_async(url).await.expect("websocket connects").0
}

pub async fn send_signal(ws: &mut Ws, msg: &SignalMessage) {
    ws.send(Message::Text(serde_json::to_string(msg).unwrap().into())).await.unwrap();
}

/// Next text frame parsed as a signal message, or `None` on timeout.
pub async fn next_signal(ws: &mut Ws, within: Duration) -> Option<SignalMessage> {
    let deadline = Instant::now() + within;
    loop {
        let left = deadline.checked_duration_since(Instant::now())?;
        match tokio::time::timeout(left, ws.next()).await.ok()?? {
            Ok(Message::Text(t)) => return Some(serde_json::from_str(&t).expect("server sends valid signal messages")),
            Ok(_) => continue,
            Err(_) => return None,
        }
    }
}

/// Joins `/signal` as co-host and returns the socket and session token.
pub async fn join_cohost(server: &RunningServer, id: &str) -> (Ws, String) {
    let mut ws = connect(&ws_url(server, "/signal")).await;
    send_signal(&mut ws, &SignalMessage::Join { requested_role: Role::CoHost, client_id: id.into() }).await;
    loop {
        match next_signal(&mut ws, Duration::from_secs(5)).await.expect("role assignment arrives") {
            SignalMessage::RoleAssigned { role: Role::CoHost, session_token } => return (ws, session_token),
            SignalMessage::Rejected { reason } => panic!("co-host join rejected: {reason:?}"),
            _ => {}
        }
    }
}

pub async fn post(url: &str, body: &Value) -> (u16, Value) {
    let r = reqwest::Client::new().post(url).json(body).send().await.expect("request completes");
    let status = r.status().as_u16();
    (status, r.json().await.unwrap_or(Value::Null))
}

pub async fn get(url: &str) -> reqwest::Response {
    reqwest::get(url).await.expect("request completes")
}

pub async fn command(server: &RunningServer, token: &str, cmd: &str, params: Value) -> (u16, Value) {
    post(&format!("{}/api/command", server.url()), &serde_json::json!({ "token": token, "cmd": cmd, "params": params })).await
}

/// Polls `f` every 50 ms until it returns `Some` or `within` passes.
pub async fn eventually<T, F, Fut>(within: Duration, mut f: F) -> Option<T>
where
    F: FnMut() -> Fut,
    Fut: std::future::Future<Output = Option<T>>,
{
    let deadline = Instant::now() + within;
    while Instant::now() < deadline {
        if let Some(v) = f().await {
            return Some(v);
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    None
}
