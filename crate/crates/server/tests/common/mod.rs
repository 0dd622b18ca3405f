#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use hikester_server::{App, Config};
use reqwest::StatusCode;
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

pub fn test_config() -> Config {
    Config { heartbeat_ms: 200, ..Config::ephemeral() }
}

pub struct Server {
    pub app: Arc<App>,
    pub addr: SocketAddr,
    pub http: reqwest::Client,
}

impl Server {
    pub async fn start(config: Config) -> Server {
        let app = App::open(config).expect("app opens");
        let (addr, _) = hikester_server::spawn(app.clone()).await.expect("server binds");
        Server { app, addr, http: reqwest::Client::new() }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.http.get(self.url(path)).send().await.expect("request");
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn post(&self, path: &str, body: &Value) -> (StatusCode, Value) {
        let r = self.http.post(self.url(path)).json(body).send().await.expect("request");
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn user(&self, id: &str) {
        let (s, body) = self.post("/users", &json!({"id": id, "display_name": id})).await;
        assert_eq!(s, StatusCode::CREATED, "{body}");
    }

    /// Creates an event and returns its id.
    pub async fn event(&self, body: &Value) -> String {
        let (s, v) = self.post("/events", body).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_owned()
    }

    pub async fn idle(&self) {
        let app = self.app.clone();
        let ok = tokio::task::spawn_blocking(move || app.wait_idle(Duration::from_secs(20))).await.unwrap();
        assert!(ok, "background work did not drain");
    }

    pub async fn subscribe(&self, request: &Value) -> Ws {
        let (mut ws, _) =
            tokio_tungstenite::connect_async(format!("ws://{}/subscribe", self.addr)).await.expect("ws connects");
        ws.send(Message::Text(request.to_string().into())).await.unwrap();
        ws
    }
}

pub fn event_body(title: &str, tags: &[&str], hour: u8, lat: f64, lon: f64, creator: &str) -> Value {
    json!({
        "title": title,
        "description": "",
        "tags": tags,
        "start_date": "2026-07-04",
        "start_hour": hour,
        "location": {"lat": lat, "lon": lon},
        "creator": creator,
    })
}

/// Next JSON frame, or `None` on timeout or close.
pub async fn next_msg(ws: &mut Ws, timeout: Duration) -> Option<Value> {
    loop {
        match tokio::time::timeout(timeout, ws.next()).await {
            Ok(Some(Ok(Message::Text(t)))) => return Some(serde_json::from_str(&t).expect("json frame")),
            Ok(Some(Ok(Message::Close(_)))) | Ok(None) | Ok(Some(Err(_))) | Err(_) => return None,
            Ok(Some(Ok(_))) => continue,
        }
    }
}

/// Frames up to and including the first heartbeat.
pub async fn until_heartbeat(ws: &mut Ws) -> Vec<Value> {
    let mut out = Vec::new();
    while let Some(m) = next_msg(ws, Duration::from_secs(5)).await {
        let done = m["type"] == "heartbeat";
        out.push(m);
        if done {
            return out;
        }
    }
    panic!("no heartbeat; got {out:?}");
}
