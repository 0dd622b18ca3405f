//! `GET /subscribe`: live queries over a websocket.
//!
//! The client's first text frame picks exactly one subscription:
//!
//! ```json
//! {"events": {"tags": ["hiking"], "hour_min": 6, "hour_max": 12}}
//! {"geo": {"lat": 46.5, "lon": 7.9, "radius_km": 20, "tags": [], "hour_min": null, "hour_max": null}}
//! {"notifications": {"user": "alice"}}
//! ```
//!
//! Server frames are `{"type": "snapshot" | "change" | "geo" | "heartbeat" | "error", "payload": ...}`.
//! Store-backed subscriptions start with one `snapshot` per matching
//! document, then a `heartbeat` carrying the revision the snapshot reflects;
//! after that every change arrives in revision order. Geo subscriptions
//! start with `entered` deltas for the current matches, then the heartbeat.
//! Heartbeats repeat every `heartbeat_ms`.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use hikester_core::model::normalize_tags;
use hikester_core::GeoQueryEvent;
use hikester_store::{Delivery, Filter};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver};

use crate::app::{at, path, App, EVENTS, NOTIFICATIONS};
use crate::error::ApiError;
use crate::routes::geo_query;

/// How long a client may take to send its subscription request.
pub const REQUEST_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SubscribeRequest {
    Events(EventsRequest),
    Geo(GeoRequest),
    Notifications(NotificationsRequest),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventsRequest {
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub hour_min: Option<u8>,
    #[serde(default)]
    pub hour_max: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoRequest {
    pub lat: f64,
    pub lon: f64,
    pub radius_km: f64,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub hour_min: Option<u8>,
    #[serde(default)]
    pub hour_max: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotificationsRequest {
    pub user: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Snapshot,
    Change,
    Geo,
    Heartbeat,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub payload: serde_json::Value,
}

impl ServerMessage {
    fn new(kind: MessageType, payload: impl Serialize) -> Self {
        ServerMessage { kind, payload: serde_json::to_value(payload).expect("payload serializes") }
    }

    fn heartbeat(rev: u64) -> Self {
        Self::new(MessageType::Heartbeat, serde_json::json!({ "rev": rev }))
    }

    fn error(e: &ApiError) -> Self {
        Self::new(MessageType::Error, serde_json::json!({ "code": e.code, "message": e.message }))
    }
}

/// The store filter for an events request; only active events are
/// delivered.
pub fn events_filter(r: &EventsRequest) -> Result<Filter, ApiError> {
    let mut f = Filter::eq("status", "active");
    for tag in normalize_tags(&r.tags) {
        f = f.and(Filter::contains("tags", &tag));
    }
    if r.hour_min.is_some() || r.hour_max.is_some() {
        let (lo, hi) = (r.hour_min.unwrap_or(0), r.hour_max.unwrap_or(23));
        if lo > hi || hi > 23 {
            return Err(ApiError::bad_request("hour range must satisfy 0 <= hour_min <= hour_max <= 23"));
        }
        f = f.and(Filter::range("start_hour", Some(lo as f64), Some(hi as f64)));
    }
    Ok(f)
}

enum Source {
    Store(UnboundedReceiver<Delivery>, u64),
    Geo(UnboundedReceiver<GeoQueryEvent>, u64),
}

impl Source {
    fn close(self, app: &App) {
        match self {
            Source::Store(_, id) => {
                app.store.unsubscribe(id);
            }
            Source::Geo(_, id) => {
                app.geo.write().unsubscribe(id);
            }
        }
    }
}

fn open(app: &App, req: SubscribeRequest) -> Result<(Source, Vec<ServerMessage>), ApiError> {
    match req {
        SubscribeRequest::Events(r) => {
            let (tx, rx) = unbounded_channel();
            let id = app.store.subscribe(&path(EVENTS), Some(events_filter(&r)?), tx);
            Ok((Source::Store(rx, id), Vec::new()))
        }
        SubscribeRequest::Notifications(r) => {
            if !app.user_exists(&r.user) {
                return Err(ApiError::not_found(format!("user {:?}", r.user)));
            }
            let (tx, rx) = unbounded_channel();
            let id = app.store.subscribe(&at(NOTIFICATIONS, &[&r.user])?, None, tx);
            Ok((Source::Store(rx, id), Vec::new()))
        }
        SubscribeRequest::Geo(r) => {
            let hours = match (r.hour_min, r.hour_max) {
                (None, None) => None,
                (lo, hi) => Some((lo.unwrap_or(0), hi.unwrap_or(23))),
            };
            if hours.is_some_and(|(lo, hi)| lo > hi || hi > 23) {
                return Err(ApiError::bad_request("hour range must satisfy 0 <= hour_min <= hour_max <= 23"));
            }
            let q = geo_query(r.lat, r.lon, r.radius_km, normalize_tags(&r.tags), hours)?;
            let (tx, mut rx) = unbounded_channel();
            // the revision is read under the index lock so that it covers
            // exactly the initial matches
            let mut geo = app.geo.write();
            let rev = app.store.revision();
            let id = geo
                .subscribe(q, Box::new(move |ev| tx.send(ev).is_ok()))
                .map_err(|e| ApiError::bad_request(e.to_string()))?
                .ok_or_else(|| ApiError::internal("geo subscription closed immediately"))?;
            drop(geo);
            let mut initial = Vec::new();
            while let Ok(ev) = rx.try_recv() {
                initial.push(ServerMessage::new(MessageType::Geo, ev));
            }
            initial.push(ServerMessage::heartbeat(rev));
            Ok((Source::Geo(rx, id), initial))
        }
    }
}

pub async fn subscribe(State(app): State<Arc<App>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| run(app, socket))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    let text = serde_json::to_string(msg).expect("message serializes");
    socket.send(Message::Text(text.into())).await.is_ok()
}

async fn reject(mut socket: WebSocket, e: ApiError) {
    let _ = send(&mut socket, &ServerMessage::error(&e)).await;
    let _ = socket.send(Message::Close(None)).await;
}

async fn read_request(socket: &mut WebSocket) -> Result<SubscribeRequest, ApiError> {
    loop {
        let msg = tokio::time::timeout(REQUEST_TIMEOUT, socket.recv())
            .await
            .map_err(|_| ApiError::bad_request("no subscription request received"))?;
        match msg {
            Some(Ok(Message::Text(t))) => {
                return serde_json::from_str(&t).map_err(|e| ApiError::bad_request(format!("bad subscription: {e}")))
            }
            Some(Ok(Message::Ping(_) | Message::Pong(_))) => continue,
            Some(Ok(_)) => return Err(ApiError::bad_request("expected a text frame")),
            Some(Err(_)) | None => return Err(ApiError::bad_request("connection closed")),
        }
    }
}

async fn run(app: Arc<App>, mut socket: WebSocket) {
    let req = match read_request(&mut socket).await {
        Ok(r) => r,
        Err(e) => return reject(socket, e).await,
    };
    let (mut source, initial) = match open(&app, req) {
        Ok(s) => s,
        Err(e) => return reject(socket, e).await,
    };
    let mut ok = true;
    for m in &initial {
        ok &= send(&mut socket, m).await;
    }
    let period = Duration::from_millis(app.config.heartbeat_ms.max(1));
    let mut ticker = tokio::time::interval_at(tokio::time::Instant::now() + period, period);
    while ok {
        let out = tokio::select! {
            d = async {
                match &mut source {
                    Source::Store(rx, _) => rx.recv().await.map(|d| match d {
                        Delivery::Snapshot(c) => ServerMessage::new(MessageType::Snapshot, c),
                        Delivery::SnapshotEnd { rev } => ServerMessage::heartbeat(rev),
                        Delivery::Change(c) => ServerMessage::new(MessageType::Change, c),
                    }),
                    Source::Geo(rx, _) => rx.recv().await.map(|g| ServerMessage::new(MessageType::Geo, g)),
                }
            } => match d {
                Some(m) => m,
                None => break,
            },
            _ = ticker.tick() => ServerMessage::heartbeat(app.store.revision()),
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => continue,
            },
        };
        ok = send(&mut socket, &out).await;
    }
    source.close(&app);
}
