mod common;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use common::{event_body, next_msg, until_heartbeat, Server};
use hikester_core::geo::haversine_km;
use hikester_core::model::NotificationKind;
use hikester_core::optimizer::TrainingTuple;
use hikester_core::GeoPoint;
use hikester_server::app::{at, TupleDoc, OPT_SAMPLES, REC_SAMPLES};
use hikester_server::Config;
use hikester_store::DocumentValue;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqwest::StatusCode;
use serde_json::{json, Value};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/spam_corpus.tsv")
}

/// Integral floats become ints so documents compare by value.
fn normalize(v: &Value) -> Value {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(f) if f.fract() == 0.0 && f.abs() < 1e15 => json!(f as i64),
            _ => v.clone(),
        },
        Value::Object(m) => Value::Object(m.iter().map(|(k, v)| (k.clone(), normalize(v))).collect()),
        Value::Array(a) => Value::Array(a.iter().map(normalize).collect()),
        _ => v.clone(),
    }
}

fn sample_count(s: &Server) -> usize {
    s.app.store.get(&at(REC_SAMPLES, &[]).unwrap()).and_then(|v| v.as_map().map(|m| m.len())).unwrap_or(0)
}

#[tokio::test(flavor = "multi_thread")]
async fn users_round_trip() {
    let s = Server::start(common::test_config()).await;
    let (st, created) = s.post("/users", &json!({"id": "ana", "display_name": "Ana"})).await;
    assert_eq!(st, StatusCode::CREATED);
    assert_eq!(created["id"], "ana");
    let (st, got) = s.get("/users/ana").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(got, json!({"id": "ana", "display_name": "Ana", "interest_weights": {}, "group_id": null}));

    let (st, err) = s.get("/users/nobody").await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");
    assert!(err["message"].as_str().unwrap().contains("nobody"));

    assert_eq!(s.post("/users", &json!({"id": "ana", "display_name": "Again"})).await.0, StatusCode::CONFLICT);
    assert_eq!(s.post("/users", &json!({"id": "a/b", "display_name": "x"})).await.0, StatusCode::BAD_REQUEST);
    let (st, gen) = s.post("/users", &json!({"display_name": "Generated"})).await;
    assert_eq!(st, StatusCode::CREATED);
    assert_eq!(gen["id"].as_str().unwrap().len(), 20);
}

#[tokio::test(flavor = "multi_thread")]
async fn event_creation_errors() {
    let s = Server::start(common::test_config()).await;
    s.user("ana").await;
    let (st, err) = s.post("/events", &event_body("Walk", &["hiking"], 9, 91.0, 0.0, "ana")).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "validation");
    assert!(err["message"].as_str().unwrap().contains("location.lat"));

    let (st, err) = s.post("/events", &event_body("Walk", &[], 24, 0.0, 0.0, "ana")).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let msg = err["message"].as_str().unwrap();
    assert!(msg.contains("tags") && msg.contains("start_hour"), "{msg}");

    let (st, err) = s.post("/events", &event_body("Walk", &["hiking"], 9, 0.0, 0.0, "ghost")).await;
    assert_eq!((st, err["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));

    let mut bad_day = event_body("Walk", &["hiking"], 9, 0.0, 0.0, "ana");
    bad_day["day_of_week"] = json!(0); // 2026-07-04 is a Saturday
    assert_eq!(s.post("/events", &bad_day).await.0, StatusCode::BAD_REQUEST);

    let (st, v) = s.post("/events", &event_body("Walk", &["Hiking "], 9, 10.0, 20.0, "ana")).await;
    assert_eq!(st, StatusCode::CREATED);
    assert!(v["rev"].as_u64().unwrap() > 0);
    assert!(v["created_wall"].as_str().unwrap().ends_with('Z'));
    let (_, e) = s.get(&format!("/events/{}", v["id"].as_str().unwrap())).await;
    assert_eq!(e["tags"], json!({"hiking": true}));
    assert_eq!(e["day_of_week"], 5);
    assert_eq!(e["participants"], json!({"ana": true}));
    assert_eq!(e["status"], "active");
    assert_eq!(s.get("/events/nope").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn created_event_reaches_tag_subscriber() {
    let s = Server::start(common::test_config()).await;
    s.user("ana").await;
    let mut ws = s.subscribe(&json!({"events": {"tags": ["football"]}})).await;
    let first = until_heartbeat(&mut ws).await;
    assert_eq!(first.len(), 1, "empty snapshot then heartbeat");
    s.event(&event_body("Chess", &["chess"], 9, 0.0, 0.0, "ana")).await;
    let id = s.event(&event_body("Kickabout", &["football"], 18, 0.0, 0.0, "ana")).await;
    let m = loop {
        let m = next_msg(&mut ws, Duration::from_secs(2)).await.expect("change arrives");
        if m["type"] == "change" {
            break m;
        }
    };
    assert_eq!(m["payload"]["kind"], "created");
    assert_eq!(m["payload"]["path"], format!("/events/{id}"));
    assert_eq!(m["payload"]["value"]["title"], "Kickabout");
}

#[tokio::test(flavor = "multi_thread")]
async fn spam_is_flagged_and_not_recommended() {
    let config = Config { spam_corpus: fixture(), ..common::test_config() };
    let s = Server::start(config).await;
    s.user("spammer").await;
    s.user("fan").await;
    // give the fan an interest in the spam event's tag
    let bait = s.event(&event_body("Sunrise ridge walk", &["deals"], 9, 0.0, 0.0, "spammer")).await;
    assert_eq!(s.post(&format!("/events/{bait}/join"), &json!({"user": "fan"})).await.0, StatusCode::OK);
    s.idle().await;

    let text = "Free pills! click the link now, 100% free money, buy now and win!";
    let posterior = s.app.moderator.current().unwrap().spam_posterior(text);
    assert!(posterior > 0.9, "{posterior}");
    let mut body = event_body(text, &["deals"], 9, 0.0, 0.0, "spammer");
    body["description"] = json!("act fast offer expires today");
    let id = s.event(&body).await;
    s.idle().await;

    let (_, e) = s.get(&format!("/events/{id}")).await;
    assert_eq!(e["status"], "flagged_spam");
    let (_, recs) = s.get("/recommendations/fan").await;
    assert!(recs["items"].as_array().unwrap().iter().all(|e| e["id"] != id.as_str()));
    let fan = s.app.notifications("fan").unwrap();
    assert!(fan.iter().all(|n| n.event_id != id));
    let spammer = s.app.notifications("spammer").unwrap();
    assert!(spammer.iter().any(|n| n.event_id == id && n.kind == NotificationKind::SpamFlag));

    let (st, _) = s.post(&format!("/events/{id}/join"), &json!({"user": "fan"})).await;
    assert_eq!(st, StatusCode::CONFLICT);
    // flagged events leave the indexes
    let (_, hits) = s.get("/search?q=pills").await;
    assert_eq!(hits["items"], json!([]));
}

#[tokio::test(flavor = "multi_thread")]
async fn join_and_leave() {
    let s = Server::start(common::test_config()).await;
    s.user("ana").await;
    s.user("ben").await;
    let id = s.event(&event_body("Run", &["running", "lake"], 7, 0.0, 0.0, "ana")).await;
    let join = format!("/events/{id}/join");
    let leave = format!("/events/{id}/leave");
    for _ in 0..2 {
        let (st, e) = s.post(&join, &json!({"user": "ben"})).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(e["participants"], json!({"ana": true, "ben": true}));
    }
    s.idle().await;
    // the repeated join is a no-op: one sample of weight 2 on each tag
    let (_, ben) = s.get("/users/ben").await;
    assert_eq!(ben["interest_weights"], json!({"lake": 2.0, "running": 2.0}));

    let (st, e) = s.post(&leave, &json!({"user": "ben"})).await;
    assert_eq!((st, &e["participants"]), (StatusCode::OK, &json!({"ana": true})));
    let (st, _) = s.post(&leave, &json!({"user": "ben"})).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(s.post(&leave, &json!({"user": "ana"})).await.0, StatusCode::CONFLICT);
    assert_eq!(s.post(&join, &json!({"user": "ghost"})).await.0, StatusCode::NOT_FOUND);
    assert_eq!(s.post("/events/missing/join", &json!({"user": "ben"})).await.0, StatusCode::NOT_FOUND);

    s.app.store.put(&at("/events", &[&id, "status"]).unwrap(), "cancelled".into()).unwrap();
    assert_eq!(s.post(&join, &json!({"user": "ben"})).await.0, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn views_and_searches_record_samples() {
    let s = Server::start(common::test_config()).await;
    let (st, empty) = s.get("/search?q=anything").await;
    assert_eq!((st, empty), (StatusCode::OK, json!({"items": [], "next_cursor": null})));

    s.user("ana").await;
    let id = s.event(&event_body("Lake run", &["running"], 7, 0.0, 0.0, "ana")).await;
    s.idle().await;
    let before = sample_count(&s);
    assert_eq!(s.get(&format!("/events/{id}?user=ana")).await.0, StatusCode::OK);
    assert_eq!(sample_count(&s), before + 1);
    assert_eq!(s.get(&format!("/events/{id}")).await.0, StatusCode::OK);
    assert_eq!(sample_count(&s), before + 1);

    let (_, hits) = s.get("/search?q=lake&tags=running&user=ana").await;
    assert_eq!(hits["items"][0]["event"]["id"], id.as_str());
    assert_eq!(sample_count(&s), before + 2);
    s.get("/search?q=lake&user=ana").await;
    assert_eq!(sample_count(&s), before + 2);

    assert_eq!(s.get("/search").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.get("/search?q=x&hour_min=9&hour_max=3").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.get("/search?q=x&limit=0").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.get("/search?q=x&date_from=yesterday").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn search_pages_and_filters() {
    let s = Server::start(common::test_config()).await;
    s.user("ana").await;
    for i in 0..7u8 {
        s.event(&event_body(&format!("trail number {i}"), &["hiking"], 6 + i, 0.0, 0.0, "ana")).await;
    }
    s.idle().await;
    let (_, p1) = s.get("/search?q=trail&limit=3").await;
    assert_eq!(p1["items"].as_array().unwrap().len(), 3);
    let cursor = p1["next_cursor"].as_str().unwrap();
    let (_, p2) = s.get(&format!("/search?q=trail&limit=3&cursor={cursor}")).await;
    let (_, p3) = s.get(&format!("/search?q=trail&limit=3&cursor={}", p2["next_cursor"].as_str().unwrap())).await;
    assert_eq!(p3["items"].as_array().unwrap().len(), 1);
    assert_eq!(p3["next_cursor"], Value::Null);

    let (_, morning) = s.get("/search?tags=hiking&hour_min=6&hour_max=8").await;
    let hours: Vec<u64> =
        morning["items"].as_array().unwrap().iter().map(|h| h["event"]["start_hour"].as_u64().unwrap()).collect();
    assert_eq!(hours.len(), 3);
    assert!(hours.iter().all(|h| (6..=8).contains(h)));
    let (_, dated) = s.get("/search?tags=hiking&date_from=2026-07-05").await;
    assert_eq!(dated["items"], json!([]));
}

#[tokio::test(flavor = "multi_thread")]
async fn nearby_matches_brute_force() {
    let s = Server::start(common::test_config()).await;
    s.user("ana").await;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut points = BTreeMap::new();
    for i in 0..80 {
        let (lat, lon) = (46.0 + rng.gen_range(-0.5..0.5), 7.5 + rng.gen_range(-0.5..0.5));
        let hour = rng.gen_range(0..24u8);
        let id = s.event(&event_body(&format!("e{i}"), &["hiking"], hour, lat, lon, "ana")).await;
        points.insert(id, (GeoPoint { lat, lon }, hour));
    }
    s.idle().await;
    for _ in 0..20 {
        let c = GeoPoint { lat: 46.0 + rng.gen_range(-0.5..0.5), lon: 7.5 + rng.gen_range(-0.5..0.5) };
        let r = rng.gen_range(1.0..30.0);
        let (st, page) =
            s.get(&format!("/events/nearby?lat={}&lon={}&radius_km={r}&hour_min=6&limit=1000", c.lat, c.lon)).await;
        assert_eq!(st, StatusCode::OK);
        let mut got: Vec<String> =
            page["items"].as_array().unwrap().iter().map(|h| h["event"]["id"].as_str().unwrap().to_owned()).collect();
        got.sort();
        let want: Vec<String> =
            points.iter().filter(|(_, (p, h))| haversine_km(c, *p) <= r && *h >= 6).map(|(id, _)| id.clone()).collect();
        assert_eq!(got, want);
    }
    assert_eq!(s.get("/events/nearby?lat=1&lon=2&radius_km=-1").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.get("/events/nearby?lat=1&lon=2").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.get("/events/nearby?lat=100&lon=2&radius_km=1").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn suggestions() {
    let s = Server::start(Config { optimizer_retrain_n: 20, ..common::test_config() }).await;
    assert_eq!(s.get("/suggest/time").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.get("/suggest/places?tags=football").await.0, StatusCode::BAD_REQUEST);
    let (_, t) = s.get("/suggest/time?tags=football").await;
    assert_eq!(t["items"].as_array().unwrap().len(), 24);
    let (_, d) = s.get("/suggest/date?tags=football").await;
    assert_eq!(d["items"].as_array().unwrap().len(), 7);

    for i in 0..40u32 {
        let hour = if i % 2 == 0 { 18 } else { (i % 24) as u8 };
        let attendance = if hour == 18 { 30 } else { 2 };
        let tuple = TrainingTuple {
            tags: ["football".to_string()].into(),
            hour,
            day_of_week: 2,
            geo_cell: if i % 3 == 0 { "u0m6b".into() } else { "u0m6c".into() },
            attendance,
        };
        let doc = TupleDoc { tuple, event_id: format!("ev{i}"), recorded_at: i as u64 };
        s.app.store.put(&at(OPT_SAMPLES, &[&format!("ev{i}")]).unwrap(), DocumentValue::encode(&doc).unwrap()).unwrap();
    }
    s.idle().await;
    assert_eq!(s.app.optimizer.retrain_count(), 2);
    let (_, t) = s.get("/suggest/time?tags=football").await;
    assert_eq!(t["items"][0]["value"], 18);
    let (_, p) = s.get("/suggest/places?tags=football&hour=18&day_of_week=2&k=1").await;
    let places = p["items"].as_array().unwrap();
    assert_eq!(places.len(), 1);
    assert_eq!(places[0]["geo_cell"], "u0m6c");
    // models were persisted
    assert!(s.app.store.get(&at("/system/models", &["optimizer_time"]).unwrap()).is_some());
}

#[tokio::test(flavor = "multi_thread")]
async fn recommendations_newest_first() {
    let s = Server::start(common::test_config()).await;
    s.user("ana").await;
    s.user("ben").await;
    let (_, none) = s.get("/recommendations/ben").await;
    assert_eq!(none["items"], json!([]));
    assert_eq!(s.get("/recommendations/ghost").await.0, StatusCode::NOT_FOUND);

    let seed = s.event(&event_body("Match", &["football"], 18, 0.0, 0.0, "ana")).await;
    s.post(&format!("/events/{seed}/join"), &json!({"user": "ben"})).await;
    s.idle().await;
    let a = s.event(&event_body("Derby", &["football"], 18, 0.0, 0.0, "ana")).await;
    s.idle().await;
    let b = s.event(&event_body("Cup final", &["football", "cup"], 18, 0.0, 0.0, "ana")).await;
    s.idle().await;
    s.event(&event_body("Chess night", &["chess"], 20, 0.0, 0.0, "ana")).await;
    s.idle().await;
    let (_, recs) = s.get("/recommendations/ben").await;
    let ids: Vec<&str> = recs["items"].as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap()).collect();
    assert_eq!(ids, [b.as_str(), a.as_str()]);
    let (_, ana) = s.get("/recommendations/ana").await;
    assert_eq!(ana["items"], json!([]), "creators are not recommended their own events");
}

#[tokio::test(flavor = "multi_thread")]
async fn heartbeats_on_idle_stream() {
    let s = Server::start(common::test_config()).await;
    let mut ws = s.subscribe(&json!({"events": {}})).await;
    let first = until_heartbeat(&mut ws).await;
    assert_eq!(first, [json!({"type": "heartbeat", "payload": {"rev": 0}})]);
    let next = next_msg(&mut ws, Duration::from_secs(2)).await.unwrap();
    assert_eq!(next["type"], "heartbeat");
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_subscription_gets_one_error() {
    let s = Server::start(common::test_config()).await;
    for bad in [json!({"events": {}, "geo": {}}), json!({"weather": {}}), json!({"notifications": {"user": "ghost"}})] {
        let mut ws = s.subscribe(&bad).await;
        let m = next_msg(&mut ws, Duration::from_secs(2)).await.unwrap();
        assert_eq!(m["type"], "error");
        assert!(m["payload"]["message"].is_string());
        assert_eq!(next_msg(&mut ws, Duration::from_secs(2)).await, None);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn geo_subscription_follows_relocation() {
    let s = Server::start(common::test_config()).await;
    s.user("ana").await;
    let inside = s.event(&event_body("Near", &["hiking"], 9, 46.0, 7.0, "ana")).await;
    s.idle().await;
    let mut ws = s.subscribe(&json!({"geo": {"lat": 46.0, "lon": 7.0, "radius_km": 5.0}})).await;
    let first = until_heartbeat(&mut ws).await;
    assert_eq!(first.len(), 2);
    assert_eq!(first[0]["payload"]["kind"], "entered");
    assert_eq!(first[0]["payload"]["event_id"], inside.as_str());

    let far = s.event(&event_body("Far", &["hiking"], 9, 47.0, 7.0, "ana")).await;
    let near = s.event(&event_body("Also near", &["hiking"], 9, 46.01, 7.0, "ana")).await;
    let m = loop {
        let m = next_msg(&mut ws, Duration::from_secs(2)).await.unwrap();
        if m["type"] == "geo" {
            break m;
        }
    };
    assert_eq!(
        (m["payload"]["kind"].as_str(), m["payload"]["event_id"].as_str()),
        (Some("entered"), Some(near.as_str()))
    );

    let loc = at("/events", &[&inside, "location"]).unwrap();
    s.app.store.put(&loc, DocumentValue::from_json(json!({"lat": 48.0, "lon": 7.0})).unwrap()).unwrap();
    let m = loop {
        let m = next_msg(&mut ws, Duration::from_secs(2)).await.unwrap();
        if m["type"] == "geo" {
            break m;
        }
    };
    assert_eq!(
        (m["payload"]["kind"].as_str(), m["payload"]["event_id"].as_str()),
        (Some("exited"), Some(inside.as_str()))
    );
    assert_ne!(far, near);
}

#[tokio::test(flavor = "multi_thread")]
async fn disconnect_unsubscribes() {
    let s = Server::start(common::test_config()).await;
    let mut ws = s.subscribe(&json!({"events": {}})).await;
    until_heartbeat(&mut ws).await;
    assert_eq!(s.app.store.subscriber_count(), 1);
    ws.close(None).await.unwrap();
    drop(ws);
    for _ in 0..100 {
        if s.app.store.subscriber_count() == 0 {
            return;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("subscription still open");
}

#[tokio::test(flavor = "multi_thread")]
async fn notification_feed_streams() {
    let s = Server::start(common::test_config()).await;
    s.user("ana").await;
    s.user("ben").await;
    let seed = s.event(&event_body("Match", &["football"], 18, 0.0, 0.0, "ana")).await;
    s.post(&format!("/events/{seed}/join"), &json!({"user": "ben"})).await;
    s.idle().await;
    let mut ws = s.subscribe(&json!({"notifications": {"user": "ben"}})).await;
    until_heartbeat(&mut ws).await;
    let id = s.event(&event_body("Derby", &["football"], 18, 0.0, 0.0, "ana")).await;
    let m = next_msg(&mut ws, Duration::from_secs(2)).await.unwrap();
    assert_eq!(m["type"], "change");
    assert_eq!(m["payload"]["value"]["event_id"], id.as_str());
    assert_eq!(m["payload"]["value"]["kind"], "recommendation");
}

/// Randomized workload: what an unfiltered subscriber reconstructs equals
/// what GET returns for every event.
#[tokio::test(flavor = "multi_thread")]
async fn every_mutation_is_observable() {
    let s = Server::start(common::test_config()).await;
    let users = ["u0", "u1", "u2", "u3"];
    for u in users {
        s.user(u).await;
    }
    let mut ws = s.subscribe(&json!({"events": {}})).await;
    until_heartbeat(&mut ws).await;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ids: Vec<String> = Vec::new();
    for i in 0..60 {
        let u = users[rng.gen_range(0..users.len())];
        if ids.is_empty() || rng.gen_bool(0.3) {
            ids.push(s.event(&event_body(&format!("ev {i}"), &["hiking"], 9, 0.0, 0.0, u)).await);
        } else {
            let id = &ids[rng.gen_range(0..ids.len())];
            let op = if rng.gen_bool(0.6) { "join" } else { "leave" };
            s.post(&format!("/events/{id}/{op}"), &json!({"user": u})).await;
        }
    }
    s.idle().await;
    // the newest write may sit outside /events, so read up to a sentinel
    let (_, sentinel) = s.post("/events", &event_body("sentinel", &["hiking"], 9, 0.0, 0.0, "u0")).await;
    ids.push(sentinel["id"].as_str().unwrap().to_owned());
    let last = sentinel["rev"].as_u64().unwrap();
    let mut view: BTreeMap<String, Value> = BTreeMap::new();
    let mut seen = 0;
    while seen < last {
        let Some(m) = next_msg(&mut ws, Duration::from_secs(2)).await else { break };
        if m["type"] != "change" {
            continue;
        }
        let p = &m["payload"];
        seen = p["rev"].as_u64().unwrap();
        let id = p["path"].as_str().unwrap().rsplit('/').next().unwrap().to_owned();
        match p["kind"].as_str().unwrap() {
            "deleted" => {
                view.remove(&id);
            }
            _ => {
                view.insert(id, p["value"].clone());
            }
        }
    }
    assert_eq!(view.len(), ids.len());
    for id in &ids {
        let (_, got) = s.get(&format!("/events/{id}")).await;
        assert_eq!(normalize(&view[id]), normalize(&got), "{id}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn sweep_records_finished_events_once() {
    let s = Server::start(common::test_config()).await;
    s.user("ana").await;
    s.user("ben").await;
    let id = s.event(&event_body("Past", &["hiking"], 9, 46.0, 7.0, "ana")).await;
    s.post(&format!("/events/{id}/join"), &json!({"user": "ben"})).await;
    s.idle().await;
    let before = chrono::NaiveDate::from_ymd_opt(2026, 7, 4).unwrap().and_hms_opt(8, 59, 0).unwrap();
    assert_eq!(s.app.sweep_completed(before).unwrap(), 0);
    let after = before + chrono::Duration::minutes(1);
    assert_eq!(s.app.sweep_completed(after).unwrap(), 1);
    assert_eq!(s.app.sweep_completed(after).unwrap(), 0);
    s.idle().await;
    let tuples = s.app.optimizer.tuples();
    assert_eq!(tuples.len(), 1);
    assert_eq!((tuples[0].attendance, tuples[0].hour, tuples[0].day_of_week), (2, 9, 5));
}

#[test]
fn restart_restores_models_and_indexes() {
    let dir = tempfile::tempdir().unwrap();
    let config = Config { data_dir: dir.path().into(), spam_corpus: fixture(), ..common::test_config() };
    let rt = tokio::runtime::Runtime::new().unwrap();
    let (id, model) = rt.block_on(async {
        let s = Server::start(config.clone()).await;
        s.user("ana").await;
        let id = s.event(&event_body("Lake loop", &["hiking"], 9, 46.0, 7.0, "ana")).await;
        s.idle().await;
        (id, s.app.moderator.current().unwrap().to_json())
    });
    drop(rt);
    // no corpus this time: the model must come from the store
    let app = hikester_server::App::open(Config { spam_corpus: PathBuf::new(), ..config }).unwrap();
    assert!(app.rebuild_stats.spam_model_restored);
    assert_eq!(app.moderator.current().unwrap().to_json(), model);
    assert_eq!(app.geo.read().points(), vec![(id.clone(), GeoPoint { lat: 46.0, lon: 7.0 })]);
    assert!(app.search.read().contains(&id));
}
