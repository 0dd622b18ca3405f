//! Store triggers that keep derived state current.
//!
//! | trigger       | prefix                 | effect                                  |
//! |---------------|------------------------|-----------------------------------------|
//! | `indexes`     | `/events`              | geo and search index maintenance        |
//! | `moderation`  | `/events`              | spam check, then recommendations        |
//! | `recommender` | `/samples/recommender` | profile update and periodic re-cluster  |
//! | `optimizer`   | `/samples/optimizer`   | training set update and periodic retrain|
//!
//! Every handler is idempotent: notifications and tuples are keyed so that
//! a redelivered change writes nothing new.

use std::sync::{Arc, Weak};

use hikester_core::model::{EventStatus, NotificationKind};
use hikester_store::{ChangeEvent, ChangeKind, DocumentValue, Handler};

use crate::app::{at, path, App, SampleDoc, TupleDoc, EVENTS, OPT_SAMPLES, REC_SAMPLES};

fn handler(app: &Arc<App>, f: fn(&Arc<App>, &ChangeEvent) -> Result<(), String>) -> Handler {
    let weak: Weak<App> = Arc::downgrade(app);
    Arc::new(move |ev: &ChangeEvent| match weak.upgrade() {
        Some(app) => f(&app, ev),
        None => Ok(()),
    })
}

pub fn install(app: &Arc<App>) {
    let store = &app.store;
    store.register_trigger("indexes", &path(EVENTS), handler(app, on_event_change));
    store.register_trigger("moderation", &path(EVENTS), handler(app, on_event_created));
    store.register_trigger("recommender", &path(REC_SAMPLES), handler(app, on_sample));
    store.register_trigger("optimizer", &path(OPT_SAMPLES), handler(app, on_tuple));
}

/// Document id for a change at `/root/{id}/...`.
fn doc_id(ev: &ChangeEvent) -> Option<&str> {
    ev.path.segments().get(1).map(String::as_str)
}

/// True for the creation of a whole document `depth` segments deep.
fn is_doc_created(ev: &ChangeEvent, depth: usize) -> bool {
    ev.kind == ChangeKind::Created && ev.path.len() == depth
}

fn on_event_change(app: &Arc<App>, ev: &ChangeEvent) -> Result<(), String> {
    match doc_id(ev) {
        Some(id) => app.reindex_event(id),
        // the whole collection was replaced
        None => {
            let ids: Vec<String> = app.geo.read().points().into_iter().map(|(id, _)| id).collect();
            for id in ids {
                app.reindex_event(&id);
            }
            if let Some(m) = app.store.get(&path(EVENTS)).as_ref().and_then(DocumentValue::as_map) {
                for id in m.keys() {
                    app.reindex_event(id);
                }
            }
        }
    }
    Ok(())
}

/// Moderates a newly created event. Flagged events notify their creator;
/// the rest are matched against interest profiles.
pub fn on_event_created(app: &Arc<App>, ev: &ChangeEvent) -> Result<(), String> {
    if !is_doc_created(ev, 2) {
        return Ok(());
    }
    let id = doc_id(ev).expect("depth 2");
    let Some(doc) = app.event_doc(id).map_err(|e| e.message)? else {
        return Ok(());
    };
    let e = doc.record;
    if e.status != EventStatus::Active {
        return Ok(());
    }
    let m = app.moderator.moderate_event(&e);
    if m.verdict == EventStatus::FlaggedSpam {
        tracing::info!(event = %id, posterior = ?m.posterior, "event flagged as spam");
        let status = at(EVENTS, &[id, "status"]).map_err(|e| e.to_string())?;
        app.store
            .update(&status, |old| {
                (old.and_then(DocumentValue::as_str) == Some("active")).then(|| "flagged_spam".into())
            })
            .map_err(|e| e.to_string())?;
        app.notify(NotificationKind::SpamFlag, &e.creator, &e).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let users = app.recommender.lock().generate_recommendations(&e);
    for u in users {
        app.notify(NotificationKind::Recommendation, &u, &e).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn on_sample(app: &Arc<App>, ev: &ChangeEvent) -> Result<(), String> {
    if !is_doc_created(ev, 3) {
        return Ok(());
    }
    let Some(doc) = ev.value.as_ref().and_then(|v| v.decode::<SampleDoc>().ok()) else {
        return Err(format!("malformed sample at {}", ev.path));
    };
    let Some(sample) = doc.sample() else {
        return Err(format!("inconsistent sample at {}", ev.path));
    };
    let model = app.recommender.lock().record_interaction(sample, &doc.event_tags);
    if let Some(model) = model {
        let json = serde_json::to_string(&*model).map_err(|e| e.to_string())?;
        app.store_model("recommender", json).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn on_tuple(app: &Arc<App>, ev: &ChangeEvent) -> Result<(), String> {
    if !is_doc_created(ev, 3) {
        return Ok(());
    }
    let Some(doc) = ev.value.as_ref().and_then(|v| v.decode::<TupleDoc>().ok()) else {
        return Err(format!("malformed training tuple at {}", ev.path));
    };
    if let Some(ticket) = app.optimizer.insert_training_tuple(doc.tuple).map_err(|e| e.to_string())? {
        app.spawn_optimizer_retrain(ticket);
    }
    Ok(())
}
