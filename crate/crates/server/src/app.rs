//! Service state and the operations behind the HTTP handlers.
//!
//! The store is the source of truth. The geo and search indexes, the
//! recommender and the optimizer are derived state, kept current by the
//! triggers in [`crate::pipeline`] and rebuilt from the store on startup.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveDateTime, Utc};
use hikester_core::geo::GeoEntry;
use hikester_core::model::{
    day_of_week, generate_id, is_valid_key, normalize_tags, set_as_map, validate_event, Action, EventDraft,
    EventStatus, NotificationKind, Verdict,
};
use hikester_core::optimizer::{OptimizerConfig, TrainedModels, TrainingTuple};
use hikester_core::recommend::RecommenderConfig;
use hikester_core::spam::{parse_corpus, ActiveClassifier, Moderator};
use hikester_core::{
    EventRecord, GeoIndex, GeoPoint, InteractionSample, InvertedIndex, Notification, ParamOptimizer, Recommender,
    UserProfile,
};
use hikester_store::{DocumentPath, DocumentValue, Store, StoreConfig, StoreError};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::ApiError;

pub const USERS: &str = "/users";
pub const EVENTS: &str = "/events";
pub const NOTIFICATIONS: &str = "/notifications";
pub const REC_SAMPLES: &str = "/samples/recommender";
pub const OPT_SAMPLES: &str = "/samples/optimizer";
pub const MODELS: &str = "/system/models";

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("spam corpus {path}: {message}")]
    Corpus { path: String, message: String },
}

/// Static path built from trusted segments.
pub fn path(s: &str) -> DocumentPath {
    DocumentPath::parse(s).unwrap_or_else(|e| panic!("bad static path {s}: {e}"))
}

/// `root` extended by `segments`, each checked.
pub fn at(root: &str, segments: &[&str]) -> Result<DocumentPath, StoreError> {
    let mut p = path(root);
    for s in segments {
        p = p.child(s)?;
    }
    Ok(p)
}

/// `root/key` where `key` came from a client; an unusable key is reported
/// as a missing resource.
fn child(root: &str, key: &str, what: &str) -> Result<DocumentPath, ApiError> {
    if !is_valid_key(key) {
        return Err(ApiError::not_found(format!("{what} {key:?}")));
    }
    Ok(at(root, &[key])?)
}

/// User document as stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDoc {
    pub id: String,
    pub display_name: String,
    pub created_at: u64,
    pub created_wall: String,
}

/// Event document as stored: the record plus its wall-clock creation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDoc {
    #[serde(flatten)]
    pub record: EventRecord,
    #[serde(default)]
    pub created_wall: String,
}

/// Interaction sample as stored, with the event's tags at the time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDoc {
    pub user_id: String,
    pub event_id: String,
    pub action: Action,
    #[serde(with = "set_as_map", default)]
    pub filter_tags: BTreeSet<String>,
    #[serde(with = "set_as_map", default)]
    pub event_tags: BTreeSet<String>,
    pub at: u64,
}

impl SampleDoc {
    pub fn sample(&self) -> Option<InteractionSample> {
        InteractionSample::new(&*self.user_id, &*self.event_id, self.action, self.filter_tags.clone(), self.at).ok()
    }
}

/// Optimizer training tuple as stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleDoc {
    #[serde(flatten)]
    pub tuple: TrainingTuple,
    pub event_id: String,
    pub recorded_at: u64,
}

/// A model persisted as an opaque JSON string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub json: String,
    pub trained_at: u64,
}

/// Body of `POST /events`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewEvent {
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(with = "set_as_map", default)]
    pub tags: BTreeSet<String>,
    pub start_date: NaiveDate,
    pub start_hour: u8,
    /// Derived from `start_date` when omitted.
    #[serde(default)]
    pub day_of_week: Option<u8>,
    pub location: GeoPoint,
    pub creator: String,
}

/// Body of `POST /users`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewUser {
    #[serde(default)]
    pub id: Option<String>,
    pub display_name: String,
}

/// Derived state recomputed from a store tree.
pub struct Rebuilt {
    pub geo: GeoIndex,
    pub search: InvertedIndex,
    pub recommender: Recommender,
    pub optimizer: ParamOptimizer,
    pub classifier: Option<ActiveClassifier>,
    pub stats: RebuildStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RebuildStats {
    pub users: usize,
    pub events: usize,
    pub active_events: usize,
    pub recommender_samples: usize,
    pub recommender_retrains: usize,
    pub optimizer_tuples: usize,
    pub optimizer_models_restored: bool,
    pub spam_model_restored: bool,
    pub skipped_documents: usize,
}

fn children(tree: &DocumentValue, root: &str) -> Vec<(String, DocumentValue)> {
    tree.get_path(path(root).segments())
        .and_then(DocumentValue::as_map)
        .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
        .unwrap_or_default()
}

pub fn recommender_config(c: &Config) -> RecommenderConfig<f64> {
    RecommenderConfig {
        theta: c.theta,
        retrain_threshold: c.recommender_retrain_n,
        groups: c.kmeans_k,
        ..RecommenderConfig::default()
    }
}

pub fn optimizer_config(c: &Config) -> OptimizerConfig<f64> {
    OptimizerConfig {
        retrain_threshold: c.optimizer_retrain_n,
        place_precision: c.geohash_precision,
        ..OptimizerConfig::default()
    }
}

fn geo_entry(e: &EventRecord) -> GeoEntry {
    GeoEntry { point: e.location, tags: e.tags.clone(), start_hour: Some(e.start_hour) }
}

fn load_optimizer_models(tree: &DocumentValue) -> Option<TrainedModels<f64>> {
    let read = |name: &str| {
        tree.get_path(at(MODELS, &[name]).ok()?.segments())
            .and_then(|v| v.decode::<ModelDoc>().ok())
            .and_then(|d| serde_json::from_str(&d.json).ok())
    };
    let models = TrainedModels { time: read("optimizer_time"), date: read("optimizer_date") };
    (models.time.is_some() || models.date.is_some()).then_some(models)
}

/// Recomputes every derived structure from a store tree. Shared by startup
/// and the `replay` command.
pub fn rebuild(tree: &DocumentValue, config: &Config) -> Rebuilt {
    let mut stats = RebuildStats::default();
    let mut geo = GeoIndex::new();
    let mut search = InvertedIndex::new();
    let mut recommender = Recommender::new(recommender_config(config));
    let optimizer = ParamOptimizer::new(optimizer_config(config));

    for (id, _) in children(tree, USERS) {
        recommender.ensure_user(&id);
        stats.users += 1;
    }
    for (id, doc) in children(tree, EVENTS) {
        let Ok(EventDoc { record, .. }) = doc.decode::<EventDoc>() else {
            tracing::warn!(%id, "skipping undecodable event");
            stats.skipped_documents += 1;
            continue;
        };
        stats.events += 1;
        if record.status == EventStatus::Active {
            stats.active_events += 1;
            if geo.put_entry(&record.id, geo_entry(&record)).is_err() {
                stats.skipped_documents += 1;
            }
            search.index_event(&record);
        }
    }

    let mut samples: Vec<(u64, String, SampleDoc)> = children(tree, REC_SAMPLES)
        .into_iter()
        .filter_map(|(k, v)| v.decode::<SampleDoc>().ok().map(|d| (d.at, k, d)))
        .collect();
    samples.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    for (_, _, doc) in samples {
        match doc.sample() {
            Some(s) => {
                recommender.record_interaction(s, &doc.event_tags);
                stats.recommender_samples += 1;
            }
            None => stats.skipped_documents += 1,
        }
    }
    stats.recommender_retrains = recommender.retrain_count();

    let mut tuples: Vec<(u64, String, TupleDoc)> = children(tree, OPT_SAMPLES)
        .into_iter()
        .filter_map(|(k, v)| v.decode::<TupleDoc>().ok().map(|d| (d.recorded_at, k, d)))
        .collect();
    tuples.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    let mut last_ticket = None;
    for (_, _, doc) in tuples {
        match optimizer.insert_training_tuple(doc.tuple) {
            Ok(t) => {
                stats.optimizer_tuples += 1;
                last_ticket = t.or(last_ticket);
            }
            Err(_) => stats.skipped_documents += 1,
        }
    }
    match load_optimizer_models(tree) {
        Some(m) => {
            optimizer.install(m);
            stats.optimizer_models_restored = true;
        }
        None => {
            if let Some(t) = last_ticket {
                optimizer.retrain(t);
            }
        }
    }

    let classifier = tree
        .get_path(at(MODELS, &["spam"]).expect("static path").segments())
        .and_then(|v| v.decode::<ModelDoc>().ok())
        .and_then(|d| ActiveClassifier::from_json(&d.json).ok());
    stats.spam_model_restored = classifier.is_some();

    Rebuilt { geo, search, recommender, optimizer, classifier, stats }
}

pub fn read_corpus(path: &Path) -> Result<Vec<(hikester_core::spam::Label, String)>, AppError> {
    let err = |message: String| AppError::Corpus { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    parse_corpus(&text).map_err(|e| err(e.to_string()))
}

pub struct App {
    pub config: Config,
    pub store: Arc<Store>,
    pub geo: RwLock<GeoIndex>,
    pub search: RwLock<InvertedIndex>,
    pub moderator: Moderator,
    pub recommender: Mutex<Recommender>,
    pub optimizer: ParamOptimizer,
    /// Serializes optimizer retrains so an older snapshot never replaces a
    /// newer model.
    retrain_lock: Mutex<usize>,
    retrains_running: AtomicUsize,
    pub rebuild_stats: RebuildStats,
}

impl std::fmt::Debug for App {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("App").field("store", &self.store).finish_non_exhaustive()
    }
}

pub fn now_wall() -> String {
    Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl App {
    /// Opens (or recovers) the store, rebuilds derived state and installs
    /// the triggers.
    pub fn open(config: Config) -> Result<Arc<App>, AppError> {
        let store = Arc::new(Store::open(StoreConfig {
            dir: config.data_dir().map(Into::into),
            snapshot_every: config.snapshot_every,
            sync: config.fsync,
            trigger_retries: config.trigger_retries,
            ..StoreConfig::default()
        })?);
        let rebuilt = rebuild(&store.export(), &config);
        let moderator = Moderator::new(config.classifier_threshold);
        let app = Arc::new(App {
            store,
            geo: RwLock::new(rebuilt.geo),
            search: RwLock::new(rebuilt.search),
            moderator,
            recommender: Mutex::new(rebuilt.recommender),
            optimizer: rebuilt.optimizer,
            retrain_lock: Mutex::new(0),
            retrains_running: AtomicUsize::new(0),
            rebuild_stats: rebuilt.stats,
            config,
        });
        match rebuilt.classifier {
            Some(c) => {
                app.moderator.swap(c);
            }
            None => {
                if let Some(corpus) = app.config.spam_corpus() {
                    app.train_spam_model(corpus)?;
                }
            }
        }
        crate::pipeline::install(&app);
        Ok(app)
    }

    /// Trains a Naive Bayes model on a corpus file, activates it and
    /// persists it.
    pub fn train_spam_model(&self, corpus: &Path) -> Result<(), AppError> {
        let examples = read_corpus(corpus)?;
        let model = ActiveClassifier::naive_bayes(&examples, self.config.nb_alpha)
            .map_err(|e| AppError::Corpus { path: corpus.display().to_string(), message: e.to_string() })?;
        let json = model.to_json();
        self.moderator.swap(model);
        self.store_model("spam", json)?;
        tracing::info!(examples = examples.len(), "spam model trained");
        Ok(())
    }

    pub fn store_model(&self, name: &str, json: String) -> Result<u64, StoreError> {
        let p = at(MODELS, &[name])?;
        self.store.put_with(&p, |rev| DocumentValue::encode(&ModelDoc { json, trained_at: rev }).expect("model doc"))
    }

    pub fn persist_optimizer_models(&self, models: &TrainedModels<f64>) -> Result<(), StoreError> {
        if let Some(m) = &models.time {
            self.store_model("optimizer_time", serde_json::to_string(m).expect("model serializes"))?;
        }
        if let Some(m) = &models.date {
            self.store_model("optimizer_date", serde_json::to_string(m).expect("model serializes"))?;
        }
        Ok(())
    }

    /// Retrains on a background thread; snapshots smaller than the last
    /// trained one are dropped.
    pub fn spawn_optimizer_retrain(self: &Arc<Self>, ticket: hikester_core::optimizer::RetrainTicket) {
        self.retrains_running.fetch_add(1, Ordering::SeqCst);
        let app = self.clone();
        std::thread::spawn(move || {
            {
                let mut last = app.retrain_lock.lock();
                if ticket.tuples.len() > *last {
                    *last = ticket.tuples.len();
                    let models = app.optimizer.retrain(ticket);
                    if let Err(e) = app.persist_optimizer_models(&models) {
                        tracing::error!(error = %e, "persisting optimizer models");
                    }
                }
            }
            app.retrains_running.fetch_sub(1, Ordering::SeqCst);
        });
    }

    /// Waits for trigger queues and background retrains to drain.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if !self.store.wait_for_triggers(left) {
                return false;
            }
            if self.retrains_running.load(Ordering::SeqCst) == 0 {
                // a retrain may have queued more trigger work
                if self.store.wait_for_triggers(left) {
                    return true;
                }
            }
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(2));
        }
    }

    // users

    pub fn create_user(&self, req: NewUser) -> Result<UserDoc, ApiError> {
        let name = req.display_name.trim();
        if name.is_empty() {
            return Err(ApiError::validation("display_name empty"));
        }
        let id = match req.id {
            Some(id) if is_valid_key(&id) => id,
            Some(id) => return Err(ApiError::validation(format!("invalid user id {id:?}"))),
            None => generate_id(),
        };
        let mut doc = None;
        let wall = now_wall();
        let written = self.store.put_if_absent_with(&at(USERS, &[&id])?, |rev| {
            let d = UserDoc { id: id.clone(), display_name: name.to_owned(), created_at: rev, created_wall: wall };
            let v = DocumentValue::encode(&d).expect("user doc");
            doc = Some(d);
            v
        })?;
        if written.is_none() {
            return Err(ApiError::conflict(format!("user {id:?} already exists")));
        }
        self.recommender.lock().ensure_user(&id);
        Ok(doc.expect("written"))
    }

    pub fn user_doc(&self, id: &str) -> Result<UserDoc, ApiError> {
        let p = child(USERS, id, "user")?;
        let v = self.store.get(&p).ok_or_else(|| ApiError::not_found(format!("user {id:?}")))?;
        v.decode().map_err(|e| ApiError::internal(e.to_string()))
    }

    pub fn user_exists(&self, id: &str) -> bool {
        at(USERS, &[id]).ok().and_then(|p| self.store.get(&p)).is_some()
    }

    /// Stored user overlaid with the current interest profile.
    pub fn user_profile(&self, id: &str) -> Result<UserProfile, ApiError> {
        let doc = self.user_doc(id)?;
        let rec = self.recommender.lock();
        let profile = rec.profile(id);
        Ok(UserProfile {
            id: doc.id,
            display_name: doc.display_name,
            interest_weights: profile.map(|p| p.weights.clone()).unwrap_or_default(),
            group_id: profile.and_then(|p| p.group_id),
        })
    }

    // events

    pub fn event_doc(&self, id: &str) -> Result<Option<EventDoc>, ApiError> {
        let p = child(EVENTS, id, "event")?;
        match self.store.get(&p) {
            None => Ok(None),
            Some(v) => v.decode().map(Some).map_err(|e| ApiError::internal(e.to_string())),
        }
    }

    pub fn event(&self, id: &str) -> Result<EventDoc, ApiError> {
        self.event_doc(id)?.ok_or_else(|| ApiError::not_found(format!("event {id:?}")))
    }

    /// Validates and stores a new event. Moderation, indexing and
    /// recommendations follow asynchronously through the triggers.
    pub fn create_event(&self, req: NewEvent) -> Result<EventDoc, ApiError> {
        let creator = req.creator.trim().to_owned();
        let draft = EventDraft {
            title: req.title.trim().to_owned(),
            description: req.description,
            tags: normalize_tags(&req.tags),
            start_hour: req.start_hour,
            day_of_week: req.day_of_week.unwrap_or_else(|| day_of_week(req.start_date)),
            start_date: req.start_date,
            location: req.location,
            participants: BTreeSet::from([creator.clone()]),
            creator,
            status: EventStatus::Active,
        };
        if let Verdict::Rejected(v) = validate_event(&draft) {
            let msg: Vec<String> = v.iter().map(ToString::to_string).collect();
            return Err(ApiError::validation(msg.join("; ")));
        }
        if !self.user_exists(&draft.creator) {
            return Err(ApiError::not_found(format!("user {:?}", draft.creator)));
        }
        let id = generate_id();
        let wall = now_wall();
        let mut out = None;
        self.store.put_with(&at(EVENTS, &[&id])?, |rev| {
            let doc = EventDoc { record: draft.into_record(id.clone(), rev), created_wall: wall };
            let v = DocumentValue::encode(&doc).expect("event doc");
            out = Some(doc);
            v
        })?;
        Ok(out.expect("written"))
    }

    /// Adds `user` to the participants. Joining twice is a no-op.
    pub fn join(&self, event_id: &str, user: &str) -> Result<EventDoc, ApiError> {
        self.change_participation(event_id, user, true)
    }

    pub fn leave(&self, event_id: &str, user: &str) -> Result<EventDoc, ApiError> {
        self.change_participation(event_id, user, false)
    }

    fn change_participation(&self, event_id: &str, user: &str, join: bool) -> Result<EventDoc, ApiError> {
        if !self.user_exists(user) {
            return Err(ApiError::not_found(format!("user {user:?}")));
        }
        let doc = self.event(event_id)?;
        let e = &doc.record;
        if join && e.status != EventStatus::Active {
            return Err(ApiError::conflict(format!("event {event_id:?} is not open")));
        }
        if !join && e.creator == user {
            return Err(ApiError::conflict("the creator cannot leave their own event"));
        }
        let p = at(EVENTS, &[event_id, "participants", user])?;
        // repeating a join or leave changes nothing and records nothing
        let changed = if join {
            self.store.put_if_absent(&p, true.into())?.is_some()
        } else {
            self.store.update(&p, |old| old.map(|_| DocumentValue::Null))?.is_some()
        };
        if changed {
            let action = if join { Action::Join } else { Action::Decline };
            self.record_sample(user, e, action, BTreeSet::new())?;
        }
        self.event(event_id)
    }

    /// Appends an interaction sample; the recommender picks it up through
    /// its trigger.
    pub fn record_sample(
        &self,
        user: &str,
        e: &EventRecord,
        action: Action,
        filter_tags: BTreeSet<String>,
    ) -> Result<u64, ApiError> {
        let base = SampleDoc {
            user_id: user.to_owned(),
            event_id: e.id.clone(),
            action,
            filter_tags,
            event_tags: e.tags.clone(),
            at: 0,
        };
        if base.sample().is_none() {
            return Err(ApiError::bad_request("inconsistent interaction sample"));
        }
        let p = at(REC_SAMPLES, &[&generate_id()])?;
        Ok(self.store.put_with(&p, |rev| DocumentValue::encode(&SampleDoc { at: rev, ..base }).expect("sample doc"))?)
    }

    /// Writes a notification unless one of the same kind already exists for
    /// this recipient and event. Returns whether it was written.
    pub fn notify(&self, kind: NotificationKind, recipient: &str, e: &EventRecord) -> Result<bool, StoreError> {
        let id = Notification::id_for(kind, &e.id);
        let body = match kind {
            NotificationKind::Recommendation => format!("New event that matches your interests: {}", e.title),
            NotificationKind::SpamFlag => format!("Your event \"{}\" was held for review", e.title),
            NotificationKind::System => e.title.clone(),
        };
        let p = at(NOTIFICATIONS, &[recipient, &id])?;
        let written = self.store.put_if_absent_with(&p, |rev| {
            let n = Notification {
                id,
                recipient: recipient.to_owned(),
                event_id: e.id.clone(),
                kind,
                created_at: rev,
                body,
            };
            DocumentValue::encode(&n).expect("notification doc")
        })?;
        Ok(written.is_some())
    }

    pub fn notifications(&self, user: &str) -> Result<Vec<Notification>, ApiError> {
        let p = child(NOTIFICATIONS, user, "user")?;
        let Some(v) = self.store.get(&p) else { return Ok(Vec::new()) };
        let mut out: Vec<Notification> =
            v.as_map().into_iter().flatten().filter_map(|(_, n)| n.decode::<Notification>().ok()).collect();
        out.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| a.id.cmp(&b.id)));
        Ok(out)
    }

    /// Recommended events for `user`, newest first, skipping events that
    /// are no longer active.
    pub fn recommendations_for(&self, user: &str) -> Result<Vec<EventDoc>, ApiError> {
        if !self.user_exists(user) {
            return Err(ApiError::not_found(format!("user {user:?}")));
        }
        Ok(self
            .notifications(user)?
            .into_iter()
            .filter(|n| n.kind == NotificationKind::Recommendation)
            .filter_map(|n| self.event_doc(&n.event_id).ok().flatten())
            .filter(|d| d.record.status == EventStatus::Active)
            .collect())
    }

    /// Brings the indexes in line with the stored state of one event.
    pub fn reindex_event(&self, id: &str) {
        let doc = self.event_doc(id).ok().flatten();
        match doc.map(|d| d.record).filter(|r| r.status == EventStatus::Active) {
            Some(r) => {
                if let Err(e) = self.geo.write().put_entry(&r.id, geo_entry(&r)) {
                    tracing::warn!(%id, error = %e, "event not geo-indexed");
                }
                self.search.write().index_event(&r);
            }
            None => {
                self.geo.write().remove(id);
                self.search.write().remove_event(id);
            }
        }
    }

    /// Turns active events that have started by `now` into optimizer
    /// training tuples, once each. Returns how many were recorded.
    pub fn sweep_completed(&self, now: NaiveDateTime) -> Result<usize, StoreError> {
        let events = self.store.get(&path(EVENTS));
        let mut recorded = 0;
        for (id, v) in events.as_ref().and_then(DocumentValue::as_map).into_iter().flatten() {
            let Ok(doc) = v.decode::<EventDoc>() else { continue };
            let e = doc.record;
            if e.status != EventStatus::Active {
                continue;
            }
            let Some(start) = e.start_date.and_hms_opt(e.start_hour as u32, 0, 0) else { continue };
            if start > now {
                continue;
            }
            let tuple = TrainingTuple::from_event(&e, self.config.geohash_precision);
            let p = at(OPT_SAMPLES, &[id])?;
            let written = self.store.put_if_absent_with(&p, |rev| {
                DocumentValue::encode(&TupleDoc { tuple, event_id: id.clone(), recorded_at: rev }).expect("tuple doc")
            })?;
            recorded += written.is_some() as usize;
        }
        Ok(recorded)
    }

    /// Counts for `/health` and the `replay` command.
    pub fn stats(&self) -> BTreeMap<&'static str, u64> {
        let rec = self.recommender.lock();
        BTreeMap::from([
            ("revision", self.store.revision()),
            ("geo_points", self.geo.read().len() as u64),
            ("search_docs", self.search.read().doc_count() as u64),
            ("recommender_samples", rec.samples().len() as u64),
            ("recommender_retrains", rec.retrain_count() as u64),
            ("optimizer_tuples", self.optimizer.tuple_count() as u64),
            ("optimizer_retrains", self.optimizer.retrain_count() as u64),
            ("subscribers", self.store.subscriber_count() as u64),
        ])
    }
}
