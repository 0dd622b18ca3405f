//! Embedded document store with a single commit point.
//!
//! Every write gets the next revision number and is, in this order,
//! appended to the change log, applied to the in-memory tree, fanned out to
//! matching subscriptions and queued for matching triggers. All four happen
//! under one lock, so every observer sees changes in revision order.
//!
//! Subscriptions watch the *documents* directly under a root path, e.g.
//! every `/events/{id}`, optionally narrowed by a [`Filter`]. Triggers see
//! raw change events under a path prefix and run on their own worker thread
//! with retries and a dead-letter area.

mod filter;
mod path;
pub mod persist;
mod trigger;
mod value;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc::UnboundedSender;

pub use filter::Filter;
pub use path::{is_valid_segment, DocumentPath};
pub use persist::Persistence;
pub use trigger::{Handler, TriggerId, TriggerStats};
pub use value::DocumentValue;

use trigger::TriggerSlot;

/// Where failed trigger deliveries end up.
pub const DEAD_LETTER_ROOT: &str = "/system/dead_letters";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("write to {path} rejected: {reason}")]
    Rejected { path: String, reason: String },
    #[error("corrupt log at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Created,
    Updated,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub rev: u64,
    pub path: DocumentPath,
    pub kind: ChangeKind,
    /// New value; absent for deletions.
    #[serde(default)]
    pub value: Option<DocumentValue>,
}

/// What a subscription sink receives.
#[derive(Debug, Clone, PartialEq)]
pub enum Delivery {
    /// One per matching document at subscribe time, all `created`.
    Snapshot(ChangeEvent),
    /// Sent once after the snapshot, carrying the revision it reflects.
    SnapshotEnd {
        rev: u64,
    },
    Change(ChangeEvent),
}

pub type SubscriptionId = u64;

/// Validators see the target path and the value about to be written
/// (`None` for deletions) and may refuse with a reason.
pub type Validator = Arc<dyn Fn(&DocumentPath, Option<&DocumentValue>) -> Result<(), String> + Send + Sync>;

#[derive(Debug, Clone)]
pub struct StoreConfig {
    /// Persistence directory; `None` keeps everything in memory.
    pub dir: Option<PathBuf>,
    /// Write a snapshot every this many commits (0 disables).
    pub snapshot_every: u64,
    /// fsync the log after every record.
    pub sync: bool,
    /// Retries after the first failed trigger invocation.
    pub trigger_retries: u32,
    pub retry_backoff: Duration,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            dir: None,
            snapshot_every: 1000,
            sync: false,
            trigger_retries: 3,
            retry_backoff: Duration::from_millis(20),
        }
    }
}

struct Subscription {
    root: DocumentPath,
    filter: Option<Filter>,
    sink: UnboundedSender<Delivery>,
}

struct Inner {
    tree: DocumentValue,
    rev: u64,
    persistence: Option<Persistence>,
    subscriptions: BTreeMap<SubscriptionId, Subscription>,
    triggers: Vec<TriggerSlot>,
    validators: Vec<(DocumentPath, Validator)>,
    next_id: u64,
}

/// A document key and its value before a write.
type DocState = (String, Option<DocumentValue>);

pub struct Store {
    inner: Mutex<Inner>,
    config: StoreConfig,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("rev", &self.revision()).field("config", &self.config).finish()
    }
}

/// Documents under `root` touched by a write at `path`.
fn affected_docs(inner_tree: &DocumentValue, root: &DocumentPath, path: &DocumentPath) -> Vec<String> {
    if path.len() > root.len() && path.starts_with(root) {
        return vec![path.segments()[root.len()].clone()];
    }
    if root.starts_with(path) {
        return inner_tree
            .get_path(root.segments())
            .and_then(DocumentValue::as_map)
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default();
    }
    Vec::new()
}

impl Store {
    pub fn in_memory() -> Self {
        Self::open(StoreConfig::default()).expect("in-memory store cannot fail")
    }

    /// Opens a store, recovering any state found in `config.dir`.
    pub fn open(config: StoreConfig) -> Result<Self, StoreError> {
        let (tree, rev, persistence) = match &config.dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let (tree, rev) = persist::recover(dir)?;
                (tree, rev, Some(Persistence::open(dir, config.sync)?))
            }
            None => (DocumentValue::empty_map(), 0, None),
        };
        Ok(Store {
            inner: Mutex::new(Inner {
                tree,
                rev,
                persistence,
                subscriptions: BTreeMap::new(),
                triggers: Vec::new(),
                validators: Vec::new(),
                next_id: 1,
            }),
            config,
        })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    /// Revision of the latest commit; 0 for an empty store.
    pub fn revision(&self) -> u64 {
        self.inner.lock().rev
    }

    pub fn get(&self, path: &DocumentPath) -> Option<DocumentValue> {
        self.inner.lock().tree.get_path(path.segments()).cloned()
    }

    /// Value with the revision it was read at.
    pub fn get_at(&self, path: &DocumentPath) -> (Option<DocumentValue>, u64) {
        let inner = self.inner.lock();
        (inner.tree.get_path(path.segments()).cloned(), inner.rev)
    }

    /// Copy of the whole tree.
    pub fn export(&self) -> DocumentValue {
        self.inner.lock().tree.clone()
    }

    /// Writes `value` at `path`. Writing `Null` or `{}` deletes.
    pub fn put(&self, path: &DocumentPath, value: DocumentValue) -> Result<u64, StoreError> {
        let mut inner = self.inner.lock();
        self.commit(&mut inner, path, value)
    }

    /// Like [`Store::put`], with the value built from the revision it will
    /// be committed at (for `created_at`-style fields).
    pub fn put_with(&self, path: &DocumentPath, build: impl FnOnce(u64) -> DocumentValue) -> Result<u64, StoreError> {
        let mut inner = self.inner.lock();
        let value = build(inner.rev + 1);
        self.commit(&mut inner, path, value)
    }

    /// Writes only if nothing is stored at `path`; `None` when it was taken.
    pub fn put_if_absent(&self, path: &DocumentPath, value: DocumentValue) -> Result<Option<u64>, StoreError> {
        let mut inner = self.inner.lock();
        if inner.tree.get_path(path.segments()).is_some() {
            return Ok(None);
        }
        self.commit(&mut inner, path, value).map(Some)
    }

    /// [`Store::put_if_absent`] with the value built from its revision.
    pub fn put_if_absent_with(
        &self,
        path: &DocumentPath,
        build: impl FnOnce(u64) -> DocumentValue,
    ) -> Result<Option<u64>, StoreError> {
        let mut inner = self.inner.lock();
        if inner.tree.get_path(path.segments()).is_some() {
            return Ok(None);
        }
        let value = build(inner.rev + 1);
        self.commit(&mut inner, path, value).map(Some)
    }

    /// Read-modify-write under the commit lock. `f` returns the new value,
    /// or `None` to leave the path untouched. Keep `f` short.
    pub fn update<F>(&self, path: &DocumentPath, f: F) -> Result<Option<u64>, StoreError>
    where
        F: FnOnce(Option<&DocumentValue>) -> Option<DocumentValue>,
    {
        let mut inner = self.inner.lock();
        let Some(next) = f(inner.tree.get_path(path.segments())) else {
            return Ok(None);
        };
        self.commit(&mut inner, path, next).map(Some)
    }

    /// Removes the subtree at `path`. Deleting nothing is a no-op that
    /// returns the current revision and emits no change.
    pub fn delete(&self, path: &DocumentPath) -> Result<u64, StoreError> {
        let mut inner = self.inner.lock();
        self.commit(&mut inner, path, DocumentValue::Null)
    }

    fn commit(&self, inner: &mut Inner, path: &DocumentPath, value: DocumentValue) -> Result<u64, StoreError> {
        let value = if value.is_absent() { None } else { Some(value) };
        let before = inner.tree.get_path(path.segments());
        let kind = match (before, &value) {
            (None, None) => return Ok(inner.rev),
            (_, None) => ChangeKind::Deleted,
            (None, Some(_)) => ChangeKind::Created,
            (Some(_), Some(_)) => ChangeKind::Updated,
        };
        for (prefix, validator) in &inner.validators {
            if path.starts_with(prefix) {
                validator(path, value.as_ref())
                    .map_err(|reason| StoreError::Rejected { path: path.to_string(), reason })?;
            }
        }

        // document states before the write, per subscription
        let watched: Vec<(SubscriptionId, Vec<DocState>)> = inner
            .subscriptions
            .iter()
            .map(|(id, sub)| {
                let docs = affected_docs(&inner.tree, &sub.root, path)
                    .into_iter()
                    .map(|d| {
                        let old = inner.tree.get_path(sub.root.segments()).and_then(|r| r.as_map()?.get(&d)).cloned();
                        (d, old)
                    })
                    .collect();
                (*id, docs)
            })
            .collect();

        let event = ChangeEvent { rev: inner.rev + 1, path: path.clone(), kind, value };
        if let Some(p) = inner.persistence.as_mut() {
            p.append(&event)?;
        }
        inner.rev = event.rev;
        persist::apply(&mut inner.tree, &event);

        let mut closed = Vec::new();
        for (id, docs) in watched {
            let sub = &inner.subscriptions[&id];
            let mut extra: Vec<String> = Vec::new();
            if sub.root.starts_with(path) {
                // a write above the root may also create documents
                if let Some(m) = inner.tree.get_path(sub.root.segments()).and_then(DocumentValue::as_map) {
                    let seen: BTreeSet<&String> = docs.iter().map(|(d, _)| d).collect();
                    extra = m.keys().filter(|k| !seen.contains(k)).cloned().collect();
                }
            }
            let all = docs.into_iter().chain(extra.into_iter().map(|d| (d, None)));
            let mut deliveries: Vec<ChangeEvent> = Vec::new();
            for (doc, old) in all {
                let new = inner.tree.get_path(sub.root.segments()).and_then(|r| r.as_map()?.get(&doc));
                let pass = |v: &DocumentValue| sub.filter.as_ref().is_none_or(|f| f.matches(v));
                let was = old.as_ref().is_some_and(pass);
                let is = new.is_some_and(pass);
                let kind = match (was, is) {
                    (false, true) => ChangeKind::Created,
                    (true, true) => ChangeKind::Updated,
                    (true, false) => ChangeKind::Deleted,
                    (false, false) => continue,
                };
                let doc_path = sub.root.child(&doc).expect("stored keys are valid segments");
                let value = if kind == ChangeKind::Deleted { None } else { new.cloned() };
                deliveries.push(ChangeEvent { rev: event.rev, path: doc_path, kind, value });
            }
            deliveries.sort_by(|a, b| a.path.cmp(&b.path));
            for d in deliveries {
                if sub.sink.send(Delivery::Change(d)).is_err() {
                    closed.push(id);
                    break;
                }
            }
        }
        for id in closed {
            inner.subscriptions.remove(&id);
            tracing::debug!(id, "subscriber gone, unsubscribed");
        }

        for slot in &inner.triggers {
            if event.path.starts_with(&slot.prefix) {
                slot.enqueue(event.clone());
            }
        }

        if self.config.snapshot_every > 0 && event.rev.is_multiple_of(self.config.snapshot_every) {
            let rev = event.rev;
            let Inner { persistence, tree, .. } = inner;
            if let Some(p) = persistence.as_mut() {
                if let Err(e) = p.snapshot(tree, rev) {
                    tracing::warn!(rev, error = %e, "snapshot failed");
                }
            }
        }
        Ok(event.rev)
    }

    /// Streams the documents under `root` that satisfy `filter`: first a
    /// snapshot of current matches, then every change in revision order.
    /// A document that starts matching arrives as `created`, one that stops
    /// matching as `deleted`. Dropping the receiver unsubscribes.
    pub fn subscribe(
        &self,
        root: &DocumentPath,
        filter: Option<Filter>,
        sink: UnboundedSender<Delivery>,
    ) -> SubscriptionId {
        let mut inner = self.inner.lock();
        let rev = inner.rev;
        if let Some(docs) = inner.tree.get_path(root.segments()).and_then(DocumentValue::as_map) {
            for (key, doc) in docs {
                if filter.as_ref().is_none_or(|f| f.matches(doc)) {
                    let ev = ChangeEvent {
                        rev,
                        path: root.child(key).expect("stored keys are valid segments"),
                        kind: ChangeKind::Created,
                        value: Some(doc.clone()),
                    };
                    let _ = sink.send(Delivery::Snapshot(ev));
                }
            }
        }
        let _ = sink.send(Delivery::SnapshotEnd { rev });
        let id = inner.next_id;
        inner.next_id += 1;
        inner.subscriptions.insert(id, Subscription { root: root.clone(), filter, sink });
        id
    }

    pub fn unsubscribe(&self, id: SubscriptionId) -> bool {
        self.inner.lock().subscriptions.remove(&id).is_some()
    }

    /// Live subscriptions, after pruning ones whose receiver is gone.
    pub fn subscriber_count(&self) -> usize {
        let mut inner = self.inner.lock();
        inner.subscriptions.retain(|_, s| !s.sink.is_closed());
        inner.subscriptions.len()
    }

    /// Refuses writes under `prefix` for which `validator` errs.
    pub fn register_validator(&self, prefix: &DocumentPath, validator: Validator) {
        self.inner.lock().validators.push((prefix.clone(), validator));
    }

    /// Runs `handler` on its own thread for every change under `prefix`,
    /// one at a time in revision order. Failures are retried
    /// `trigger_retries` times, then recorded under [`DEAD_LETTER_ROOT`].
    pub fn register_trigger(self: &Arc<Self>, name: &str, prefix: &DocumentPath, handler: Handler) -> TriggerId {
        let mut inner = self.inner.lock();
        let id = inner.triggers.len();
        let slot = TriggerSlot::spawn(
            id,
            name,
            prefix.clone(),
            handler,
            Arc::downgrade(self),
            self.config.trigger_retries,
            self.config.retry_backoff,
        );
        inner.triggers.push(slot);
        id
    }

    pub fn trigger_stats(&self) -> Vec<TriggerStats> {
        self.inner.lock().triggers.iter().map(TriggerSlot::stats).collect()
    }

    /// Waits until every queued trigger invocation has finished.
    pub fn wait_for_triggers(&self, timeout: Duration) -> bool {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            if self.trigger_stats().iter().all(|s| s.pending == 0) {
                return true;
            }
            if std::time::Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(1));
        }
    }

    /// Forces a snapshot now (no-op in memory).
    pub fn snapshot(&self) -> Result<(), StoreError> {
        let mut inner = self.inner.lock();
        let rev = inner.rev;
        let Inner { persistence, tree, .. } = &mut *inner;
        match persistence.as_mut() {
            Some(p) => p.snapshot(tree, rev),
            None => Ok(()),
        }
    }
}
