use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Weak};
use std::thread;
use std::time::Duration;

use crate::{is_valid_segment, ChangeEvent, DocumentPath, DocumentValue, Store, DEAD_LETTER_ROOT};

/// Trigger handler. Must tolerate seeing the same revision twice.
pub type Handler = Arc<dyn Fn(&ChangeEvent) -> Result<(), String> + Send + Sync>;

pub type TriggerId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerStats {
    pub id: TriggerId,
    pub name: String,
    /// Queued or running.
    pub pending: u64,
    pub invocations: u64,
    pub failures: u64,
    pub dead_letters: u64,
}

#[derive(Default)]
struct Counters {
    pending: AtomicU64,
    invocations: AtomicU64,
    failures: AtomicU64,
    dead_letters: AtomicU64,
}

pub(crate) struct TriggerSlot {
    id: TriggerId,
    name: String,
    pub(crate) prefix: DocumentPath,
    tx: Sender<ChangeEvent>,
    counters: Arc<Counters>,
}

impl TriggerSlot {
    pub(crate) fn spawn(
        id: TriggerId,
        name: &str,
        prefix: DocumentPath,
        handler: Handler,
        store: Weak<Store>,
        retries: u32,
        backoff: Duration,
    ) -> Self {
        let (tx, rx) = channel::<ChangeEvent>();
        let counters = Arc::new(Counters::default());
        let c = counters.clone();
        let label = name.to_owned();
        thread::Builder::new()
            .name(format!("trigger-{name}"))
            .spawn(move || {
                // ends when the store (and with it the sender) is dropped
                for ev in rx {
                    let mut attempts = 0;
                    let outcome = loop {
                        attempts += 1;
                        c.invocations.fetch_add(1, Ordering::Relaxed);
                        match handler(&ev) {
                            Ok(()) => break Ok(()),
                            Err(e) => {
                                c.failures.fetch_add(1, Ordering::Relaxed);
                                tracing::warn!(trigger = %label, rev = ev.rev, attempts, error = %e, "trigger failed");
                                if attempts > retries {
                                    break Err(e);
                                }
                                thread::sleep(backoff * attempts);
                            }
                        }
                    };
                    if let Err(error) = outcome {
                        c.dead_letters.fetch_add(1, Ordering::Relaxed);
                        if let Some(store) = store.upgrade() {
                            dead_letter(&store, &label, &ev, &error, attempts);
                        }
                    }
                    c.pending.fetch_sub(1, Ordering::AcqRel);
                }
            })
            .expect("spawn trigger worker");
        TriggerSlot { id, name: name.to_owned(), prefix, tx, counters }
    }

    pub(crate) fn enqueue(&self, ev: ChangeEvent) {
        self.counters.pending.fetch_add(1, Ordering::AcqRel);
        if self.tx.send(ev).is_err() {
            self.counters.pending.fetch_sub(1, Ordering::AcqRel);
        }
    }

    pub(crate) fn stats(&self) -> TriggerStats {
        let c = &self.counters;
        TriggerStats {
            id: self.id,
            name: self.name.clone(),
            pending: c.pending.load(Ordering::Acquire),
            invocations: c.invocations.load(Ordering::Relaxed),
            failures: c.failures.load(Ordering::Relaxed),
            dead_letters: c.dead_letters.load(Ordering::Relaxed),
        }
    }
}

fn dead_letter(store: &Store, trigger: &str, ev: &ChangeEvent, error: &str, attempts: u32) {
    let safe: String = trigger.chars().map(|ch| if is_valid_segment(&ch.to_string()) { ch } else { '_' }).collect();
    let key = format!("{safe}_{}", ev.rev);
    let record = serde_json::json!({
        "trigger": trigger,
        "rev": ev.rev,
        "path": ev.path.to_string(),
        "error": error,
        "attempts": attempts,
    });
    let path = DocumentPath::parse(DEAD_LETTER_ROOT).and_then(|root| root.child(&key));
    let written = path.and_then(|p| store.put(&p, DocumentValue::from_json(record)?));
    if let Err(e) = written {
        tracing::error!(trigger, rev = ev.rev, error = %e, "could not record dead letter");
    }
}
