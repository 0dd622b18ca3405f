//! Shared domain types and the ingestion-time validation rules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub type UserId = String;
pub type EventId = String;

const ID_ALPHABET: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz-_";
pub const ID_LEN: usize = 20;

/// Fresh 20-character URL-safe random id.
pub fn generate_id() -> String {
    let mut rng = rand::thread_rng();
    (0..ID_LEN).map(|_| ID_ALPHABET[rng.gen_range(0..ID_ALPHABET.len())] as char).collect()
}

/// True when `s` can be used as a document key: `[A-Za-z0-9_-]+`.
pub fn is_valid_key(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Lowercases and trims tags, dropping the ones that end up empty.
pub fn normalize_tags<I, S>(tags: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    tags.into_iter().map(|t| t.as_ref().trim().to_lowercase()).filter(|t| !t.is_empty()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Builds a point, wrapping `lon` into `[-180, 180)`. Latitude outside
    /// `[-90, 90]` or non-finite input is rejected.
    pub fn new(lat: f64, lon: f64) -> Result<Self, ModelError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(ModelError::Latitude(lat));
        }
        if !lon.is_finite() {
            return Err(ModelError::Longitude(lon));
        }
        Ok(GeoPoint { lat, lon: normalize_lon(lon) })
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && self.lon.is_finite()
            && (-180.0..180.0).contains(&self.lon)
    }
}

pub fn normalize_lon(lon: f64) -> f64 {
    let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventStatus {
    Active,
    FlaggedSpam,
    Cancelled,
}

/// Sets are stored as `{key: true}` maps so they fit the document tree.
pub mod set_as_map {
    use std::collections::{BTreeMap, BTreeSet};

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(set: &BTreeSet<String>, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, bool> = set.iter().map(|k| (k.as_str(), true)).collect();
        map.serialize(s)
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Map(BTreeMap<String, serde_json::Value>),
        List(Vec<String>),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeSet<String>, D::Error> {
        Ok(match Option::<Repr>::deserialize(d)? {
            None => BTreeSet::new(),
            Some(Repr::Map(m)) => m
                .into_iter()
                .filter(|(_, v)| !matches!(v, serde_json::Value::Null | serde_json::Value::Bool(false)))
                .map(|(k, _)| k)
                .collect(),
            Some(Repr::List(v)) => v.into_iter().collect(),
        })
    }
}

/// An event before it has been assigned an id and a revision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDraft {
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(with = "set_as_map", default)]
    pub tags: BTreeSet<String>,
    pub start_hour: u8,
    /// 0 = Monday.
    pub day_of_week: u8,
    pub start_date: NaiveDate,
    pub location: GeoPoint,
    pub creator: UserId,
    #[serde(with = "set_as_map", default)]
    pub participants: BTreeSet<UserId>,
    pub status: EventStatus,
}

impl EventDraft {
    pub fn into_record(self, id: EventId, created_at: u64) -> EventRecord {
        EventRecord {
            id,
            title: self.title,
            description: self.description,
            tags: self.tags,
            start_hour: self.start_hour,
            day_of_week: self.day_of_week,
            start_date: self.start_date,
            location: self.location,
            creator: self.creator,
            participants: self.participants,
            status: self.status,
            created_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: EventId,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(with = "set_as_map", default)]
    pub tags: BTreeSet<String>,
    pub start_hour: u8,
    pub day_of_week: u8,
    pub start_date: NaiveDate,
    pub location: GeoPoint,
    pub creator: UserId,
    #[serde(with = "set_as_map", default)]
    pub participants: BTreeSet<UserId>,
    pub status: EventStatus,
    pub created_at: u64,
}

impl EventRecord {
    pub fn draft(&self) -> EventDraft {
        EventDraft {
            title: self.title.clone(),
            description: self.description.clone(),
            tags: self.tags.clone(),
            start_hour: self.start_hour,
            day_of_week: self.day_of_week,
            start_date: self.start_date,
            location: self.location,
            creator: self.creator.clone(),
            participants: self.participants.clone(),
            status: self.status,
        }
    }

    /// Text fed to the tokenizer by search and moderation.
    pub fn text(&self) -> String {
        format!("{} {}", self.title, self.description)
    }
}

/// 0 = Monday, 6 = Sunday.
pub fn day_of_week(date: NaiveDate) -> u8 {
    date.weekday().num_days_from_monday() as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: UserId,
    pub display_name: String,
    #[serde(default)]
    pub interest_weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub group_id: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotificationKind {
    Recommendation,
    SpamFlag,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub id: String,
    pub recipient: UserId,
    pub event_id: EventId,
    pub kind: NotificationKind,
    pub created_at: u64,
    pub body: String,
}

impl Notification {
    /// Deterministic id: at most one notification of a kind per
    /// (recipient, event) pair.
    pub fn id_for(kind: NotificationKind, event_id: &str) -> String {
        let prefix = match kind {
            NotificationKind::Recommendation => "rec",
            NotificationKind::SpamFlag => "spam",
            NotificationKind::System => "sys",
        };
        format!("{prefix}_{event_id}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    SearchFiltered,
    View,
    Join,
    Decline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSample {
    pub user_id: UserId,
    pub event_id: EventId,
    pub action: Action,
    #[serde(with = "set_as_map", default)]
    pub filter_tags: BTreeSet<String>,
    pub at: u64,
}

impl InteractionSample {
    pub fn new(
        user_id: impl Into<UserId>,
        event_id: impl Into<EventId>,
        action: Action,
        filter_tags: BTreeSet<String>,
        at: u64,
    ) -> Result<Self, ModelError> {
        let s = InteractionSample { user_id: user_id.into(), event_id: event_id.into(), action, filter_tags, at };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let searching = self.action == Action::SearchFiltered;
        if self.filter_tags.is_empty() == searching {
            return Err(ModelError::FilterTags);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("latitude {0} out of range")]
    Latitude(f64),
    #[error("longitude {0} is not finite")]
    Longitude(f64),
    #[error("filter_tags must be non-empty exactly for search_filtered samples")]
    FilterTags,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Violation { field: field.to_owned(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Rejected(Vec<Violation>),
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok)
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            Verdict::Ok => &[],
            Verdict::Rejected(v) => v,
        }
    }
}

/// Checks every field range and record invariant of a candidate event.
pub fn validate_event(e: &EventDraft) -> Verdict {
    let mut out = Vec::new();
    if e.title.trim().is_empty() {
        out.push(Violation::new("title", "empty"));
    }
    if !e.location.lat.is_finite() || !(-90.0..=90.0).contains(&e.location.lat) {
        out.push(Violation::new("location.lat", "out of range"));
    }
    if !e.location.lon.is_finite() || !(-180.0..180.0).contains(&e.location.lon) {
        out.push(Violation::new("location.lon", "out of range"));
    }
    if e.start_hour > 23 {
        out.push(Violation::new("start_hour", "out of range"));
    }
    if e.day_of_week > 6 {
        out.push(Violation::new("day_of_week", "out of range"));
    } else if day_of_week(e.start_date) != e.day_of_week {
        out.push(Violation::new("day_of_week", "inconsistent with start_date"));
    }
    let active = e.status == EventStatus::Active;
    if active && e.tags.is_empty() {
        out.push(Violation::new("tags", "empty"));
    }
    for tag in &e.tags {
        if !is_valid_key(tag) || tag.bytes().any(|b| b.is_ascii_uppercase()) {
            out.push(Violation::new("tags", format!("invalid tag {tag:?}")));
        }
    }
    if !is_valid_key(&e.creator) {
        out.push(Violation::new("creator", "invalid user id"));
    }
    for p in &e.participants {
        if !is_valid_key(p) {
            out.push(Violation::new("participants", format!("invalid user id {p:?}")));
        }
    }
    if active && !e.participants.contains(&e.creator) {
        out.push(Violation::new("participants", "missing creator"));
    }
    if out.is_empty() {
        Verdict::Ok
    } else {
        Verdict::Rejected(out)
    }
}
