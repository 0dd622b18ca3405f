//! Demo data for `hikester seed`.

use std::path::Path;

use chrono::NaiveDate;
use hikester_core::GeoPoint;
use serde::Serialize;

use crate::app::{App, AppError, NewEvent, NewUser};
use crate::error::ApiError;

#[derive(Debug, thiserror::Error)]
pub enum SeedError {
    #[error(transparent)]
    App(#[from] AppError),
    #[error("{}", .0.message)]
    Api(ApiError),
}

impl From<ApiError> for SeedError {
    fn from(e: ApiError) -> Self {
        SeedError::Api(e)
    }
}

#[derive(Debug, Default, Serialize)]
pub struct SeedReport {
    pub users: usize,
    pub events: usize,
    pub joins: usize,
}

const USERS: [(&str, &str); 6] = [
    ("alice", "Alice"),
    ("bruno", "Bruno"),
    ("chen", "Chen"),
    ("dara", "Dara"),
    ("emeka", "Emeka"),
    ("freya", "Freya"),
];

// title, tags, lat, lon, date, hour, creator
type DemoEvent = (&'static str, &'static [&'static str], f64, f64, (i32, u32, u32), u8, &'static str);
const EVENTS: [DemoEvent; 8] = [
    ("Sunrise ridge walk", &["hiking", "sunrise"], 46.558, 7.835, (2026, 6, 6), 5, "alice"),
    ("Lakeside trail run", &["running", "lake"], 46.686, 7.863, (2026, 6, 7), 8, "bruno"),
    ("Glacier day hike", &["hiking", "glacier"], 46.537, 7.962, (2026, 6, 13), 7, "chen"),
    ("Evening bouldering", &["climbing"], 46.620, 7.900, (2026, 6, 10), 18, "dara"),
    ("Family forest loop", &["hiking", "family"], 47.376, 8.541, (2026, 6, 14), 10, "emeka"),
    ("Ridge trail run", &["running", "hiking"], 46.600, 7.900, (2026, 6, 20), 7, "freya"),
    ("Via ferrata intro", &["climbing", "hiking"], 46.650, 7.860, (2026, 6, 21), 9, "alice"),
    ("Night sky walk", &["hiking", "astronomy"], 46.560, 7.900, (2026, 6, 27), 21, "bruno"),
];

/// Trains the spam model from `corpus`, then adds demo users, events and
/// joins. Users that already exist are kept.
pub fn seed(app: &App, corpus: &Path) -> Result<SeedReport, SeedError> {
    app.train_spam_model(corpus)?;
    let mut report = SeedReport::default();
    for (id, name) in USERS {
        match app.create_user(NewUser { id: Some(id.into()), display_name: name.into() }) {
            Ok(_) => report.users += 1,
            Err(e) if e.code == "conflict" => {}
            Err(e) => return Err(e.into()),
        }
    }
    let mut ids = Vec::new();
    for (title, tags, lat, lon, (y, m, d), hour, creator) in EVENTS {
        let doc = app.create_event(NewEvent {
            title: title.into(),
            description: format!("{title}, all levels welcome."),
            tags: tags.iter().map(|t| t.to_string()).collect(),
            start_date: NaiveDate::from_ymd_opt(y, m, d).expect("valid date"),
            start_hour: hour,
            day_of_week: None,
            location: GeoPoint { lat, lon },
            creator: creator.into(),
        })?;
        ids.push(doc.record.id);
        report.events += 1;
    }
    for (i, id) in ids.iter().enumerate() {
        for (j, (user, _)) in USERS.iter().enumerate() {
            if (i + j) % 3 == 0 && app.join(id, user).is_ok() {
                report.joins += 1;
            }
        }
    }
    Ok(report)
}
